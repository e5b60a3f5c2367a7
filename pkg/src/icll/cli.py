"""Command-line entry point.

Subcommands: validate | ppl | rerank | train-ngram | embed-cache.
Settings come from an optional JSON config file plus flag overrides (flags
win; the ICLL_SCORER_URL env var overrides the config endpoint). All
randomness is seeded from the config — reruns with identical inputs produce
byte-identical outputs, except timestamps, which live in run_meta.json only.

Exit codes: 0 ok, 1 run-level failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import corpus as corpus_mod
from .errors import EmptyCorpus, IcllError, ScorerUnavailable
from .evaluate import (
    PPL_FOOTER,
    WER_FOOTER,
    ReportCell,
    ReportTable,
    conditional_perplexity,
    corpus_wer,
)
from .ngram import train_kn, write_arpa, read_arpa
from .prompt import (
    PromptSpec,
    SampleOrder,
    build_instruction_prompt,
    build_lm_context,
    load_default_template,
    load_template,
)
from .rerank import RerankResult, SelectionMode, rerank_nbest
from .retrieval import (
    EmbeddingCache,
    RemoteEmbedder,
    RetrievalPlan,
    Strategy,
    resolve_retrieval,
)
from .scorer import MockScorer, NGramScorer, RemoteScorer, UniformScorer
from .text import count_words, word_tokens


@dataclass
class RunConfig:
    manifest: Path | None = None
    strategy: Strategy = Strategy.EXAMPLE_HYP
    sweep: list[int] = field(default_factory=lambda: [0, 1, 5, 10])
    num_samples: int = 10
    k: int = 3
    seed: int = 0
    scorer: str = "mock"
    endpoint: str | None = None
    model: str = "default"
    arpa: Path | None = None
    modes: list[SelectionMode] = field(
        default_factory=lambda: [SelectionMode.ACOUSTIC_ONLY, SelectionMode.FUSED]
    )
    out_dir: Path = Path("out")
    token_budget: int | None = None
    nbest_cap: int | None = 10
    jobs: int = 1
    sample_order: SampleOrder = SampleOrder.SIMILARITY_ASCENDING
    ngram_order: int = 5
    embed_cache: Path | None = None
    instruction_template: Path | None = None
    lm_weight: float = 1.0
    lm_length_normalize: bool = False
    normalize_before_sum: bool = False
    cer: bool = False
    strategy_given: bool = False

    def __post_init__(self):
        counts = list(self.sweep)
        if any(c < 0 for c in counts) or counts != sorted(set(counts)):
            raise ValueError("sweep must be strictly increasing non-negative integers")


def _merge_config(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    env_endpoint = os.environ.get("ICLL_SCORER_URL")
    if env_endpoint:
        raw["endpoint"] = env_endpoint

    def pick(name, cast=None, default=None):
        flag = getattr(args, name, None)
        value = flag if flag is not None else raw.get(name, default)
        if value is None:
            return None
        return cast(value) if cast else value

    cfg = RunConfig()
    if pick("manifest") is not None:
        cfg.manifest = Path(pick("manifest"))
    cfg.strategy_given = args.strategy is not None or "strategy" in raw
    cfg.strategy = Strategy(pick("strategy", str, cfg.strategy.value))
    cfg.sweep = [int(x) for x in pick("sweep", list, cfg.sweep)]
    cfg.num_samples = pick("num_samples", int, cfg.num_samples)
    cfg.k = pick("k", int, cfg.k)
    cfg.seed = pick("seed", int, cfg.seed)
    cfg.scorer = pick("scorer", str, cfg.scorer)
    cfg.endpoint = pick("endpoint")
    cfg.model = pick("model", str, cfg.model)
    if pick("arpa") is not None:
        cfg.arpa = Path(pick("arpa"))
    cfg.modes = [SelectionMode(m) for m in pick("modes", list, [m.value for m in cfg.modes])]
    cfg.out_dir = Path(pick("out_dir", str, str(cfg.out_dir)))
    if pick("token_budget") is not None:
        cfg.token_budget = int(pick("token_budget"))
    cap = pick("nbest_cap")
    if cap is not None:
        cfg.nbest_cap = int(cap) if int(cap) > 0 else None
    cfg.jobs = pick("jobs", int, cfg.jobs)
    cfg.sample_order = SampleOrder(pick("sample_order", str, cfg.sample_order.value))
    cfg.ngram_order = pick("ngram_order", int, cfg.ngram_order)
    if pick("embed_cache") is not None:
        cfg.embed_cache = Path(pick("embed_cache"))
    if pick("instruction_template") is not None:
        cfg.instruction_template = Path(pick("instruction_template"))
    cfg.lm_weight = pick("lm_weight", float, cfg.lm_weight)
    cfg.lm_length_normalize = bool(pick("lm_length_normalize", bool, cfg.lm_length_normalize))
    cfg.normalize_before_sum = bool(pick("normalize_before_sum", bool, cfg.normalize_before_sum))
    cfg.cer = bool(pick("cer", bool, cfg.cer))
    cfg.__post_init__()
    return cfg


def _load_dataset(cfg: RunConfig):
    if cfg.manifest is None:
        raise FileNotFoundError("no manifest given (use --manifest or the config file)")
    manifest = corpus_mod.load_manifest(cfg.manifest)
    train = corpus_mod.load_train_corpus(manifest)
    tests = corpus_mod.load_nbest(manifest, cap=cfg.nbest_cap)
    return manifest, train, tests


def _make_scorer(cfg: RunConfig):
    if cfg.scorer == "mock":
        return MockScorer(seed=cfg.seed)
    if cfg.scorer == "uniform":
        return UniformScorer()
    if cfg.scorer == "ngram":
        if cfg.arpa is None:
            raise ValueError("ngram scorer needs --arpa MODEL.arpa")
        return NGramScorer(read_arpa(cfg.arpa))
    if cfg.scorer == "remote":
        if not cfg.endpoint:
            raise ValueError("remote scorer needs --endpoint or ICLL_SCORER_URL")
        return RemoteScorer(cfg.endpoint, model=cfg.model)
    raise ValueError(f"unknown scorer kind {cfg.scorer!r}")


def _make_embedder(cfg: RunConfig):
    remote = RemoteEmbedder(cfg.endpoint) if cfg.endpoint else None
    return EmbeddingCache(path=cfg.embed_cache, remote=remote)


def _write_meta(cfg: RunConfig, command: str) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"command": command, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    (cfg.out_dir / "run_meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _budget(cfg: RunConfig, manifest) -> int:
    return cfg.token_budget if cfg.token_budget is not None else manifest.token_budget


def cmd_validate(cfg: RunConfig) -> int:
    manifest, train, tests = _load_dataset(cfg)
    report = corpus_mod.validate_dataset(train, tests)
    for line in report.lines():
        print(line)
    if not report.ok:
        return 1
    strategy_names = {
        Strategy.CORPUS_HYP: "CorpusHyp",
        Strategy.CORPUS_TOPK: "CorpusTopK",
        Strategy.EXAMPLE_HYP: "ExampleHyp",
        Strategy.EXAMPLE_TOPK: "ExampleTopK",
        Strategy.EXAMPLE_AUDIO: "ExampleAudio",
        Strategy.EXAMPLE_HYP_AUDIO: "ExampleHypAudio",
        Strategy.EXAMPLE_ORACLE: "ExampleOracle",
    }
    wanted = strategy_names.get(cfg.strategy) if cfg.strategy_given else None
    if wanted and wanted in report.unavailable_strategies:
        print(
            f"requested strategy {cfg.strategy.value} unavailable: "
            f"{report.unavailable_strategies[wanted]}"
        )
        return 1
    return 0


def cmd_ppl(cfg: RunConfig) -> int:
    manifest, train, tests = _load_dataset(cfg)
    scorer = _make_scorer(cfg)
    embedder = _make_embedder(cfg)
    prompt_spec = PromptSpec(token_budget=_budget(cfg, manifest), order=cfg.sample_order)
    counter = count_words
    table = ReportTable(
        title="conditional perplexity",
        rows=[f"{manifest.name}/{cfg.strategy.value}"],
        cols=[str(n) for n in cfg.sweep],
        footnotes=[PPL_FOOTER],
    )
    row = table.rows[0]
    had_failures = False
    for n in cfg.sweep:
        plan = RetrievalPlan(
            strategy=cfg.strategy,
            num_samples=n,
            k=cfg.k,
            seed=cfg.seed,
            normalize_before_sum=cfg.normalize_before_sum,
        )
        report = conditional_perplexity(
            train, tests, plan, scorer, prompt_spec,
            embedder=embedder, counter=counter, jobs=cfg.jobs,
        )
        cell = ReportCell(
            value=report.corpus_ppl if report.total_tokens else None,
            marker="BUDGET" if report.truncated_utts else None,
            excluded=len(report.excluded),
        )
        if report.excluded:
            had_failures = True
        table.set(row, str(n), cell)
    csv_path, json_path = table.write(cfg.out_dir, "ppl")
    _write_meta(cfg, "ppl")
    print(f"wrote {csv_path} and {json_path}")
    return 1 if had_failures else 0


def _context_for_mode(cfg, mode, utt, resolution, train, prompt_spec, template):
    if mode in (SelectionMode.ACOUSTIC_ONLY, SelectionMode.ORACLE_WER):
        return ""
    result = resolution[utt.utt_id]
    if mode is SelectionMode.INSTRUCTION:
        return build_instruction_prompt(result, utt, template, train, order=cfg.sample_order)
    return build_lm_context(result, train, prompt_spec)


def cmd_rerank(cfg: RunConfig) -> int:
    manifest, train, tests = _load_dataset(cfg)
    scorer = _make_scorer(cfg)
    embedder = _make_embedder(cfg)
    prompt_spec = PromptSpec(token_budget=_budget(cfg, manifest), order=cfg.sample_order)
    template = (
        load_template(cfg.instruction_template)
        if cfg.instruction_template
        else load_default_template()
    )
    plan = RetrievalPlan(
        strategy=cfg.strategy,
        num_samples=cfg.num_samples,
        k=cfg.k,
        seed=cfg.seed,
        normalize_before_sum=cfg.normalize_before_sum,
    )
    needs_retrieval = any(
        m in (SelectionMode.LM_ONLY, SelectionMode.FUSED, SelectionMode.INSTRUCTION)
        for m in cfg.modes
    )
    resolution = resolve_retrieval(plan, train, tests, embedder) if needs_retrieval else {}

    have_refs = all(t.reference is not None for t in tests)
    unit = "char" if cfg.cer else "word"
    wer_table = ReportTable(
        title="corpus WER by selection mode",
        rows=[manifest.name],
        cols=[],
        footnotes=[WER_FOOTER + (" (character level)" if cfg.cer else "")],
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    mode_wer: dict[SelectionMode, float] = {}
    had_failures = False
    for mode in cfg.modes:
        if mode is SelectionMode.ORACLE_WER and not have_refs:
            print("skipping oracle-wer: references missing")
            continue
        def rerank_one(utt):
            context = _context_for_mode(cfg, mode, utt, resolution, train, prompt_spec, template)
            try:
                return rerank_nbest(
                    utt,
                    mode,
                    scorer=scorer,
                    context=context,
                    lm_weight=cfg.lm_weight,
                    lm_length_normalize=cfg.lm_length_normalize,
                )
            except ScorerUnavailable as e:
                return e

        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                outcomes = list(pool.map(rerank_one, tests))
        else:
            outcomes = [rerank_one(u) for u in tests]

        results: list[RerankResult] = []
        excluded = 0
        pairs = []
        fallbacks = 0
        for utt, res in zip(tests, outcomes):
            if isinstance(res, ScorerUnavailable):
                print(f"utterance {utt.utt_id} unscored: {res}", file=sys.stderr)
                excluded += 1
                had_failures = True
                continue
            results.append(res)
            fallbacks += int(res.fallback)
            if utt.reference is not None:
                pairs.append((utt.reference, utt.hypotheses[res.chosen].text))
        out = cfg.out_dir / f"rerank_{mode.value}.jsonl"
        with open(out, "w", encoding="utf-8") as f:
            for res in results:
                f.write(json.dumps(res.to_obj(), sort_keys=True) + "\n")
        if pairs:
            breakdown = corpus_wer(pairs, unit=unit)
            mode_wer[mode] = breakdown.wer
            wer_table.set(
                manifest.name,
                mode.value,
                ReportCell(value=breakdown.wer, excluded=excluded),
            )
        if fallbacks:
            wer_table.footnotes.append(
                f"instruction fallbacks to acoustic: {fallbacks}/{len(results)}"
            )
    if mode_wer:
        csv_path, json_path = wer_table.write(cfg.out_dir, "wer")
        print(f"wrote {csv_path} and {json_path}")
    _write_meta(cfg, "rerank")
    if SelectionMode.ORACLE_WER in mode_wer:
        oracle = mode_wer[SelectionMode.ORACLE_WER]
        for mode, wer in mode_wer.items():
            if wer < oracle - 1e-12:
                print(
                    f"invariant violation: oracle WER {oracle} > {mode.value} WER {wer}",
                    file=sys.stderr,
                )
                return 1
    return 1 if had_failures else 0


def cmd_train_ngram(cfg: RunConfig) -> int:
    manifest, train, _ = _load_dataset(cfg)
    sentences = [word_tokens(s.text) for s in train]
    try:
        model = train_kn(sentences, order=cfg.ngram_order)
    except EmptyCorpus as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    arpa_path = cfg.out_dir / f"{manifest.name}.arpa"
    write_arpa(model, arpa_path)
    ppl = model.corpus_perplexity(sentences)
    print(f"wrote {arpa_path}")
    print(f"training perplexity (tokens + sentence end): {ppl:.6f}")
    _write_meta(cfg, "train-ngram")
    return 0


def cmd_embed_cache(cfg: RunConfig) -> int:
    if not cfg.endpoint:
        print("embed-cache needs --endpoint or ICLL_SCORER_URL", file=sys.stderr)
        return 2
    if cfg.embed_cache is None:
        print("embed-cache needs --embed-cache PATH to write to", file=sys.stderr)
        return 2
    manifest, train, tests = _load_dataset(cfg)
    embedder = _make_embedder(cfg)
    texts: list[str] = []
    for t in tests:
        texts.extend(h.text for h in t.hypotheses)
        if t.reference:
            texts.append(t.reference)
    added = 0
    for text in texts:
        if text and text not in embedder:
            embedder.embed(text)
            added += 1
    print(f"cached {added} new embeddings ({len(embedder)} total) in {cfg.embed_cache}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icll", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--manifest", help="dataset manifest JSON")
        sp.add_argument("--strategy", choices=[s.value for s in Strategy])
        sp.add_argument("--num-samples", dest="num_samples", type=int)
        sp.add_argument("--sweep", type=int, nargs="+", help="sample counts for ppl")
        sp.add_argument("--k", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--scorer", choices=["mock", "uniform", "ngram", "remote"])
        sp.add_argument("--endpoint", help="remote service URL")
        sp.add_argument("--model", help="remote model name")
        sp.add_argument("--arpa", help="ARPA model for the ngram scorer")
        sp.add_argument("--modes", nargs="+", choices=[m.value for m in SelectionMode])
        sp.add_argument("--out-dir", dest="out_dir")
        sp.add_argument("--token-budget", dest="token_budget", type=int)
        sp.add_argument("--nbest-cap", dest="nbest_cap", type=int, help="0 disables the cap")
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--sample-order", dest="sample_order", choices=[o.value for o in SampleOrder])
        sp.add_argument("--ngram-order", dest="ngram_order", type=int)
        sp.add_argument("--embed-cache", dest="embed_cache")
        sp.add_argument("--instruction-template", dest="instruction_template")
        sp.add_argument("--lm-weight", dest="lm_weight", type=float)
        sp.add_argument("--lm-length-normalize", dest="lm_length_normalize", action="store_const", const=True)
        sp.add_argument("--normalize-before-sum", dest="normalize_before_sum", action="store_const", const=True)
        sp.add_argument("--cer", action="store_const", const=True)

    for name in ("validate", "ppl", "rerank", "train-ngram", "embed-cache"):
        common(sub.add_parser(name))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
    except (ValueError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    handlers = {
        "validate": cmd_validate,
        "ppl": cmd_ppl,
        "rerank": cmd_rerank,
        "train-ngram": cmd_train_ngram,
        "embed-cache": cmd_embed_cache,
    }
    try:
        return handlers[args.command](cfg)
    except (FileNotFoundError, json.JSONDecodeError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 2
    except ScorerUnavailable as e:
        print(f"scorer unavailable: {e}", file=sys.stderr)
        return 1
    except IcllError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
