"""Error-rate and conditional-perplexity evaluation, plus report tables.

WER tokenization is whitespace words after NFC, no punctuation stripping
(altering target-language orthography would silently corrupt comparisons);
character-level rates are available through unit="char". Corpus WER pools
counts (total edits / total reference words); corpus perplexity is
token-weighted, exp(total NLL / total tokens). Both definitions are declared
in every report footer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import NBestList, TrainSample
from .errors import EmptyReference, MissingReference, ScorerUnavailable
from .prompt import PromptSpec, render_context
from .retrieval import RetrievalPlan, resolve_retrieval
from .scorer import batch_score
from .text import char_tokens, count_words, word_tokens


@dataclass(frozen=True)
class WerBreakdown:
    substitutions: int
    insertions: int
    deletions: int
    ref_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        if self.ref_words == 0:
            return 0.0
        return self.errors / self.ref_words

    def __add__(self, other: "WerBreakdown") -> "WerBreakdown":
        return WerBreakdown(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_words + other.ref_words,
        )


def edit_distance(ref: list[str], hyp: list[str]) -> WerBreakdown:
    """Minimal S+I+D alignment with unit costs. Ties prefer substitution,
    then deletion, then insertion, making breakdowns deterministic."""
    nref, nhyp = len(ref), len(hyp)
    if nref == 0:
        if nhyp:
            raise EmptyReference("non-empty hypothesis against an empty reference")
        return WerBreakdown(0, 0, 0, 0)
    # Row cells are (total, subs, ins, dels).
    prev = [(j, 0, j, 0) for j in range(nhyp + 1)]
    for i in range(1, nref + 1):
        rtok = ref[i - 1]
        cur = [(i, 0, 0, i)]
        for j in range(1, nhyp + 1):
            diag = prev[j - 1]
            sub = 0 if rtok == hyp[j - 1] else 1
            bt, bs, bi, bd = diag[0] + sub, diag[1] + sub, diag[2], diag[3]
            up = prev[j]
            if up[0] + 1 < bt:
                bt, bs, bi, bd = up[0] + 1, up[1], up[2], up[3] + 1
            left = cur[j - 1]
            if left[0] + 1 < bt:
                bt, bs, bi, bd = left[0] + 1, left[1], left[2] + 1, left[3]
            cur.append((bt, bs, bi, bd))
        prev = cur
    _, s, i_, d = prev[nhyp]
    return WerBreakdown(substitutions=s, insertions=i_, deletions=d, ref_words=nref)


def utterance_wer(reference: str, hypothesis: str, unit: str = "word") -> WerBreakdown:
    tok = word_tokens if unit == "word" else char_tokens
    return edit_distance(tok(reference), tok(hypothesis))


def corpus_wer(pairs: list[tuple[str, str]], unit: str = "word") -> WerBreakdown:
    """Pooled counts over (reference, chosen hypothesis) pairs."""
    total = WerBreakdown(0, 0, 0, 0)
    for ref, hyp in pairs:
        total = total + utterance_wer(ref, hyp, unit)
    return total


@dataclass
class PerplexityReport:
    """Token-weighted conditional perplexity over a test set."""

    utt_nll: dict[str, float] = field(default_factory=dict)
    utt_tokens: dict[str, int] = field(default_factory=dict)
    excluded: list[tuple[str, str]] = field(default_factory=list)
    truncated_utts: int = 0

    @property
    def total_tokens(self) -> int:
        return sum(self.utt_tokens.values())

    @property
    def total_nll(self) -> float:
        return math.fsum(self.utt_nll.values())

    @property
    def corpus_ppl(self) -> float:
        m = self.total_tokens
        if m == 0:
            return float("nan")
        return math.exp(self.total_nll / m)


def conditional_perplexity(
    train: list[TrainSample],
    tests: list[NBestList],
    plan: RetrievalPlan,
    scorer,
    prompt_spec: PromptSpec,
    embedder=None,
    counter=count_words,
    jobs: int = 1,
) -> PerplexityReport:
    """Per utterance: retrieve ICL samples, render the context, score the
    reference as the continuation; only reference tokens are scored.

    Scorer failures exclude the utterance and are listed in the report.
    Utterances whose sample list had to be cut for budget count as truncated.
    Scoring fans out over `jobs` concurrent requests; results stay ordered.
    """
    for t in tests:
        if t.reference is None:
            raise MissingReference(f"utterance {t.utt_id!r} has no reference")
    resolution = resolve_retrieval(plan, train, tests, embedder)
    report = PerplexityReport()
    scorable: list[NBestList] = []
    requests: list[tuple[str, str]] = []
    for t in tests:
        context, n_kept = render_context(resolution[t.utt_id], train, prompt_spec, counter)
        if n_kept < len(resolution[t.utt_id].sample_ids):
            report.truncated_utts += 1
        if not t.reference:
            report.excluded.append((t.utt_id, "empty reference"))
            continue
        scorable.append(t)
        requests.append((context, t.reference))
    results = batch_score(requests, scorer, max_in_flight=max(1, jobs))
    for t, tlp in zip(scorable, results):
        if isinstance(tlp, ScorerUnavailable):
            report.excluded.append((t.utt_id, str(tlp)))
            continue
        report.utt_nll[t.utt_id] = -tlp.total
        report.utt_tokens[t.utt_id] = len(tlp)
    return report


@dataclass
class ReportCell:
    value: float | None = None
    marker: str | None = None  # "BUDGET" when the requested cell exceeded budget
    excluded: int = 0

    def rendered(self) -> str:
        if self.marker:
            return self.marker
        if self.value is None:
            return ""
        return f"{self.value:.6f}"


@dataclass
class ReportTable:
    """Rows are (dataset, strategy/mode); columns are sample counts or
    selectors. Renders to CSV and JSON with a declaration footer."""

    title: str
    rows: list[str]
    cols: list[str]
    cells: dict[tuple[str, str], ReportCell] = field(default_factory=dict)
    footnotes: list[str] = field(default_factory=list)

    def set(self, row: str, col: str, cell: ReportCell) -> None:
        if row not in self.rows:
            self.rows.append(row)
        if col not in self.cols:
            self.cols.append(col)
        self.cells[(row, col)] = cell

    def get(self, row: str, col: str) -> ReportCell:
        return self.cells[(row, col)]

    def to_csv_text(self) -> str:
        lines = [",".join(["row"] + [str(c) for c in self.cols])]
        for r in self.rows:
            cells = [self.cells.get((r, c), ReportCell()).rendered() for c in self.cols]
            lines.append(",".join([r] + cells))
        total_excluded = sum(c.excluded for c in self.cells.values())
        if total_excluded:
            lines.append(f"# excluded utterances: {total_excluded}")
        for note in self.footnotes:
            lines.append(f"# {note}")
        return "\n".join(lines) + "\n"

    def to_json_obj(self) -> dict:
        return {
            "title": self.title,
            "rows": self.rows,
            "cols": self.cols,
            "cells": [
                {
                    "row": r,
                    "col": c,
                    "value": cell.value,
                    "marker": cell.marker,
                    "excluded": cell.excluded,
                }
                for (r, c), cell in sorted(self.cells.items())
            ],
            "footnotes": self.footnotes,
        }

    def write(self, out_dir: str | Path, basename: str) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{basename}.csv"
        json_path = out_dir / f"{basename}.json"
        csv_path.write_text(self.to_csv_text(), encoding="utf-8")
        json_path.write_text(
            json.dumps(self.to_json_obj(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return csv_path, json_path


PPL_FOOTER = "corpus perplexity is token-weighted: exp(total NLL / total reference tokens)"
WER_FOOTER = "corpus WER pools counts: (subs + ins + dels) / total reference words"
