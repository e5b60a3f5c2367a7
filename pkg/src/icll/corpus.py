"""Data model and JSONL ingestion for training corpora and n-best lists.

Wire formats:
  train line : {"id": str, "text": str, "text_embedding": [f64...]?, "audio_embedding": [f64...]?}
  n-best line: {"utt_id": str, "reference": str?, "audio_embedding": [f64...]?,
                "hypotheses": [{"text": str, "am_logprobs": [f64...]}...]}
  manifest   : JSON object with name, train_path, nbest_path, embedding_dim, token_budget.

Everything is normalized to NFC at load and immutable afterward; loaders are
single-threaded, loaded structures are safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateEmbedding,
    DimMismatch,
    DuplicateId,
    EmptyNBest,
    EmptyScore,
    InvalidLogProb,
)
from .text import nfc

DEFAULT_NBEST_CAP = 10


def _as_vector(raw, *, where: str) -> np.ndarray:
    """Convert a JSON float list to a read-only float64 vector."""
    vec = np.asarray(raw, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise DimMismatch(f"{where}: embedding must be a non-empty flat list")
    if not np.all(np.isfinite(vec)):
        raise DegenerateEmbedding(f"{where}: embedding has non-finite values")
    if float(np.dot(vec, vec)) == 0.0:
        raise DegenerateEmbedding(f"{where}: embedding has zero norm")
    vec.flags.writeable = False
    return vec


def _check_dim(vec: np.ndarray | None, dim: int, *, where: str) -> None:
    if vec is not None and vec.shape[0] != dim:
        raise DimMismatch(f"{where}: embedding dim {vec.shape[0]} != manifest dim {dim}")


@dataclass(frozen=True)
class TrainSample:
    """One training sentence; the retrieval database unit."""

    id: str
    text: str
    text_embedding: np.ndarray | None = None
    audio_embedding: np.ndarray | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"train sample {self.id!r}: text empty after trim")
        if self.text_embedding is not None and self.audio_embedding is not None:
            if self.text_embedding.shape != self.audio_embedding.shape:
                raise DimMismatch(
                    f"train sample {self.id!r}: text/audio embedding dims differ "
                    f"({self.text_embedding.shape[0]} vs {self.audio_embedding.shape[0]})"
                )

    def to_obj(self) -> dict:
        obj: dict = {"id": self.id, "text": self.text}
        if self.text_embedding is not None:
            obj["text_embedding"] = self.text_embedding.tolist()
        if self.audio_embedding is not None:
            obj["audio_embedding"] = self.audio_embedding.tolist()
        return obj


@dataclass(frozen=True)
class Hypothesis:
    """One candidate transcription with its per-step acoustic log-probs."""

    text: str
    am_logprobs: tuple[float, ...]
    am_total: float

    def __post_init__(self):
        if not self.am_logprobs:
            raise EmptyScore("hypothesis with no acoustic log-probs")
        for lp in self.am_logprobs:
            if lp > 0.0:
                raise InvalidLogProb(f"acoustic log-prob {lp} > 0")
        if abs(self.am_total - math.fsum(self.am_logprobs)) > 1e-9:
            raise InvalidLogProb(
                f"cached am_total {self.am_total} disagrees with sum of steps"
            )

    @classmethod
    def from_logprobs(cls, text: str, am_logprobs) -> "Hypothesis":
        steps = tuple(float(x) for x in am_logprobs)
        return cls(text=nfc(text), am_logprobs=steps, am_total=math.fsum(steps))

    def to_obj(self) -> dict:
        return {"text": self.text, "am_logprobs": list(self.am_logprobs)}


@dataclass(frozen=True)
class NBestList:
    """One test utterance's hypotheses, descending by acoustic total."""

    utt_id: str
    hypotheses: tuple[Hypothesis, ...]
    reference: str | None = None
    audio_embedding: np.ndarray | None = None

    def __post_init__(self):
        if not self.hypotheses:
            raise EmptyNBest(f"utterance {self.utt_id!r} has no hypotheses")
        totals = [h.am_total for h in self.hypotheses]
        if any(totals[i] < totals[i + 1] for i in range(len(totals) - 1)):
            raise InvalidLogProb(
                f"utterance {self.utt_id!r}: hypotheses not sorted by am_total"
            )

    @classmethod
    def from_hypotheses(
        cls,
        utt_id: str,
        hypotheses,
        reference: str | None = None,
        audio_embedding: np.ndarray | None = None,
        cap: int | None = DEFAULT_NBEST_CAP,
    ) -> "NBestList":
        """Sort descending by am_total (stable: input order breaks ties) and
        truncate to the best `cap` entries; cap=None keeps everything."""
        hyps = list(hypotheses)
        if not hyps:
            raise EmptyNBest(f"utterance {utt_id!r} has no hypotheses")
        hyps.sort(key=lambda h: h.am_total, reverse=True)
        if cap is not None:
            hyps = hyps[:cap]
        return cls(
            utt_id=utt_id,
            hypotheses=tuple(hyps),
            reference=nfc(reference) if reference is not None else None,
            audio_embedding=audio_embedding,
        )

    @property
    def best(self) -> Hypothesis:
        return self.hypotheses[0]

    def to_obj(self) -> dict:
        obj: dict = {"utt_id": self.utt_id}
        if self.reference is not None:
            obj["reference"] = self.reference
        if self.audio_embedding is not None:
            obj["audio_embedding"] = self.audio_embedding.tolist()
        obj["hypotheses"] = [h.to_obj() for h in self.hypotheses]
        return obj


@dataclass(frozen=True)
class DatasetManifest:
    """Where a dataset lives and the budgets that apply to it."""

    name: str
    train_path: Path
    nbest_path: Path
    embedding_dim: int
    token_budget: int

    def __post_init__(self):
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")
        if self.token_budget <= 0:
            raise ValueError("token_budget must be positive")


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest; relative data paths resolve against the manifest dir."""
    path = Path(path)
    obj = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    return DatasetManifest(
        name=str(obj["name"]),
        train_path=(base / obj["train_path"]).resolve(),
        nbest_path=(base / obj["nbest_path"]).resolve(),
        embedding_dim=int(obj["embedding_dim"]),
        token_budget=int(obj["token_budget"]),
    )


def _iter_jsonl(path: Path):
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {e}") from e


def load_train_corpus(manifest: DatasetManifest) -> list[TrainSample]:
    """Load and validate the training corpus, preserving file order."""
    samples: list[TrainSample] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(manifest.train_path):
        where = f"{manifest.train_path}:{lineno}"
        sid = str(obj["id"])
        if sid in seen:
            raise DuplicateId(f"{where}: duplicate sample id {sid!r}")
        seen.add(sid)
        text_emb = None
        audio_emb = None
        if obj.get("text_embedding") is not None:
            text_emb = _as_vector(obj["text_embedding"], where=where)
            _check_dim(text_emb, manifest.embedding_dim, where=where)
        if obj.get("audio_embedding") is not None:
            audio_emb = _as_vector(obj["audio_embedding"], where=where)
            _check_dim(audio_emb, manifest.embedding_dim, where=where)
        samples.append(
            TrainSample(
                id=sid,
                text=nfc(str(obj["text"])),
                text_embedding=text_emb,
                audio_embedding=audio_emb,
            )
        )
    return samples


def load_nbest(
    manifest: DatasetManifest, cap: int | None = DEFAULT_NBEST_CAP
) -> list[NBestList]:
    """Load n-best lists; hypotheses get sorted descending by am_total and
    truncated to `cap` (pass cap=None to override the default of 10)."""
    lists: list[NBestList] = []
    for lineno, obj in _iter_jsonl(manifest.nbest_path):
        where = f"{manifest.nbest_path}:{lineno}"
        audio_emb = None
        if obj.get("audio_embedding") is not None:
            audio_emb = _as_vector(obj["audio_embedding"], where=where)
            _check_dim(audio_emb, manifest.embedding_dim, where=where)
        raw_hyps = obj.get("hypotheses") or []
        if not raw_hyps:
            raise EmptyNBest(f"{where}: empty hypothesis list")
        hyps = [Hypothesis.from_logprobs(h["text"], h["am_logprobs"]) for h in raw_hyps]
        lists.append(
            NBestList.from_hypotheses(
                utt_id=str(obj["utt_id"]),
                hypotheses=hyps,
                reference=obj.get("reference"),
                audio_embedding=audio_emb,
                cap=cap,
            )
        )
    return lists


def dump_train_corpus(samples, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(json.dumps(s.to_obj(), ensure_ascii=False) + "\n")


def dump_nbest(lists, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for nb in lists:
            f.write(json.dumps(nb.to_obj(), ensure_ascii=False) + "\n")


@dataclass
class ValidationReport:
    """What the loaded dataset can and cannot support."""

    n_train: int = 0
    n_tests: int = 0
    train_missing_text_emb: int = 0
    train_missing_audio_emb: int = 0
    tests_missing_audio_emb: int = 0
    tests_missing_reference: int = 0
    warnings: list[str] = field(default_factory=list)
    fatal: list[str] = field(default_factory=list)
    unavailable_strategies: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.fatal

    @property
    def severity(self) -> str:
        if self.fatal:
            return "fatal"
        if self.warnings or self.unavailable_strategies:
            return "warning"
        return "ok"

    def lines(self) -> list[str]:
        out = [
            f"train samples: {self.n_train}",
            f"test utterances: {self.n_tests}",
            f"train missing text_embedding: {self.train_missing_text_emb}",
            f"train missing audio_embedding: {self.train_missing_audio_emb}",
            f"tests missing audio_embedding: {self.tests_missing_audio_emb}",
            f"tests missing reference: {self.tests_missing_reference}",
        ]
        for name, why in sorted(self.unavailable_strategies.items()):
            out.append(f"strategy unavailable: {name}: {why}")
        for w in self.warnings:
            out.append(f"warning: {w}")
        for m in self.fatal:
            out.append(f"fatal: {m}")
        out.append(f"status: {self.severity}")
        return out


def validate_dataset(train: list[TrainSample], tests: list[NBestList]) -> ValidationReport:
    """Report embedding/reference coverage and which strategies are runnable.

    Never raises; severity flags carry the outcome.
    """
    rep = ValidationReport(n_train=len(train), n_tests=len(tests))
    rep.train_missing_text_emb = sum(1 for s in train if s.text_embedding is None)
    rep.train_missing_audio_emb = sum(1 for s in train if s.audio_embedding is None)
    rep.tests_missing_audio_emb = sum(1 for t in tests if t.audio_embedding is None)
    rep.tests_missing_reference = sum(1 for t in tests if t.reference is None)

    if not train:
        rep.fatal.append("train corpus is empty")
    if not tests:
        rep.fatal.append("no test utterances")

    if rep.train_missing_text_emb:
        why = f"{rep.train_missing_text_emb}/{rep.n_train} train samples lack text_embedding"
        for name in ("CorpusHyp", "CorpusTopK", "ExampleHyp", "ExampleTopK", "ExampleOracle"):
            rep.unavailable_strategies[name] = why
        rep.warnings.append(why)
    if rep.train_missing_audio_emb or rep.tests_missing_audio_emb:
        why = (
            f"{rep.train_missing_audio_emb}/{rep.n_train} train samples and "
            f"{rep.tests_missing_audio_emb}/{rep.n_tests} test utterances lack audio_embedding"
        )
        rep.unavailable_strategies["ExampleAudio"] = why
        rep.unavailable_strategies["ExampleHypAudio"] = why
        rep.warnings.append(why)
    if rep.train_missing_text_emb and "ExampleHypAudio" not in rep.unavailable_strategies:
        rep.unavailable_strategies["ExampleHypAudio"] = (
            f"{rep.train_missing_text_emb}/{rep.n_train} train samples lack text_embedding"
        )
    if rep.tests_missing_reference:
        why = f"{rep.tests_missing_reference}/{rep.n_tests} test utterances lack reference"
        rep.unavailable_strategies["ExampleOracle"] = why
        rep.unavailable_strategies["OracleWer"] = why
        rep.warnings.append(why)
    return rep
