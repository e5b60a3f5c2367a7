"""Sample retrieval over embedding cosine similarity.

Corpus-level strategies produce one ranking shared by every test utterance;
example-level strategies rank per utterance. All rankings are exact scans
(corpora stay small enough that exactness beats index complexity), most
similar first, ties broken by corpus order.

All functions are pure over immutable corpora; per-utterance selection may be
parallelized freely. The embedding cache allows concurrent reads and
serializes writes.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .corpus import NBestList, TrainSample
from .errors import (
    DegenerateEmbedding,
    DimMismatch,
    InsufficientHypotheses,
    InsufficientSamples,
    MissingEmbedding,
    MissingReference,
)
from .remote import check_absolute_url, post_json


class Strategy(str, Enum):
    RANDOM = "random"
    CORPUS_HYP = "corpus-hyp"
    CORPUS_TOPK = "corpus-topk"
    EXAMPLE_HYP = "example-hyp"
    EXAMPLE_TOPK = "example-topk"
    EXAMPLE_AUDIO = "example-audio"
    EXAMPLE_HYP_AUDIO = "example-hyp-audio"
    EXAMPLE_ORACLE = "example-oracle"

    @property
    def corpus_level(self) -> bool:
        return self in (Strategy.RANDOM, Strategy.CORPUS_HYP, Strategy.CORPUS_TOPK)


class ExampleKey(str, Enum):
    HYP = "hyp"
    TOPK = "topk"
    AUDIO = "audio"
    HYP_AUDIO = "hyp-audio"
    ORACLE = "oracle"


_EXAMPLE_KEYS = {
    Strategy.EXAMPLE_HYP: ExampleKey.HYP,
    Strategy.EXAMPLE_TOPK: ExampleKey.TOPK,
    Strategy.EXAMPLE_AUDIO: ExampleKey.AUDIO,
    Strategy.EXAMPLE_HYP_AUDIO: ExampleKey.HYP_AUDIO,
    Strategy.EXAMPLE_ORACLE: ExampleKey.ORACLE,
}


@dataclass(frozen=True)
class RetrievalPlan:
    """Which strategy, how many ICL samples, and the knobs that shape it."""

    strategy: Strategy
    num_samples: int
    k: int = 3
    seed: int = 0
    normalize_before_sum: bool = False

    def __post_init__(self):
        if self.num_samples < 0:
            raise ValueError("num_samples must be non-negative")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class RetrievalResult:
    """Ordered selection: most similar sample first."""

    utt_id: str
    sample_ids: tuple[str, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.sample_ids) != len(self.scores):
            raise ValueError("sample_ids and scores must be parallel")
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ValueError("sample_ids must be distinct")
        if any(self.scores[i] < self.scores[i + 1] for i in range(len(self.scores) - 1)):
            raise ValueError("scores must be non-increasing")


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"vector dims differ: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateEmbedding("cosine similarity of a zero-norm vector")
    return float(np.clip(float(np.dot(a, b)) / (na * nb), -1.0, 1.0))


def _require(vec: np.ndarray | None, what: str) -> np.ndarray:
    if vec is None:
        raise MissingEmbedding(what)
    return vec


def _nonzero(vec: np.ndarray, what: str) -> np.ndarray:
    if float(np.dot(vec, vec)) == 0.0:
        raise DegenerateEmbedding(what)
    return vec


def _matrix(vectors: list[np.ndarray]) -> np.ndarray:
    dims = {v.shape[0] for v in vectors}
    if len(dims) > 1:
        raise DimMismatch(f"mixed embedding dims {sorted(dims)}")
    return np.stack(vectors)


def _cosine_matrix(keys: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Pairwise cosines, shape (n_keys, n_queries)."""
    if keys.shape[1] != queries.shape[1]:
        raise DimMismatch(
            f"key dim {keys.shape[1]} != query dim {queries.shape[1]}"
        )
    knorm = np.linalg.norm(keys, axis=1)
    qnorm = np.linalg.norm(queries, axis=1)
    if np.any(knorm == 0.0) or np.any(qnorm == 0.0):
        raise DegenerateEmbedding("zero-norm vector in similarity scan")
    return (keys @ queries.T) / np.outer(knorm, qnorm)


def _ranked_result(
    utt_id: str, train: list[TrainSample], scores: np.ndarray, n: int | None
) -> RetrievalResult:
    order = np.argsort(-scores, kind="stable")
    if n is not None:
        order = order[:n]
    return RetrievalResult(
        utt_id=utt_id,
        sample_ids=tuple(train[i].id for i in order),
        scores=tuple(float(scores[i]) for i in order),
    )


def _train_text_matrix(train: list[TrainSample]) -> np.ndarray:
    missing = [s.id for s in train if s.text_embedding is None]
    if missing:
        raise MissingEmbedding(
            f"{len(missing)} train samples lack text_embedding (first: {missing[0]!r})"
        )
    return _matrix([s.text_embedding for s in train])


def _train_audio_matrix(train: list[TrainSample]) -> np.ndarray:
    missing = [s.id for s in train if s.audio_embedding is None]
    if missing:
        raise MissingEmbedding(
            f"{len(missing)} train samples lack audio_embedding (first: {missing[0]!r})"
        )
    return _matrix([s.audio_embedding for s in train])


def select_random(train: list[TrainSample], n: int, seed: int) -> RetrievalResult:
    """Seeded sample without replacement; scores are all zero."""
    if n > len(train):
        raise InsufficientSamples(f"requested {n} of {len(train)} train samples")
    rng = random.Random(seed)
    idx = list(range(len(train)))
    # Partial Fisher-Yates: deterministic by construction for a fixed seed.
    for i in range(n):
        j = rng.randrange(i, len(idx))
        idx[i], idx[j] = idx[j], idx[i]
    chosen = idx[:n]
    return RetrievalResult(
        utt_id="corpus",
        sample_ids=tuple(train[i].id for i in chosen),
        scores=tuple(0.0 for _ in chosen),
    )


def top_k_neighbors(
    query, train: list[TrainSample], n: int, utt_id: str = "query"
) -> RetrievalResult:
    """Exact top-n train samples by cosine to `query` over text embeddings."""
    if n > len(train):
        raise InsufficientSamples(f"requested {n} of {len(train)} train samples")
    q = np.asarray(query, dtype=np.float64)
    _nonzero(q, "zero-norm query vector")
    scores = _cosine_matrix(_train_text_matrix(train), q[None, :])[:, 0]
    return _ranked_result(utt_id, train, scores, n)


def _hyp_queries(utt: NBestList, k: int, embedder) -> np.ndarray:
    if k > len(utt.hypotheses):
        raise InsufficientHypotheses(
            f"utterance {utt.utt_id!r}: k={k} > {len(utt.hypotheses)} hypotheses"
        )
    return _matrix([embedder.embed(h.text) for h in utt.hypotheses[:k]])


def corpus_rank_hyp(
    train: list[TrainSample], tests: list[NBestList], embedder
) -> RetrievalResult:
    """One corpus-wide ranking: mean over test utterances of the cosine
    between each utterance's best-hypothesis embedding and the sample."""
    queries = _matrix([embedder.embed(t.best.text) for t in tests])
    sims = _cosine_matrix(_train_text_matrix(train), queries)
    return _ranked_result("corpus", train, sims.mean(axis=1), n=None)


def corpus_rank_topk(
    train: list[TrainSample], tests: list[NBestList], k: int, embedder
) -> RetrievalResult:
    """One corpus-wide ranking: sum of cosines over every test utterance's
    top-k hypotheses."""
    queries = np.concatenate([_hyp_queries(t, k, embedder) for t in tests])
    sims = _cosine_matrix(_train_text_matrix(train), queries)
    return _ranked_result("corpus", train, sims.sum(axis=1), n=None)


def example_select(
    train: list[TrainSample],
    utt: NBestList,
    key: ExampleKey,
    n: int,
    k: int = 3,
    embedder=None,
    normalize_before_sum: bool = False,
) -> RetrievalResult:
    """Per-utterance selection with the given query key, top n most similar."""
    if n > len(train):
        raise InsufficientSamples(f"requested {n} of {len(train)} train samples")

    if key is ExampleKey.HYP:
        q = embedder.embed(utt.best.text)
        scores = _cosine_matrix(_train_text_matrix(train), q[None, :])[:, 0]
    elif key is ExampleKey.TOPK:
        queries = _hyp_queries(utt, k, embedder)
        scores = _cosine_matrix(_train_text_matrix(train), queries).mean(axis=1)
    elif key is ExampleKey.AUDIO:
        q = _require(utt.audio_embedding, f"utterance {utt.utt_id!r} lacks audio_embedding")
        scores = _cosine_matrix(_train_audio_matrix(train), q[None, :])[:, 0]
    elif key is ExampleKey.HYP_AUDIO:
        text_q = _nonzero(
            np.asarray(embedder.embed(utt.best.text), dtype=np.float64),
            "zero-norm hypothesis text embedding",
        )
        audio_q = _nonzero(
            _require(utt.audio_embedding, f"utterance {utt.utt_id!r} lacks audio_embedding"),
            f"utterance {utt.utt_id!r}: zero-norm audio embedding",
        )
        text_m = _train_text_matrix(train)
        audio_m = _train_audio_matrix(train)
        for s, row_t, row_a in zip(train, text_m, audio_m):
            _nonzero(row_t, f"train sample {s.id!r}: zero-norm text embedding")
            _nonzero(row_a, f"train sample {s.id!r}: zero-norm audio embedding")
        if normalize_before_sum:
            text_q = text_q / np.linalg.norm(text_q)
            audio_q = audio_q / np.linalg.norm(audio_q)
            text_m = text_m / np.linalg.norm(text_m, axis=1, keepdims=True)
            audio_m = audio_m / np.linalg.norm(audio_m, axis=1, keepdims=True)
        q = text_q + audio_q
        keys = text_m + audio_m
        scores = _cosine_matrix(keys, q[None, :])[:, 0]
    elif key is ExampleKey.ORACLE:
        if utt.reference is None:
            raise MissingReference(f"utterance {utt.utt_id!r} has no reference")
        q = embedder.embed(utt.reference)
        scores = _cosine_matrix(_train_text_matrix(train), q[None, :])[:, 0]
    else:  # pragma: no cover
        raise ValueError(f"unknown key {key}")

    return _ranked_result(utt.utt_id, train, scores, n)


def resolve_retrieval(
    plan: RetrievalPlan,
    train: list[TrainSample],
    tests: list[NBestList],
    embedder=None,
) -> dict[str, RetrievalResult]:
    """Resolve a plan to one RetrievalResult per utterance. Corpus-level
    strategies share a single result object across all utterances."""
    if plan.num_samples > len(train):
        raise InsufficientSamples(
            f"num_samples={plan.num_samples} > corpus size {len(train)}"
        )
    if plan.strategy is Strategy.RANDOM:
        shared = select_random(train, plan.num_samples, plan.seed)
        return {t.utt_id: shared for t in tests}
    if plan.strategy is Strategy.CORPUS_HYP:
        full = corpus_rank_hyp(train, tests, embedder)
        shared = _prefix(full, plan.num_samples)
        return {t.utt_id: shared for t in tests}
    if plan.strategy is Strategy.CORPUS_TOPK:
        full = corpus_rank_topk(train, tests, plan.k, embedder)
        shared = _prefix(full, plan.num_samples)
        return {t.utt_id: shared for t in tests}
    key = _EXAMPLE_KEYS[plan.strategy]
    return {
        t.utt_id: example_select(
            train,
            t,
            key,
            plan.num_samples,
            k=plan.k,
            embedder=embedder,
            normalize_before_sum=plan.normalize_before_sum,
        )
        for t in tests
    }


def _prefix(result: RetrievalResult, n: int) -> RetrievalResult:
    return RetrievalResult(
        utt_id=result.utt_id,
        sample_ids=result.sample_ids[:n],
        scores=result.scores[:n],
    )


class RemoteEmbedder:
    """Client for the sidecar's /v1/embed endpoint."""

    def __init__(self, endpoint: str, timeout: float = 30.0, max_retries: int = 3):
        self.endpoint = check_absolute_url(endpoint)
        self.timeout = timeout
        self.max_retries = max_retries

    def embed_text(self, text: str) -> np.ndarray:
        obj = post_json(
            f"{self.endpoint}/v1/embed",
            {"text": text},
            timeout=self.timeout,
            max_retries=self.max_retries,
        )
        vec = np.asarray(obj["embedding"], dtype=np.float64)
        vec.flags.writeable = False
        return vec


class EmbeddingCache:
    """Text-keyed embedding store backed by a JSONL file.

    Keys are exact text strings. Misses go to the remote embed endpoint when
    one is configured (and are appended to the file), else MissingEmbedding.
    Reads are lock-free on the underlying dict; writes are serialized.
    """

    def __init__(self, path: str | Path | None = None, remote: RemoteEmbedder | None = None):
        self.path = Path(path) if path is not None else None
        self.remote = remote
        self._entries: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    vec = np.asarray(obj["embedding"], dtype=np.float64)
                    vec.flags.writeable = False
                    self._entries[obj["text"]] = vec

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, text: str) -> bool:
        return text in self._entries

    def embed(self, text: str) -> np.ndarray:
        hit = self._entries.get(text)
        if hit is not None:
            return hit
        if self.remote is None:
            raise MissingEmbedding(f"no cached embedding for text {text!r}")
        vec = self.remote.embed_text(text)
        self.add(text, vec)
        return vec

    def add(self, text: str, vec) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        vec.flags.writeable = False
        with self._lock:
            if text in self._entries:
                return
            self._entries[text] = vec
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(
                        json.dumps({"text": text, "embedding": vec.tolist()}, ensure_ascii=False)
                        + "\n"
                    )
