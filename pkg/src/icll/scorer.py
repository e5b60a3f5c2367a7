"""LM scoring contract: conditional token log-probs of a continuation.

Three implementations share the contract:

* UniformScorer  — every character costs ln(1/256); context-free. Pins down
  perplexity arithmetic in tests.
* MockScorer     — a seeded character-bigram model that counts bigrams in the
  prompt it is given, so more (and more relevant) context genuinely improves
  its scores. Deterministic, order-sensitive, no ML stack.
* NGramScorer    — adapter over a trained n-gram model and the shared word
  tokenizer.
* RemoteScorer   — client for the sidecar service's /v1/logprobs wire.

Scorers are read-only after construction and safe to share across threads.
Tokenization authority lives with each scorer.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .errors import ScorerUnavailable, TokenizationMismatch
from .remote import check_absolute_url, post_json
from .text import word_tokens

LN_256 = math.log(256.0)


@dataclass(frozen=True)
class TokenLogProbs:
    """Per-token log-probs covering ONLY the continuation."""

    tokens: tuple[str, ...]
    logprobs: tuple[float, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.logprobs):
            raise ValueError("tokens and logprobs must be parallel")
        for lp in self.logprobs:
            if not math.isfinite(lp):
                raise ValueError(f"non-finite log-prob {lp}")
            if lp > 0.0:
                raise ValueError(f"log-prob {lp} > 0")

    @property
    def total(self) -> float:
        return math.fsum(self.logprobs)

    def __len__(self) -> int:
        return len(self.tokens)


class UniformScorer:
    """Uniform distribution over a nominal 256-symbol alphabet."""

    def score_continuation(self, context: str, continuation: str) -> TokenLogProbs:
        if not continuation:
            raise ValueError("continuation must be non-empty")
        toks = tuple(continuation)
        return TokenLogProbs(tokens=toks, logprobs=tuple(-LN_256 for _ in toks))


class MockScorer:
    """Seeded character-bigram scorer that adapts to its context.

    Bigram counts accumulate over the context plus the already-scored
    continuation prefix; a hash-derived prior (weight in [0.5, 1.5) per pair)
    keeps every score nondegenerate and seed-dependent. The output is a pure
    function of (seed, context, continuation).
    """

    ALPHABET = 256

    def __init__(self, seed: int = 0, alpha: float = 1.0):
        self.seed = seed
        self.alpha = alpha
        self._seed_bytes = str(seed).encode("utf-8")
        # Context bigram counts are pure functions of the context string;
        # memoizing them only saves recounting, never changes a score.
        self._memo: dict[str, tuple[dict, dict]] = {}

    def _prior(self, prev: str, cur: str) -> float:
        h = zlib.crc32(self._seed_bytes + b"\x1f" + prev.encode("utf-8") + b"\x1f" + cur.encode("utf-8"))
        return 0.5 + h / 2**32

    def _context_counts(self, context: str) -> tuple[dict, dict]:
        hit = self._memo.get(context)
        if hit is not None:
            return hit
        pair_counts: dict[tuple[str, str], int] = {}
        row_counts: dict[str, int] = {}
        prev = ""
        for ch in context:
            pair = (prev, ch)
            pair_counts[pair] = pair_counts.get(pair, 0) + 1
            row_counts[prev] = row_counts.get(prev, 0) + 1
            prev = ch
        if len(self._memo) >= 128:
            self._memo.clear()
        self._memo[context] = (pair_counts, row_counts)
        return pair_counts, row_counts

    def score_continuation(self, context: str, continuation: str) -> TokenLogProbs:
        if not continuation:
            raise ValueError("continuation must be non-empty")
        base_pairs, base_rows = self._context_counts(context)
        d_pairs: dict[tuple[str, str], int] = {}
        d_rows: dict[str, int] = {}
        logprobs = []
        denom_pad = self.alpha * self.ALPHABET
        prev = context[-1] if context else ""
        for ch in continuation:
            pair = (prev, ch)
            num = base_pairs.get(pair, 0) + d_pairs.get(pair, 0) + self.alpha * self._prior(prev, ch)
            den = base_rows.get(prev, 0) + d_rows.get(prev, 0) + denom_pad
            logprobs.append(math.log(num / den))
            d_pairs[pair] = d_pairs.get(pair, 0) + 1
            d_rows[prev] = d_rows.get(prev, 0) + 1
            prev = ch
        return TokenLogProbs(tokens=tuple(continuation), logprobs=tuple(logprobs))

    def generate(self, prompt: str, max_tokens: int = 8) -> str:
        """Deterministic stand-in for instruction-mode generation: emits a
        single digit derived from the prompt."""
        digit = zlib.crc32(self._seed_bytes + b"\x1f" + prompt.encode("utf-8")) % 9 + 1
        return str(digit)[: max(1, max_tokens)]


class NGramScorer:
    """Scorer-contract adapter over a trained n-gram model."""

    def __init__(self, model, tokenizer=word_tokens):
        self.model = model
        self.tokenizer = tokenizer

    def score_continuation(self, context: str, continuation: str) -> TokenLogProbs:
        if not continuation:
            raise ValueError("continuation must be non-empty")
        cont_toks = self.tokenizer(continuation)
        if not cont_toks:
            raise ValueError("continuation has no tokens under the shared tokenizer")
        return self.model.logprobs(self.tokenizer(context), cont_toks)


class RemoteScorer:
    """Client for the sidecar service's /v1/logprobs (and /v1/generate)."""

    def __init__(
        self,
        endpoint: str,
        model: str = "default",
        timeout: float = 30.0,
        max_retries: int = 3,
    ):
        self.endpoint = check_absolute_url(endpoint)
        self.model = model
        self.timeout = timeout
        self.max_retries = max_retries

    def _post(self, path: str, payload: dict) -> dict:
        return post_json(
            f"{self.endpoint}{path}",
            payload,
            timeout=self.timeout,
            max_retries=self.max_retries,
        )

    def score_continuation(self, context: str, continuation: str) -> TokenLogProbs:
        if not continuation:
            raise ValueError("continuation must be non-empty")
        obj = self._post(
            "/v1/logprobs",
            {"context": context, "continuation": continuation, "model": self.model},
        )
        tokens = tuple(obj["tokens"])
        if "".join(tokens) != continuation:
            raise TokenizationMismatch(
                f"service tokens do not reconstruct the continuation "
                f"({''.join(tokens)!r} != {continuation!r})"
            )
        return TokenLogProbs(tokens=tokens, logprobs=tuple(float(x) for x in obj["logprobs"]))

    def generate(self, prompt: str, max_tokens: int = 8) -> str:
        obj = self._post("/v1/generate", {"prompt": prompt, "max_tokens": max_tokens})
        return str(obj["text"])

    def count_tokens(self, text: str) -> int:
        obj = self._post("/v1/tokenize", {"text": text})
        return int(obj["count"])


def batch_score(
    requests: list[tuple[str, str]], scorer, max_in_flight: int = 1
) -> list[TokenLogProbs | ScorerUnavailable]:
    """Score (context, continuation) pairs, positionally aligned with the
    input. Per-item scorer failures come back in place of a result."""
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")

    def one(req: tuple[str, str]):
        try:
            return scorer.score_continuation(req[0], req[1])
        except ScorerUnavailable as e:
            return e

    if not requests:
        return []
    if max_in_flight == 1 or len(requests) == 1:
        return [one(r) for r in requests]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(one, requests))
