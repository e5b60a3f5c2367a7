"""Deterministic reference backends.

Every operation is a pure function of (model identifier, request), which is
what makes the service's determinism contract testable end to end. These
reference implementations have no ML dependencies; heavier backends register
under new identifier schemes without touching the HTTP layer.
"""

from __future__ import annotations

import math
import re
import string
import zlib

_PIECE_RE = re.compile(r"\s*\S+\s*")


def pieces(text: str) -> list[str]:
    """Whitespace-preserving segmentation: concatenation reconstructs the
    input exactly."""
    if not text:
        return []
    out = _PIECE_RE.findall(text)
    if not out:  # whitespace-only input
        return [text]
    return out


class CharBigramLM:
    """Character-bigram LM with a seeded prior; counts adapt to the context.

    Log-probs are teacher-forced per character and reported grouped into
    whitespace-preserving pieces so that token concatenation reconstructs
    the continuation.
    """

    ALPHABET = 256
    GEN_CANDIDATES = string.ascii_lowercase + string.digits + " \n"

    def __init__(self, seed: int):
        self.seed = seed
        self._seed_bytes = str(seed).encode("utf-8")

    def _prior(self, prev: str, cur: str) -> float:
        h = zlib.crc32(
            self._seed_bytes + b"\x1f" + prev.encode("utf-8") + b"\x1f" + cur.encode("utf-8")
        )
        return 0.5 + h / 2**32

    def _counts(self, text: str):
        pair_counts: dict[tuple[str, str], int] = {}
        row_counts: dict[str, int] = {}
        prev = ""
        for ch in text:
            pair = (prev, ch)
            pair_counts[pair] = pair_counts.get(pair, 0) + 1
            row_counts[prev] = row_counts.get(prev, 0) + 1
            prev = ch
        return pair_counts, row_counts

    def _char_logprob(self, pair_counts, row_counts, prev: str, ch: str) -> float:
        num = pair_counts.get((prev, ch), 0) + self._prior(prev, ch)
        den = row_counts.get(prev, 0) + self.ALPHABET
        return math.log(num / den)

    def logprobs(self, context: str, continuation: str) -> tuple[list[str], list[float]]:
        """Per-piece log-probs of the continuation given the context."""
        pair_counts, row_counts = self._counts(context)
        prev = context[-1] if context else ""
        toks = pieces(continuation)
        out: list[float] = []
        for piece in toks:
            total = 0.0
            for ch in piece:
                total += self._char_logprob(pair_counts, row_counts, prev, ch)
                pair_counts[(prev, ch)] = pair_counts.get((prev, ch), 0) + 1
                row_counts[prev] = row_counts.get(prev, 0) + 1
                prev = ch
            out.append(total)
        return toks, out

    def generate(self, prompt: str, max_tokens: int) -> str:
        """Greedy decoding, one character per token, deterministic."""
        pair_counts, row_counts = self._counts(prompt)
        prev = prompt[-1] if prompt else ""
        candidates = sorted(set(self.GEN_CANDIDATES) | set(prompt))
        out: list[str] = []
        for _ in range(max_tokens):
            best_ch, best_lp = None, -math.inf
            for ch in candidates:
                lp = self._char_logprob(pair_counts, row_counts, prev, ch)
                if lp > best_lp:
                    best_ch, best_lp = ch, lp
            out.append(best_ch)
            pair_counts[(prev, best_ch)] = pair_counts.get((prev, best_ch), 0) + 1
            row_counts[prev] = row_counts.get(prev, 0) + 1
            prev = best_ch
        return "".join(out)


class HashEmbedder:
    """Fixed-dimension embeddings from hashed trigrams.

    Text embeds over character trigrams, audio bytes over byte trigrams —
    one shared output space, so dimensions always agree across modalities.
    """

    def __init__(self, dim: int):
        if dim <= 0:
            raise ValueError("embedding dim must be positive")
        self.dim = dim

    def _accumulate(self, grams: list[bytes]) -> list[float]:
        vec = [0.0] * self.dim
        for g in grams:
            h = zlib.crc32(g)
            bucket = (h >> 1) % self.dim
            sign = 1.0 if h & 1 else -1.0
            vec[bucket] += sign
        return vec

    def embed_text(self, text: str) -> list[float]:
        data = ("\x02" + text + "\x03").encode("utf-8")
        vec = self._accumulate([data[i: i + 3] for i in range(len(data) - 2)])
        # Tiny integer-offset bias: guarantees a nonzero vector.
        vec[zlib.crc32(data) % self.dim] += 1e-3
        return vec

    def embed_audio(self, data: bytes) -> list[float]:
        framed = b"\x02" + data + b"\x03"
        vec = self._accumulate([framed[i: i + 3] for i in range(len(framed) - 2)])
        vec[zlib.crc32(framed) % self.dim] += 1e-3
        return vec


def make_lm(identifier: str) -> CharBigramLM | None:
    if identifier == "none":
        return None
    scheme, _, arg = identifier.partition(":")
    if scheme == "bigram":
        return CharBigramLM(seed=int(arg or "0"))
    raise ValueError(f"unknown LM identifier {identifier!r}")


def make_embedder(identifier: str) -> HashEmbedder | None:
    if identifier == "none":
        return None
    scheme, _, arg = identifier.partition(":")
    if scheme == "hash":
        return HashEmbedder(dim=int(arg or "16"))
    raise ValueError(f"unknown embedder identifier {identifier!r}")
