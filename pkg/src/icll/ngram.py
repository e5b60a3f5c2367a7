"""Token-level n-gram language model with modified Kneser-Ney smoothing.

Counting convention: each sentence is padded with order-1 BOS tokens and one
EOS; every real token (including EOS) contributes exactly one counting event
per order, so no gram ever consists of padding alone. The highest order uses
raw counts; lower orders use left-continuation counts, except grams starting
with BOS (nothing can precede BOS, so raw counts stand in).

Discounts come from count-of-count statistics per order (three discounts for
adjusted counts 1, 2 and >=3); when those statistics are degenerate, the
order falls back to a single absolute discount of 0.75. BOS is never
predicted; probabilities are normalized over the remaining vocabulary plus
UNK, and smoothing keeps every conditional probability strictly positive.

Training is single-threaded; a trained model is immutable and shareable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyCorpus
from .scorer import TokenLogProbs

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

FALLBACK_DISCOUNT = 0.75
# ARPA placeholder log10 prob for grams that exist only to carry a backoff
# weight (BOS-initial contexts).
PLACEHOLDER_LOG10 = -99.0

LN10 = math.log(10.0)


@dataclass(frozen=True)
class NGramModel:
    order: int
    vocab: frozenset[str]
    logprob: dict[tuple[str, ...], float]   # natural log P(gram[-1] | gram[:-1])
    backoff: dict[tuple[str, ...], float]   # natural log backoff weight per context
    discounts: dict[int, tuple[float, float, float]] = field(default_factory=dict)

    @property
    def predictable_vocab(self) -> frozenset[str]:
        return self.vocab - {BOS}

    def _map_token(self, token: str) -> str:
        # BOS is never predicted; treat it like any OOV token.
        if token == BOS or token not in self.vocab:
            return UNK
        return token

    def _map_context(self, token: str) -> str:
        # BOS is a legitimate context token (sentence start).
        return token if token in self.vocab else UNK

    def cond_logprob(self, context: list[str] | tuple[str, ...], token: str) -> float:
        """ln P(token | context), backing off through shorter contexts."""
        w = self._map_token(token)
        h = tuple(self._map_context(t) for t in context)[max(0, len(context) - (self.order - 1)):]
        acc = 0.0
        while True:
            g = h + (w,)
            p = self.logprob.get(g)
            if p is not None:
                return acc + p
            if not h:
                # Unigram table covers every mapped token, so this is
                # unreachable for tokens mapped into the vocabulary.
                raise KeyError(f"no unigram entry for {w!r}")
            acc += self.backoff.get(h, 0.0)
            h = h[1:]

    def logprobs(self, context: list[str], continuation: list[str]) -> TokenLogProbs:
        """Chain rule over the continuation, conditioning each token on the
        last order-1 tokens of (BOS padding ++ context ++ scored prefix)."""
        seq = [BOS] * (self.order - 1) + list(context)
        out = []
        for tok in continuation:
            out.append(self.cond_logprob(seq[len(seq) - (self.order - 1):], tok))
            seq.append(tok)
        return TokenLogProbs(tokens=tuple(continuation), logprobs=tuple(out))

    def sentence_nll(self, tokens: list[str]) -> tuple[float, int]:
        """Negative ln-likelihood and event count of one sentence, scoring
        every token plus the EOS event (the training objective)."""
        seq = list(tokens) + [EOS]
        tlp = self.logprobs([], seq)
        return -tlp.total, len(seq)

    def corpus_perplexity(self, corpus: list[list[str]]) -> float:
        nll = 0.0
        events = 0
        for sent in corpus:
            if not sent:
                continue
            n, m = self.sentence_nll(sent)
            nll += n
            events += m
        return math.exp(nll / events) if events else float("nan")


def _discounts(counts: dict, order_label: int) -> tuple[float, float, float]:
    """Modified KN discounts from count-of-counts, with the 0.75 fallback."""
    n = [0, 0, 0, 0, 0]
    for c in counts.values():
        if 1 <= c <= 4:
            n[c] += 1
    n1, n2, n3, n4 = n[1], n[2], n[3], n[4]
    if n1 and n2 and n3:
        y = n1 / (n1 + 2 * n2)
        d1 = 1.0 - 2.0 * y * n2 / n1
        d2 = 2.0 - 3.0 * y * n3 / n2
        d3 = 3.0 - 4.0 * y * n4 / n3
        if 0.0 < d1 <= 1.0 and 0.0 < d2 <= 2.0 and 0.0 < d3 <= 3.0:
            return (d1, d2, d3)
    return (FALLBACK_DISCOUNT,) * 3


def _discount_for(count: int, d: tuple[float, float, float]) -> float:
    if count >= 3:
        return d[2]
    if count == 2:
        return d[1]
    if count == 1:
        return d[0]
    return 0.0


def train_kn(corpus: list[list[str]], order: int = 5) -> NGramModel:
    """Train a modified Kneser-Ney model on tokenized sentences.

    The caller supplies tokens from the shared tokenizer so vocabulary
    parity with other scorers holds by construction.
    """
    if not 1 <= order <= 5:
        raise ValueError(f"order must be in [1, 5], got {order}")
    sentences = [s for s in corpus if s]
    if not sentences:
        raise EmptyCorpus("no non-empty sentences to train on")

    vocab = {BOS, EOS, UNK}
    for s in sentences:
        vocab.update(s)

    # Raw counts per order: one event per real token (incl. EOS) per order.
    raw: list[dict[tuple[str, ...], int]] = [dict() for _ in range(order + 1)]
    for s in sentences:
        padded = [BOS] * (order - 1) + list(s) + [EOS]
        for j in range(order - 1, len(padded)):
            for m in range(1, order + 1):
                g = tuple(padded[j - m + 1: j + 1])
                raw[m][g] = raw[m].get(g, 0) + 1

    # Adjusted counts: raw at the top order; left-continuation counts below,
    # except BOS-initial grams which keep raw counts.
    adjusted: list[dict[tuple[str, ...], int]] = [dict() for _ in range(order + 1)]
    adjusted[order] = dict(raw[order])
    for m in range(order - 1, 0, -1):
        cont: dict[tuple[str, ...], int] = {}
        for g in raw[m + 1]:
            cont[g[1:]] = cont.get(g[1:], 0) + 1
        table = {}
        for g, c in raw[m].items():
            table[g] = c if g[0] == BOS else cont.get(g, 0)
        adjusted[m] = table

    logprob: dict[tuple[str, ...], float] = {}
    backoff: dict[tuple[str, ...], float] = {}
    discounts: dict[int, tuple[float, float, float]] = {}

    # Unigrams: interpolate with the uniform distribution over the
    # predictable vocabulary (everything but BOS, UNK included).
    uni = adjusted[1]
    d1 = _discounts(uni, 1)
    discounts[1] = d1
    den = sum(uni.values())
    v_pred = len(vocab) - 1
    gamma1 = sum(_discount_for(c, d1) for c in uni.values()) / den
    for (w,), c in uni.items():
        logprob[(w,)] = math.log((c - _discount_for(c, d1)) / den + gamma1 / v_pred)
    logprob[(UNK,)] = math.log(gamma1 / v_pred)

    partial = NGramModel(order=order, vocab=frozenset(vocab), logprob=logprob, backoff=backoff)

    for m in range(2, order + 1):
        dm = _discounts(adjusted[m], m)
        discounts[m] = dm
        rows: dict[tuple[str, ...], list[tuple[str, int]]] = {}
        for g, c in adjusted[m].items():
            rows.setdefault(g[:-1], []).append((g[-1], c))
        for h, row in rows.items():
            den = sum(c for _, c in row)
            removed = math.fsum(_discount_for(c, dm) for _, c in row)
            gamma = removed / den
            backoff[h] = math.log(gamma)
            for w, c in row:
                lower = math.exp(partial.cond_logprob(list(h[1:]), w))
                p = (c - _discount_for(c, dm)) / den + gamma * lower
                logprob[h + (w,)] = math.log(p)

    return NGramModel(
        order=order,
        vocab=frozenset(vocab),
        logprob=dict(logprob),
        backoff=dict(backoff),
        discounts=discounts,
    )


def ngram_logprob(model: NGramModel, context: list[str], continuation: list[str]) -> TokenLogProbs:
    """Scorer-contract entry point over token sequences."""
    return model.logprobs(context, continuation)


def write_arpa(model: NGramModel, path: str | Path) -> None:
    """Serialize to sorted ARPA text (log10). Deterministic byte-for-byte."""
    sections: list[list[tuple[tuple[str, ...], float | None, float | None]]] = []
    for m in range(1, model.order + 1):
        grams: dict[tuple[str, ...], tuple[float | None, float | None]] = {}
        for g, lp in model.logprob.items():
            if len(g) == m:
                grams[g] = (lp, None)
        for h, bw in model.backoff.items():
            if len(h) == m:
                lp = grams.get(h, (None, None))[0]
                grams[h] = (lp, bw)
        sections.append(sorted((g, lp, bw) for g, (lp, bw) in grams.items()))

    def log10(x: float) -> float:
        return x / LN10

    with open(path, "w", encoding="utf-8") as f:
        f.write("\\data\\\n")
        for m, sec in enumerate(sections, start=1):
            f.write(f"ngram {m}={len(sec)}\n")
        for m, sec in enumerate(sections, start=1):
            f.write(f"\n\\{m}-grams:\n")
            for g, lp, bw in sec:
                p10 = PLACEHOLDER_LOG10 if lp is None else log10(lp)
                line = f"{p10!r}\t{' '.join(g)}"
                if bw is not None:
                    line += f"\t{log10(bw)!r}"
                f.write(line + "\n")
        f.write("\n\\end\\\n")


def read_arpa(path: str | Path) -> NGramModel:
    """Load a model written by write_arpa (accepts general ARPA text)."""
    logprob: dict[tuple[str, ...], float] = {}
    backoff: dict[tuple[str, ...], float] = {}
    order = 0
    current = 0
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("\\data\\") or line.startswith("ngram "):
                continue
            if line == "\\end\\":
                break
            if line.startswith("\\") and line.endswith("-grams:"):
                current = int(line[1:].split("-")[0])
                order = max(order, current)
                continue
            if current:
                parts = line.split("\t") if "\t" in line else line.split()
                p10 = float(parts[0])
                if "\t" in line:
                    toks = tuple(parts[1].split(" "))
                    bw10 = float(parts[2]) if len(parts) > 2 else None
                else:
                    has_bow = len(parts) == current + 2
                    toks = tuple(parts[1: 1 + current])
                    bw10 = float(parts[-1]) if has_bow else None
                if p10 > PLACEHOLDER_LOG10 + 0.5:
                    logprob[toks] = p10 * LN10
                if bw10 is not None:
                    backoff[toks] = bw10 * LN10
    vocab = {g[0] for g in logprob if len(g) == 1} | {BOS, EOS, UNK}
    return NGramModel(order=order, vocab=frozenset(vocab), logprob=logprob, backoff=backoff)
