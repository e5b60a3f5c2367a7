"""Hypothesis selection: acoustic-only, LM-only, fused, instruction, oracle.

The fused score is the plain sum of acoustic and LM log-prob totals. No
fusion weight is applied by default; an optional weight on the LM term (and
per-token length normalization) exists for ablations only and both are baked
into lm_total so the decomposition fused = am_total + lm_total always holds
exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .corpus import NBestList
from .errors import EmptyScore, MissingReference, UnparseableChoice
from .evaluate import utterance_wer
from .prompt import parse_instruction_choice
from .scorer import TokenLogProbs


class SelectionMode(str, Enum):
    ACOUSTIC_ONLY = "acoustic"
    LM_ONLY = "lm"
    FUSED = "fused"
    INSTRUCTION = "instruction"
    ORACLE_WER = "oracle-wer"


@dataclass(frozen=True)
class FusionScore:
    am_total: float
    lm_total: float
    fused: float

    @classmethod
    def combine(cls, am_total: float, lm_total: float) -> "FusionScore":
        return cls(am_total=am_total, lm_total=lm_total, fused=am_total + lm_total)

    def to_obj(self) -> dict:
        return {"am": self.am_total, "lm": self.lm_total, "fused": self.fused}


def fuse_scores(am_logprobs, lm: TokenLogProbs) -> FusionScore:
    """Sum both score streams; see the fused-score identity above."""
    am = list(am_logprobs)
    if not am or len(lm) == 0:
        raise EmptyScore("fusion needs non-empty acoustic and LM scores")
    return FusionScore.combine(math.fsum(am), lm.total)


@dataclass(frozen=True)
class RerankResult:
    utt_id: str
    mode: SelectionMode
    chosen: int
    scores: tuple[FusionScore, ...]
    fallback: bool = False

    def to_obj(self) -> dict:
        return {
            "utt_id": self.utt_id,
            "mode": self.mode.value,
            "chosen": self.chosen,
            "scores": [s.to_obj() for s in self.scores],
            "fallback": self.fallback,
        }


def _argmax(values: list[float]) -> int:
    """First index of the maximum (lower index wins ties)."""
    best, best_v = 0, values[0]
    for i, v in enumerate(values):
        if v > best_v:
            best, best_v = i, v
    return best


def _lm_total(tlp: TokenLogProbs, weight: float, length_normalize: bool) -> float:
    total = tlp.total
    if length_normalize and len(tlp) > 0:
        total /= len(tlp)
    return weight * total


def rerank_nbest(
    utt: NBestList,
    mode: SelectionMode,
    scorer=None,
    context: str = "",
    lm_weight: float = 1.0,
    lm_length_normalize: bool = False,
) -> RerankResult:
    """Choose one hypothesis. `context` is the rendered ICL context (empty
    string = 0-shot); for instruction mode it is the rendered instruction
    prompt. Ties always break toward the better acoustic rank."""
    hyps = utt.hypotheses
    am_only = tuple(FusionScore.combine(h.am_total, 0.0) for h in hyps)

    if mode is SelectionMode.ACOUSTIC_ONLY:
        chosen = _argmax([h.am_total for h in hyps])
        return RerankResult(utt.utt_id, mode, chosen, am_only)

    if mode is SelectionMode.ORACLE_WER:
        return RerankResult(utt.utt_id, mode, select_oracle_wer(utt), am_only)

    if mode is SelectionMode.INSTRUCTION:
        if not hasattr(scorer, "generate"):
            raise ValueError("instruction mode needs a generation-capable scorer")
        output = scorer.generate(context)
        try:
            chosen = parse_instruction_choice(output, len(hyps))
            fallback = False
        except UnparseableChoice:
            chosen = _argmax([h.am_total for h in hyps])
            fallback = True
        return RerankResult(utt.utt_id, mode, chosen, am_only, fallback=fallback)

    scores = []
    for h in hyps:
        if h.text:
            tlp = scorer.score_continuation(context, h.text)
            lm_total = _lm_total(tlp, lm_weight, lm_length_normalize)
        else:
            # An empty hypothesis gets log P = 0 for its empty continuation.
            lm_total = 0.0
        scores.append(FusionScore.combine(h.am_total, lm_total))
    scores = tuple(scores)

    if mode is SelectionMode.LM_ONLY:
        chosen = _argmax([s.lm_total for s in scores])
    elif mode is SelectionMode.FUSED:
        chosen = _argmax([s.fused for s in scores])
    else:  # pragma: no cover
        raise ValueError(f"unknown mode {mode}")
    return RerankResult(utt.utt_id, mode, chosen, scores)


def select_oracle_wer(utt: NBestList, unit: str = "word") -> int:
    """Index of the hypothesis with the lowest WER against the reference;
    ties break toward higher am_total, then lower index."""
    if utt.reference is None:
        raise MissingReference(f"utterance {utt.utt_id!r} has no reference")
    best = min(
        range(len(utt.hypotheses)),
        key=lambda i: (
            utterance_wer(utt.reference, utt.hypotheses[i].text, unit).wer,
            -utt.hypotheses[i].am_total,
            i,
        ),
    )
    return best
