"""Prompt assembly: LM scoring contexts and instruction prompts.

Rendering is pure and deterministic; identical inputs give byte-identical
strings. Budget accounting runs over the rendered string with whatever token
counter the caller supplies (whitespace words by default, the remote
tokenizer when scoring runs against the sidecar).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .corpus import NBestList, TrainSample
from .errors import BudgetExceeded, UnparseableChoice
from .retrieval import RetrievalResult
from .text import count_words


class SampleOrder(str, Enum):
    # Ascending similarity: the most similar sample sits last, adjacent to
    # the target text.
    SIMILARITY_ASCENDING = "similarity-ascending"
    SIMILARITY_DESCENDING = "similarity-descending"
    CORPUS_ORDER = "corpus-order"


@dataclass(frozen=True)
class PromptSpec:
    token_budget: int
    separator: str = "\n"
    order: SampleOrder = SampleOrder.SIMILARITY_ASCENDING

    def __post_init__(self):
        if self.token_budget <= 0:
            raise ValueError("token_budget must be positive")


def truncate_to_budget(samples: list[str], budget: int, counter=count_words, separator: str = "\n") -> list[str]:
    """Drop least-similar samples (the tail of a most-similar-first list)
    until the rendered context fits the budget. Never reorders survivors."""
    kept = list(samples)
    while kept and counter(_render(kept, separator)) > budget:
        kept.pop()
    return kept


def _render(samples: list[str], separator: str) -> str:
    # Trailing separator so the continuation starts on a fresh line.
    return separator.join(samples) + separator if samples else ""


def render_context(
    result: RetrievalResult,
    train: list[TrainSample],
    spec: PromptSpec,
    counter=count_words,
) -> tuple[str, int]:
    """Like build_lm_context but also reports how many samples survived the
    budget. A full drop renders as the empty context (0 survivors)."""
    by_id = {s.id: s for s in train}
    texts = [by_id[sid].text for sid in result.sample_ids]
    kept = truncate_to_budget(texts, spec.token_budget, counter, spec.separator)
    n_kept = len(kept)
    if spec.order is SampleOrder.SIMILARITY_ASCENDING:
        kept = kept[::-1]
    elif spec.order is SampleOrder.CORPUS_ORDER:
        # Truncation only ever pops the tail, so survivors are a prefix.
        pos = {s.id: i for i, s in enumerate(train)}
        surviving = sorted(result.sample_ids[:n_kept], key=lambda sid: pos[sid])
        kept = [by_id[sid].text for sid in surviving]
    return _render(kept, spec.separator), n_kept


def build_lm_context(
    result: RetrievalResult,
    train: list[TrainSample],
    spec: PromptSpec,
    counter=count_words,
) -> str:
    """Render the ICL context for one utterance. The retrieval result is
    most-similar-first; ordering and budget policy come from the PromptSpec."""
    context, n_kept = render_context(result, train, spec, counter)
    if result.sample_ids and n_kept == 0:
        raise BudgetExceeded(
            f"no retrieved sample fits the budget of {spec.token_budget} tokens"
        )
    return context


DEFAULT_ANSWER_INSTRUCTION = (
    "Reply with the number of the option that is the best transcription."
)


@dataclass(frozen=True)
class InstructionPrompt:
    """Template for option-choosing prompts. The template text is a config
    asset with {samples}, {options} and {answer_instruction} placeholders."""

    template: str
    answer_instruction: str = DEFAULT_ANSWER_INSTRUCTION


def load_default_template() -> InstructionPrompt:
    text = resources.files("icll.templates").joinpath("instruction.txt").read_text(encoding="utf-8")
    return InstructionPrompt(template=text)


def load_template(path) -> InstructionPrompt:
    with open(path, "r", encoding="utf-8") as f:
        return InstructionPrompt(template=f.read())


def build_instruction_prompt(
    result: RetrievalResult,
    utt: NBestList,
    template: InstructionPrompt,
    train: list[TrainSample],
    order: SampleOrder = SampleOrder.SIMILARITY_ASCENDING,
) -> str:
    """Render preamble, ICL samples, 1-based numbered options and the answer
    instruction into one deterministic prompt."""
    by_id = {s.id: s for s in train}
    texts = [by_id[sid].text for sid in result.sample_ids]
    if order is SampleOrder.SIMILARITY_ASCENDING:
        texts = texts[::-1]
    elif order is SampleOrder.CORPUS_ORDER:
        pos = {s.id: i for i, s in enumerate(train)}
        texts = [by_id[sid].text for sid in sorted(result.sample_ids, key=lambda sid: pos[sid])]
    options = "\n".join(f"{i}) {h.text}" for i, h in enumerate(utt.hypotheses, start=1))
    return (
        template.template.replace("{samples}", "\n".join(texts))
        .replace("{options}", options)
        .replace("{answer_instruction}", template.answer_instruction)
    )


_INT_RE = re.compile(r"\d+")


def parse_instruction_choice(model_output: str, n_options: int) -> int:
    """First integer in [1, n_options] found in the output, 0-based."""
    if n_options < 1:
        raise ValueError("n_options must be >= 1")
    for m in _INT_RE.finditer(model_output):
        value = int(m.group())
        if 1 <= value <= n_options:
            return value - 1
    raise UnparseableChoice(
        f"no option number in [1, {n_options}] in output {model_output!r}"
    )
