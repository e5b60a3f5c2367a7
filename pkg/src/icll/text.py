"""Text normalization and the shared project tokenizer.

All corpora pass through NFC at load time. No case folding anywhere:
orthography in the target languages must come through untouched.
"""

from __future__ import annotations

import unicodedata


def nfc(s: str) -> str:
    """Unicode NFC normalization (idempotent)."""
    return unicodedata.normalize("NFC", s)


def word_tokens(s: str) -> list[str]:
    """Whitespace word tokens after NFC. The shared token unit for WER,
    n-gram training, and default budget accounting."""
    return nfc(s).split()


def char_tokens(s: str) -> list[str]:
    """Character tokens after NFC, for character-level error rates."""
    return list(nfc(s))


def count_words(s: str) -> int:
    """Default token counter for prompt budgets."""
    return len(word_tokens(s))
