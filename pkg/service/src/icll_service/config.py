"""Service configuration.

Model identifiers are configuration, not API: clients never name a model
family. Identifiers use a scheme prefix — "bigram:<seed>" selects the
deterministic reference LM, "hash:<dim>" the reference embedder, "none"
leaves the slot unloaded (endpoints answer 503). New backends plug in by
extending the registry in backends.py.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ServiceConfig:
    lm_model: str = "bigram:0"
    embedding_model: str = "hash:16"
    device: str = "cpu"
    max_batch_size: int = 8
    max_context_tokens: int = 4096

    def __post_init__(self):
        if self.max_context_tokens <= 0:
            raise ValueError("max_context_tokens must be positive")
        if self.max_batch_size <= 0:
            raise ValueError("max_batch_size must be positive")
