"""HTTP sidecar: token log-probs, embeddings, generation, tokenization."""

__version__ = "0.1.0"
