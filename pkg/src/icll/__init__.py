"""Rerank ASR n-best lists with retrieval-augmented in-context LM scoring."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    DatasetManifest,
    Hypothesis,
    NBestList,
    TrainSample,
    load_manifest,
    load_nbest,
    load_train_corpus,
    validate_dataset,
)
from .errors import IcllError  # noqa: F401
from .retrieval import (  # noqa: F401
    EmbeddingCache,
    RetrievalPlan,
    RetrievalResult,
    Strategy,
    cosine_similarity,
    resolve_retrieval,
)
from .rerank import FusionScore, SelectionMode, fuse_scores, rerank_nbest  # noqa: F401
from .scorer import MockScorer, NGramScorer, RemoteScorer, TokenLogProbs, UniformScorer  # noqa: F401
from .ngram import NGramModel, train_kn  # noqa: F401
from .evaluate import WerBreakdown, corpus_wer, edit_distance, conditional_perplexity  # noqa: F401
