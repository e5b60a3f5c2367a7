"""Exception types shared across the toolkit."""


class IcllError(Exception):
    """Base class for all toolkit errors."""


class DuplicateId(IcllError):
    """A corpus contains the same sample id twice."""


class DimMismatch(IcllError):
    """Two vectors (or a vector and a manifest) disagree on dimensionality."""


class DegenerateEmbedding(IcllError):
    """An embedding with zero norm was supplied where a direction is required."""


class EmptyNBest(IcllError):
    """An utterance arrived with no hypotheses."""


class InvalidLogProb(IcllError):
    """A log-probability was positive."""


class InsufficientSamples(IcllError):
    """More samples were requested than the corpus holds."""


class InsufficientHypotheses(IcllError):
    """A top-k query exceeds an utterance's hypothesis count."""


class MissingEmbedding(IcllError):
    """A strategy needs an embedding that is not present or cached."""


class MissingReference(IcllError):
    """An operation needs the gold transcript and the utterance has none."""


class BudgetExceeded(IcllError):
    """Not even one retrieved sample fits the token budget."""


class UnparseableChoice(IcllError):
    """Model output contains no option number in range."""


class ScorerUnavailable(IcllError):
    """Remote scoring failed after the retry policy was exhausted."""


class TokenizationMismatch(IcllError):
    """Returned tokens do not concatenate back to the scored continuation."""


class EmptyCorpus(IcllError):
    """Language-model training received no usable sentences."""


class EmptyScore(IcllError):
    """Score fusion received an empty score list."""


class EmptyReference(IcllError):
    """Error-rate computation against an empty reference."""
