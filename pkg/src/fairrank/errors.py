"""Exception types shared across the package."""


class FairRankError(Exception):
    """Base class for all fairrank errors."""


class GraphError(FairRankError, ValueError):
    """Malformed review-graph input."""


class EdgeTypeViolation(GraphError):
    """Edge does not connect user-review or review-product."""


class ReviewDegreeViolation(GraphError):
    """Review lacks exactly one user and exactly one product neighbor."""


class MissingLabel(GraphError):
    """A review node has no spam label."""


class DimensionMismatch(FairRankError, ValueError):
    """Array length or feature width does not match the expected shape."""


class EmptyUserSet(FairRankError, ValueError):
    """Operation requires at least one user node."""


class BadFractions(FairRankError, ValueError):
    """Split fractions are negative or do not sum to one."""


class BadDimensions(FairRankError, ValueError):
    """Layer dimension chain is invalid."""


class NonFiniteValue(FairRankError, FloatingPointError):
    """NaN or infinity produced where a finite value is required."""


class CacheMismatch(FairRankError, ValueError):
    """Backward pass received arrays inconsistent with the forward cache."""


class EmptyTrainingSet(FairRankError, ValueError):
    """A loss was evaluated over an empty training set."""


class NoPairs(FairRankError, ValueError):
    """The ranking regularizer has no (non-spam, spam) pair to score."""


class EmptySourceSet(FairRankError, ValueError):
    """Mixup sampling found an empty source or partner set."""


class MissingGroundTruth(FairRankError, ValueError):
    """Ground-truth subgroup attributes were requested but not assigned."""


class NoPositives(FairRankError, ValueError):
    """Ranking metric evaluated on a set with no spam items."""


class NoSubgroupSpams(FairRankError, ValueError):
    """False-rejection rate requested for a subgroup containing no spam."""


class NoFavoredNonSpams(FairRankError, ValueError):
    """False-rejection rate needs at least one favored non-spam review."""


class OneClassOnly(FairRankError, ValueError):
    """AUC requires both classes to be present."""


class InfeasibleConfig(FairRankError, ValueError):
    """Generator configuration cannot produce a valid graph."""


class ParseError(FairRankError, ValueError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MissingColumns(FairRankError, ValueError):
    """Input CSV lacks columns required by the requested analysis."""
