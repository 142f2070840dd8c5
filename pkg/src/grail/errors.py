"""Exception types shared across the package."""


class GrailError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(GrailError):
    """A constructed object violates its structural invariants."""


class ParseError(GrailError):
    """A file could not be parsed into the canonical dataset format."""


class SplitTooSmall(GrailError):
    """Too few items to produce a nonempty train/test partition."""


class InvalidFlip(GrailError):
    """An edge flip targets a self-loop or an out-of-range node pair."""


class ShapeMismatch(GrailError):
    """Tensor operands have incompatible shapes."""


class NonScalarLoss(GrailError):
    """backward() was called on a tensor that is not a scalar."""


class AsymmetricAdjacency(GrailError):
    """A weighted adjacency matrix is not symmetric."""


class DegenerateAugmentation(GrailError):
    """An augmentation would leave the graph without any nodes."""


class CentralityDiverged(GrailError):
    """Power iteration failed to converge within the iteration cap."""


class NeedNegatives(GrailError):
    """A contrastive loss requires at least two items in the batch."""


class TrainingDiverged(GrailError):
    """A training loss became non-finite."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class EmptySelection(GrailError):
    """An evaluation mask or split selects no items."""


class BudgetInfeasible(GrailError):
    """The flip budget exceeds the number of candidate node pairs."""


class UndefinedDrop(GrailError):
    """Relative accuracy drop is undefined for zero clean accuracy."""


class NoRecords(GrailError):
    """An aggregation was asked to summarize an empty record set."""


class IncompleteCoverage(GrailError):
    """A model comparison is missing results for a requested dataset."""
