"""Exception types shared across the package."""


class FailsiftError(Exception):
    """Base class for all errors raised by this package."""


class MalformedRecord(FailsiftError):
    """A dataset record could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyCampaign(FailsiftError):
    """The dataset contains zero records."""


class DuplicateExperimentId(FailsiftError):
    """Two records share an experiment id."""


class EmptyInput(FailsiftError):
    """An operation that needs at least one element got none."""


class UnknownEventType(FailsiftError):
    """An event type is missing from the alphabet in use."""


class UnknownSymbol(FailsiftError):
    """A symbol is outside the trained model's alphabet."""


class DimensionMismatch(FailsiftError):
    """Vector or matrix dimensions do not line up."""


class ShapeMismatch(DimensionMismatch):
    """Two arrays that must share a shape do not."""


class TooFewPoints(FailsiftError):
    """Fewer data points than requested clusters."""


class NonFiniteInput(FailsiftError):
    """Input contains NaN or infinity."""


class NonFiniteLoss(FailsiftError):
    """Training diverged to a NaN or infinite loss."""


class InvalidDims(FailsiftError):
    """Requested network dimensions are not realizable."""


class DegenerateCluster(FailsiftError):
    """A cluster lost all of its soft mass during optimization."""


class MissingGroundTruth(FailsiftError):
    """Experiments lack the ground-truth labels an operation requires."""

    def __init__(self, missing_ids):
        self.missing_ids = tuple(missing_ids)
        shown = ", ".join(self.missing_ids[:5])
        more = "" if len(self.missing_ids) <= 5 else f" (+{len(self.missing_ids) - 5} more)"
        super().__init__(f"no ground-truth label for: {shown}{more}")


class InvalidSpec(FailsiftError):
    """A generator or config object fails its own invariants."""
