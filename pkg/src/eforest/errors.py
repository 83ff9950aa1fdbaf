"""Exception types shared across the package."""


class EforestError(Exception):
    """Base class for all package-specific errors."""


class ConstantColumnError(EforestError, ValueError):
    """A data column is constant and carries no rank information."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"column {column} is constant; ranks are undefined")


class ParameterError(EforestError, ValueError):
    """A copula parameter lies outside its family's domain."""


class DisconnectedSupportError(EforestError):
    """The support graph is disconnected where a connected one is required."""


class BlockDisconnectedError(EforestError):
    """A partition block is disconnected under the current edge weights."""

    def __init__(self, block: int):
        self.block = block
        super().__init__(f"partition block {block} is disconnected")


class AllCutsSingularError(EforestError):
    """Every cut in the working set has a disconnected side."""


class SingularComponentError(EforestError):
    """Derivative matrix requested for a singular (disconnected) component."""


class TooLargeError(EforestError, ValueError):
    """Input exceeds the enumeration guard of an exact/brute-force routine."""


class InfeasibleDegreeError(EforestError, ValueError):
    """Requested edge count cannot be realized by the graph generator."""


class SizeMismatchError(EforestError, ValueError):
    """Clique sizes do not partition the requested node count."""


class DimensionMismatchError(EforestError, ValueError):
    """Two graph objects have different node counts."""


class FitFailureError(EforestError):
    """The learner could not recover from repeated numerical failures."""
