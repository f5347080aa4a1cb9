"""Exception types shared across the workbench."""


class CapflowError(Exception):
    """Base class for all capflow-specific errors."""


class SchemaError(CapflowError):
    """Malformed graph/solution/config file; message carries field or line context."""


class OverlappingBoundary(CapflowError):
    """A node is listed both as inlet and outlet."""


class InvalidBoundary(CapflowError):
    """Boundary conditions violate an invariant (empty set, bad pressures...)."""


class EmptyBoundary(CapflowError):
    """Diameter-threshold boundary detection found no nodes on one side."""


class DegenerateTessellation(CapflowError):
    """Seed points are coplanar or otherwise unusable for a 3-D tessellation."""


class GenerationFailed(CapflowError):
    """Network synthesis failed after exhausting its retry budget."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class SingularSystem(CapflowError):
    """The assembled flow system is singular (component without boundary node)."""


class AmbiguousOrientation(CapflowError):
    """An edge flow is below the orientation epsilon where a direction is required."""


class CyclicFlow(CapflowError):
    """Flow orientation contains a directed cycle; no topological node order exists."""


class NotConverged(CapflowError):
    """Fixed-point iteration exhausted its budget; the last iterate is attached."""

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class DomainError(CapflowError):
    """Physical quantity outside its admissible range (e.g. hematocrit >= 1)."""


class ShapeMismatch(CapflowError):
    """Tensor or feature dimensions are inconsistent."""


class GraphCycle(CapflowError):
    """Defensive: the recorded autodiff graph contains a cycle."""


class VariantMismatch(CapflowError):
    """A checkpoint does not provide the outputs requested from it."""


class NonFiniteLoss(CapflowError):
    """Training loss became NaN/Inf; message carries the offending graph id."""
