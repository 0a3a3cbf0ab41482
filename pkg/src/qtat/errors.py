"""Exception types shared across the package."""


class QtatError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidGeometry(QtatError):
    """Degenerate box, misaligned surface, or a domain violating a geometric precondition."""


class InvalidOperator(QtatError):
    """Asymmetric or non-elliptic coefficient data, or a non-positive wave speed."""


class InvalidInitialCondition(QtatError):
    """Initial condition whose support is not strictly inside the domain."""


class UnstableConfiguration(QtatError):
    """Time-stepping parameters outside the stability region."""


class SolverFailure(QtatError):
    """A linear solver failed to reach its required residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InvalidData(QtatError):
    """Trace or right-hand-side data incompatible with the requested solve."""


class UnderResolved(QtatError):
    """Grid too coarse to resolve the requested level-set domain."""


class ConfigError(QtatError):
    """Malformed or invalid configuration file; message carries file and line."""


class PipelineError(QtatError):
    """Failure inside a composed reconstruction, tagged with the stage name."""

    def __init__(self, stage, original):
        super().__init__(f"stage '{stage}': {original}")
        self.stage = stage
        self.original = original
