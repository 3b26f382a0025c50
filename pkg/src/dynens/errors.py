"""Exception types shared across the package."""


class DynensError(Exception):
    """Base class for all package errors."""


class ContractViolationError(DynensError, ValueError):
    """An input violates an operation's contract (shape, normalization, range)."""


class DegenerateWeightsError(DynensError, ValueError):
    """Particle weights carry no usable mass (all zero, negative, or non-finite)."""


class DegenerateHypothesisError(DynensError):
    """A candidate model assigned zero likelihood to every particle."""


class DegenerateEvidenceError(DynensError):
    """Every candidate model's evidence vanished; the posterior update is undefined."""

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message if step_index is None else f"{message} (step {step_index})")
        self.step_index = step_index


class SingularFitError(DynensError):
    """Least-squares fit is underdetermined or the regressors are degenerate."""


class ConfigError(DynensError, ValueError):
    """Invalid configuration value."""


class UndefinedMetricError(DynensError, ValueError):
    """A metric is undefined for the given inputs (e.g. zero-variance sequence)."""
