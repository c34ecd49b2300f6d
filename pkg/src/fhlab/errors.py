"""Exception and warning types shared across fhlab."""


class FHLabError(Exception):
    """Base class for all fhlab errors."""


class DomainError(FHLabError, ValueError):
    """An argument lies outside the domain of an operation."""


class SingularValueError(DomainError):
    """Evaluation hit an unregularized singularity exactly."""


class DivergenceError(FHLabError, ArithmeticError):
    """A quantity requested at coincident singular points is infinite."""


class ConvergenceError(FHLabError, RuntimeError):
    """Series truncation or adaptive quadrature failed to reach tolerance."""


class ResolutionError(FHLabError, ValueError):
    """A quadrature grid is too coarse for the requested symbol."""


class UnreliableEstimateError(FHLabError, RuntimeError):
    """An importance-sampling estimate has too small an effective sample size."""


class ConfigError(FHLabError, ValueError):
    """An experiment configuration failed validation.

    Attributes
    ----------
    pointer : str
        JSON pointer to the offending location in the config document.
    """

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"


class HeavyTailWarning(UserWarning):
    """Batch means look heavy-tailed; the reported stderr may be optimistic."""


class AccuracyWarning(UserWarning):
    """A numerical safeguard (clipping, separation) was triggered."""


class ExperimentError(FHLabError, RuntimeError):
    """A downstream failure inside one experiment row.

    Attributes
    ----------
    inputs : dict
        The inputs of the failing row.
    """

    def __init__(self, message, inputs=None):
        self.inputs = dict(inputs or {})
        super().__init__(f"{message} (row inputs: {self.inputs})")
