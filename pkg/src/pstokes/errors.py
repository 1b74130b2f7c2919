"""Exception hierarchy shared by every module of the package."""


class PStokesError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PStokesError, ValueError):
    """Invalid grid or run configuration."""


class UnsupportedDimensionError(ConfigurationError):
    pass


class RankError(PStokesError, ValueError):
    """Operation applied to a field of the wrong tensor rank."""


class ExponentError(PStokesError, ValueError):
    pass


class WeightError(PStokesError, ValueError):
    pass


class ParameterError(PStokesError, ValueError):
    pass


class SingularWeightError(PStokesError, ValueError):
    pass


class SupportError(PStokesError, ValueError):
    """Cut-off support does not fit inside the periodic box."""


class ContractError(PStokesError, ValueError):
    """Variant / parameter combination not allowed by an operation."""


class TableIncompleteError(PStokesError, KeyError):
    pass


class DivergenceError(PStokesError, RuntimeError):
    """An iterative solve failed to reach its tolerance.

    ``history`` holds the residual after every iteration.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class CascadeError(DivergenceError):
    """A continuation stage failed; ``stage`` and ``params`` identify it."""

    def __init__(self, message, stage, params, history=None):
        super().__init__(message, history)
        self.stage = stage
        self.params = dict(params)
