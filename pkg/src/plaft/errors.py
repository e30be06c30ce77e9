"""Exception types shared across the package."""


class PlaftError(Exception):
    """Base class for all errors raised by plaft."""


class ParseError(PlaftError):
    """Malformed input file (bad value, ragged row, unknown status code)."""


class DimensionError(PlaftError):
    """Vector/matrix sizes do not match the model layout."""


class DegenerateDataError(PlaftError):
    """Data cannot support rank estimation (e.g. fewer than 2 events)."""


class DegenerateColumnError(PlaftError):
    """A feature column is constant and cannot be standardized."""


class KnotDegeneracyError(PlaftError):
    """Requested knots collapse to fewer distinct values than required."""

    def __init__(self, message, achievable=0):
        super().__init__(message)
        self.achievable = achievable


class CapabilityError(PlaftError):
    """The requested method cannot handle this problem shape."""


class StateError(PlaftError):
    """Operation applied to an object in the wrong state."""


class SaturationError(PlaftError):
    """GCV criterion undefined because the model uses >= n coefficients."""


class FoldDegeneracyError(PlaftError):
    """A cross-validation fold has too few events to evaluate the loss."""


class ScenarioError(PlaftError):
    """Illegal simulation-scenario parameter combination."""
