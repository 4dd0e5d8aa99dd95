class NumericalError(RuntimeError):
    """A computation failed for numerical reasons (not bad input)."""


class GPFitError(NumericalError):
    pass


class FilterDegeneracyError(NumericalError):
    pass


class SimulationError(NumericalError):
    pass


class ValidationError(ValueError):
    """Input data or arguments are malformed."""
