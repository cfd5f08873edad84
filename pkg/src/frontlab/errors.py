"""Exception hierarchy. Each class carries the CLI exit code for its outcome class."""


class FrontlabError(Exception):
    exit_code = 3


class ConfigError(FrontlabError, ValueError):
    """Invalid input or configuration."""

    exit_code = 2


class NumericalFailure(FrontlabError, RuntimeError):
    """Blow-up, non-convergence, missing bracket, overflow."""

    exit_code = 3


class ConvergenceError(NumericalFailure):
    pass


class BlowUpError(NumericalFailure):
    pass


class WeightOverflowError(NumericalFailure):
    pass


class SearchBoxError(NumericalFailure):
    pass


class InconsistentInputError(NumericalFailure):
    pass


class NoBracketError(NumericalFailure):
    pass


class InconclusiveError(FrontlabError):
    """A verdict could not be reached at the requested resolution."""

    exit_code = 4
