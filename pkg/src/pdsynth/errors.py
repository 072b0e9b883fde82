"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for configuration
problems, 3 for numerical failures, 4 for violations of the modelling
assumptions (rare-event separation, decay of the impulse response).
"""


class PdsError(Exception):
    exit_code = 1


class ConfigError(PdsError, ValueError):
    exit_code = 2


class NumericalError(PdsError, ArithmeticError):
    exit_code = 3


class NonConverged(NumericalError):
    pass


class SupportNotBracketed(NumericalError):
    pass


class SingularTransfer(NumericalError):
    pass


class NegativeVariance(NumericalError):
    pass


class IntegratorFailure(NumericalError):
    pass


class NotOscillatory(NumericalError):
    pass


class GridMismatch(NumericalError):
    pass


class AllCellsFailed(NumericalError):
    pass


class ModelAssumptionError(PdsError):
    exit_code = 4


class NoDecay(ModelAssumptionError):
    pass


class PrOutOfRange(ModelAssumptionError):
    pass
