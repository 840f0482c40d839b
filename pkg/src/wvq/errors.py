"""Exception hierarchy shared by every wvq module."""


class WVQError(Exception):
    """Base class for all library errors."""


class InvalidInput(WVQError, ValueError):
    pass


class NotPSD(WVQError, ValueError):
    pass


class InvalidSpec(WVQError, ValueError):
    pass


class CorruptAssignment(WVQError, ValueError):
    pass


class InsufficientData(WVQError, ValueError):
    pass


class DegenerateGradient(WVQError, ArithmeticError):
    """The W2 loss is too close to zero for its gradient to be defined."""


class SingularCovariance(WVQError, ArithmeticError):
    pass


class DivergedTraining(WVQError, ArithmeticError):
    pass


class InsufficientResolution(WVQError, ValueError):
    pass


class ReportWriteError(WVQError, OSError):
    pass


class ConfigError(WVQError, ValueError):
    pass
