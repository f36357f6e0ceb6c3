"""Exception hierarchy shared by every module of the package."""


class SofrError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SofrError, ValueError):
    pass


class NumericalFailure(SofrError, ArithmeticError):
    pass


class SingularDesign(NumericalFailure):
    """A least-squares design matrix is rank deficient."""


class DegenerateCovariance(NumericalFailure):
    pass


class InsufficientSample(InvalidArgument):
    pass


class ImputationFailure(SofrError):
    pass


class BootstrapFailure(SofrError):
    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index


class NullSimulationUnstable(SofrError):
    pass


class ParseError(SofrError, ValueError):
    def __init__(self, message, row=None, column=None):
        where = [f"{k} {v}" for k, v in (("row", row), ("column", column)) if v is not None]
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ShapeError(ParseError):
    pass


class SmallSampleWarning(UserWarning):
    """The sample is too small for the asymptotic reference distribution."""


class NumericalWarning(UserWarning):
    pass
