class DscovrError(Exception):
    pass


class InvalidPartitionError(DscovrError, ValueError):
    pass


class ShapeError(DscovrError, ValueError):
    pass


class DomainError(DscovrError, ValueError):
    """A dual value lies outside the domain of the loss conjugate."""


class NoClosedFormError(DscovrError, NotImplementedError):
    pass


class UsageError(DscovrError, RuntimeError):
    pass


class InfeasiblePlanError(DscovrError, ValueError):
    pass


class DegenerateDataError(DscovrError, ValueError):
    pass


class DivergenceError(DscovrError, FloatingPointError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class StallError(DscovrError, RuntimeError):
    pass


class OracleError(DscovrError, RuntimeError):
    pass


class ProtocolError(DscovrError, RuntimeError):
    """Violation of the scheduler/worker/server message protocol."""


class ParseError(DscovrError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ConfigError(DscovrError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
