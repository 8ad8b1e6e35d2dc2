class FcmvcError(Exception):
    """Base error. `exit_code` is what the CLI returns when it escapes a command."""

    exit_code = 1


class ConfigurationError(FcmvcError, ValueError):
    exit_code = 2


class GenerationError(ConfigurationError):
    pass


class DataValidationError(FcmvcError, ValueError):
    exit_code = 3


class ProtocolError(DataValidationError):
    pass


class CheckpointError(DataValidationError):
    pass


class NumericalFailure(FcmvcError, ArithmeticError):
    exit_code = 4
