"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ConfigurationError(ValueError):
    """Inconsistent or incomplete configuration (missing schedule data, shape mismatch, ...)."""


class ContractViolation(RuntimeError):
    """A diagnostic was called on a run that does not satisfy its preconditions."""


class PPMFormatError(ValueError):
    """Malformed or unsupported PPM/PGM data.

    Parameters
    ----------
    message : str
        What went wrong.
    offset : int
        Byte offset in the file where the problem was detected.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
