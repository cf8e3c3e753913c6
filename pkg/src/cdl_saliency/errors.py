"""Exception hierarchy shared by the library and the command line."""


class CDLError(Exception):
    """Base class for all package errors."""


class DimensionError(CDLError, ValueError):
    pass


class InputError(CDLError, ValueError):
    """Non-finite or otherwise invalid numeric input."""


class DatasetError(CDLError):
    """Missing or unpaired dataset files.

    ``missing`` lists the offending names so callers can print them.
    """

    def __init__(self, message, missing=()):
        self.missing = list(missing)
        if self.missing:
            message = message + ": " + ", ".join(self.missing)
        super().__init__(message)


class SamplingExhaustedError(CDLError):
    def __init__(self, requested, found, draws):
        self.requested = requested
        self.found = found
        self.draws = draws
        super().__init__(
            f"found only {found} of {requested} labeled patches after {draws} draws"
        )


class ConvergenceError(CDLError):
    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"lasso did not converge in {iterations} sweeps (KKT residual {residual:.3e})"
        )


class FormatError(CDLError):
    """Malformed binary file; ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ConfigError(CDLError, ValueError):
    pass
