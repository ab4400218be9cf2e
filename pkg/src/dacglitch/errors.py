"""Exception hierarchy.  Everything derives from :class:`DacGlitchError`."""


class DacGlitchError(Exception):
    pass


class ValidationError(DacGlitchError, ValueError):
    pass


class DimensionError(ValidationError):
    """Representation length does not match the basis length."""


class RangeError(ValidationError):
    """Codeword outside ``[0, 2^N - 1]``."""


class CoverageError(ValidationError):
    """A codeword has no representation on the basis."""

    def __init__(self, codeword: int, message: str | None = None):
        self.codeword = codeword
        super().__init__(message or f"codeword {codeword} is not representable")


class IncompleteTableError(ValidationError):
    pass


class ConsistencyError(ValidationError):
    """A stored representation does not decode to its codeword."""


class CapacityError(DacGlitchError):
    """A requested table would exceed the configured size cap."""


class InfeasibleError(ValidationError):
    """No valid basis exists for the requested (N, L)."""


class UndefinedMeasurementError(DacGlitchError):
    pass
