"""Exception types shared across the toolkit."""


class AmTamperError(Exception):
    """Base class for all toolkit errors."""


class StlError(AmTamperError):
    """Malformed STL data or an unserializable mesh."""


class GcodeError(AmTamperError):
    """Malformed G-code, or a program the interpreter cannot execute."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class GeometryError(AmTamperError):
    """A geometric precondition failed (non-watertight input, bad transform, ...)."""


class DefectError(AmTamperError):
    """A manipulation cannot be applied as specified."""


class TaxonomyError(AmTamperError):
    """Unknown identifiers or inconsistent attack-taxonomy data."""
