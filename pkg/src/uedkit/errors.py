"""Exception types shared across the package."""


class UedkitError(Exception):
    """Base class for all uedkit errors."""


class FormatError(UedkitError):
    """Malformed or truncated file content."""


class UnsupportedFormatError(FormatError):
    """File parsed but uses an encoding we do not handle."""


class ValidationError(UedkitError, ValueError):
    """Arguments violate a documented precondition."""


class DegenerateSignalError(ValidationError):
    """Signal too short (or silent) for the requested operation."""


class InfeasibleTargetError(ValidationError):
    """CTC target cannot be aligned within the given number of frames."""


class TrainingError(UedkitError):
    """Training run aborted: diverged gradients or persistent infeasibility."""
