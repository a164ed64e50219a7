from typing import Any, Optional


class DogfitError(Exception):
    """Base exception for all dogfit errors."""

    pass


class InvalidRotationError(DogfitError):
    """Raised when a 6D rotation block cannot be orthonormalized."""

    pass


class AssetValidationError(DogfitError):
    """Raised when template assets violate one of their invariants."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class CameraError(DogfitError):
    """Raised when a camera or rig is malformed."""

    pass


class ObservationError(DogfitError):
    """Raised when observation files are missing or inconsistent."""

    def __init__(
        self,
        message: str,
        view_id: Optional[str] = None,
        frame: Optional[int] = None,
        path: Optional[str] = None,
    ):
        self.view_id = view_id
        self.frame = frame
        self.path = path
        super().__init__(message)


class SchemaError(DogfitError):
    """Raised when a structured file does not match its schema."""

    def __init__(self, message: str, file: Optional[str] = None, diagnostics: Optional[list] = None):
        self.file = file
        self.diagnostics = diagnostics or []
        super().__init__(message)


class ConfigError(DogfitError):
    """Raised when there's an error with the configuration."""

    pass


class NonFiniteLossError(DogfitError):
    """Raised when a loss term evaluates to NaN or infinity."""

    def __init__(self, message: str, term: Optional[str] = None):
        self.term = term
        super().__init__(message)


class DivergenceError(DogfitError):
    """Raised when an optimization stage diverges.

    The last finite checkpoint is attached so callers can still save it.
    """

    def __init__(self, message: str, checkpoint: Any = None, stage: Optional[int] = None):
        self.checkpoint = checkpoint
        self.stage = stage
        super().__init__(message)
