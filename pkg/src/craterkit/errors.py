"""Exception hierarchy shared across the pipeline."""


class CraterKitError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(CraterKitError):
    """Invalid user input: bad annotations, config, regions, or geometry."""


class LabelParseError(ValidationError):
    """A YOLO label line failed to parse.

    ``kind`` distinguishes the failure: "arity" (wrong token count),
    "numeric" (non-numeric field), or "range" (value outside its domain).
    """

    def __init__(self, message: str, *, kind: str, line_no: int | None = None):
        self.kind = kind
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{prefix}{message}")


class BackendError(CraterKitError):
    """A detector backend failed or violated its contract."""

    def __init__(self, message: str, *, backend: str, window_index: int | None = None):
        self.backend = backend
        self.window_index = window_index
        where = f" (window {window_index})" if window_index is not None else ""
        super().__init__(f"backend '{backend}'{where}: {message}")


class ClampWarning(UserWarning):
    """A box extended past the image and was clamped before cropping."""
