"""Exception types shared across the package."""


class RecamError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(RecamError, ValueError):
    """Two inputs disagree along a named axis."""

    def __init__(self, axis: str, expected, actual, context: str = ""):
        self.axis = axis
        self.expected = expected
        self.actual = actual
        msg = f"dimension mismatch on axis '{axis}': expected {expected}, got {actual}"
        if context:
            msg = f"{context}: {msg}"
        super().__init__(msg)


class TrajectoryParseError(RecamError, ValueError):
    """Trajectory JSON is malformed; carries field-level context."""

    def __init__(self, detail: str, field: str = "", move_index: int | None = None):
        self.field = field
        self.move_index = move_index
        where = ""
        if move_index is not None:
            where = f"moves[{move_index}]"
        if field:
            where = f"{where}.{field}" if where else field
        msg = f"{where}: {detail}" if where else detail
        super().__init__(msg)


class MissingFrameError(RecamError, FileNotFoundError):
    """A numbered file is absent from a frame directory."""

    def __init__(self, index: int, path):
        self.index = index
        self.path = str(path)
        super().__init__(f"missing frame index {index}: expected file {path}")
