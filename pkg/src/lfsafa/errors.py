"""Exception types raised across the toolkit."""


class LfsafaError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(LfsafaError, ValueError):
    """Raised when tensor dimensions do not match an operation's contract."""

    def __init__(self, what, expected, actual):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


class TapeError(LfsafaError, RuntimeError):
    pass


class NonFiniteError(LfsafaError, FloatingPointError):
    """A NaN/Inf showed up where finite values are required."""

    def __init__(self, name, message="non-finite values"):
        self.name = name
        super().__init__(f"{name}: {message}")


class LightFieldError(LfsafaError, ValueError):
    pass


class CheckpointError(LfsafaError, ValueError):
    pass


class TrainingError(LfsafaError, RuntimeError):
    pass
