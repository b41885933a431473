"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SingularCSError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameter(SingularCSError, ValueError):
    pass


class Unsupported(SingularCSError, NotImplementedError):
    pass


class SingularEvaluation(SingularCSError, FloatingPointError):
    """Two distinct clusters coincide while the kernel has no floor."""


class NonFinite(SingularCSError, FloatingPointError):
    pass


class StepUnderflow(SingularCSError, RuntimeError):
    def __init__(self, message: str, t: float, dt: float, min_pair_distance: float):
        super().__init__(f"{message} (t={t!r}, dt={dt!r}, min pair distance={min_pair_distance!r})")
        self.t = t
        self.dt = dt
        self.min_pair_distance = min_pair_distance


class InvalidMerge(SingularCSError, ValueError):
    pass


class PartialResult(SingularCSError, RuntimeError):
    """Raised by ``simulate`` on failure; ``result`` holds the completed prefix."""

    def __init__(self, message: str, result, cause: BaseException | None = None):
        super().__init__(message)
        self.result = result
        self.cause = cause


class OutOfDomain(SingularCSError, ValueError):
    pass


class OracleInconsistency(SingularCSError, RuntimeError):
    pass


class InsufficientSampling(SingularCSError, RuntimeError):
    pass


class DivergenceSuspected(SingularCSError, RuntimeError):
    pass


class SchemaError(SingularCSError, ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
