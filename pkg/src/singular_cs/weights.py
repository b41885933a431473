"""Communication weights psi(s) and their primitives.

Two families are supported:

* ``singular``: psi(s) = s**(-alpha), infinite at s = 0.
* ``cucker_smale``: psi(s) = K / (1 + s**2)**(beta / 2), the classic smooth weight.

A kernel may carry a regularization ``floor``.  With ``floor > 0`` the singular
weight is evaluated at ``max(s, floor)`` so it stays finite; the integrator
uses floored kernels while diagnostics evaluate the raw one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import InvalidParameter, Unsupported


class KernelKind(str, Enum):
    SINGULAR = "singular"
    CUCKER_SMALE = "cucker_smale"


@dataclass(frozen=True)
class WeightKernel:
    kind: KernelKind = KernelKind.SINGULAR
    alpha: float = 0.3
    K: float = 1.0
    beta: float = 0.0
    floor: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if not math.isfinite(self.floor) or self.floor < 0:
            raise InvalidParameter(f"floor must be finite and >= 0, got {self.floor!r}")
        if self.kind is KernelKind.SINGULAR:
            if not (math.isfinite(self.alpha) and self.alpha > 0):
                raise InvalidParameter(f"alpha must be > 0, got {self.alpha!r}")
        else:
            if not (math.isfinite(self.K) and self.K > 0):
                raise InvalidParameter(f"K must be > 0, got {self.K!r}")
            if not (math.isfinite(self.beta) and self.beta >= 0):
                raise InvalidParameter(f"beta must be >= 0, got {self.beta!r}")

    @classmethod
    def singular(cls, alpha: float, floor: float = 0.0) -> "WeightKernel":
        return cls(KernelKind.SINGULAR, alpha=alpha, floor=floor)

    @classmethod
    def cucker_smale(cls, K: float = 1.0, beta: float = 0.0) -> "WeightKernel":
        return cls(KernelKind.CUCKER_SMALE, K=K, beta=beta)

    @property
    def is_singular(self) -> bool:
        return self.kind is KernelKind.SINGULAR

    @property
    def full_theory(self) -> bool:
        """alpha in (0, 1/2): absolute continuity and uniqueness hold."""
        return self.is_singular and self.alpha < 0.5

    @property
    def piecewise_theory(self) -> bool:
        """alpha in (0, 1): piecewise weak solutions exist."""
        return self.is_singular and self.alpha < 1.0

    def raw(self) -> "WeightKernel":
        return replace(self, floor=0.0) if self.floor else self

    def with_floor(self, floor: float) -> "WeightKernel":
        return replace(self, floor=floor)

    def __call__(self, s):
        """Vectorized evaluation; returns ``inf`` where a raw singular kernel meets s == 0."""
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise InvalidParameter("distance must be >= 0")
        if self.kind is KernelKind.CUCKER_SMALE:
            out = self.K / (1.0 + s * s) ** (0.5 * self.beta)
        else:
            if self.floor > 0:
                s = np.asarray(np.maximum(s, self.floor))
            with np.errstate(divide="ignore"):
                out = np.power(s, -self.alpha)
        return out if out.ndim else float(out)

    def primitive(self, s):
        """Psi(s) = s**(1 - alpha) / (1 - alpha), the primitive vanishing at 0."""
        if self.kind is not KernelKind.SINGULAR:
            raise Unsupported("primitive is only defined for the singular kernel")
        if self.alpha >= 1:
            raise Unsupported(f"primitive needs alpha < 1, got {self.alpha!r}")
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise InvalidParameter("distance must be >= 0")
        out = s ** (1.0 - self.alpha) / (1.0 - self.alpha)
        return out if out.ndim else float(out)

    def primitive_inverse(self, p):
        """Inverse of :meth:`primitive` on [0, inf)."""
        if self.kind is not KernelKind.SINGULAR or self.alpha >= 1:
            raise Unsupported("primitive_inverse needs a singular kernel with alpha < 1")
        p = np.asarray(p, dtype=float)
        out = ((1.0 - self.alpha) * p) ** (1.0 / (1.0 - self.alpha))
        return out if out.ndim else float(out)


def eval(kernel: WeightKernel, s):  # noqa: A001 - mirrors the operation name
    return kernel(s)


def primitive(kernel: WeightKernel, s):
    return kernel.primitive(s)
