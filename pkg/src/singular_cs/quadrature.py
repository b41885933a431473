"""Gauss-Legendre quadrature over step intervals, graded toward singular times.

Integrands here behave like |t - c|**(-gamma), gamma < 1, near a collision
time c.  Intervals next to such an anchor are cut into geometric panels whose
widths shrink by ``ratio`` toward c; on each panel the singularity is at a
fixed relative distance, so Gauss-Legendre converges geometrically whatever
gamma is.  The innermost panel (width ~ ``depth`` times the interval) uses the
substitution t = c + L * s**p, which removes the singularity for gamma up to
1 - 1/p.  Every panel is integrated with 8 and 16 nodes; the difference is the
error estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_LO = np.polynomial.legendre.leggauss(8)
_HI = np.polynomial.legendre.leggauss(16)


@dataclass
class NodeSet:
    """Nodes and weights for a list of intervals, each cut into one or more panels."""

    owner: np.ndarray  # (P,) original interval of each panel, nondecreasing
    t_hi: np.ndarray  # (P, 16)
    w_hi: np.ndarray
    t_lo: np.ndarray  # (P, 8)
    w_lo: np.ndarray
    n_intervals: int

    @property
    def times(self) -> np.ndarray:
        """All node times, 16-point set first, flattened."""
        return np.concatenate([self.t_hi.ravel(), self.t_lo.ravel()])

    @property
    def size(self) -> int:
        return self.t_hi.size + self.t_lo.size

    def integrate(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-interval integrals and error estimates for ``values`` laid out like :attr:`times`.

        ``values`` may carry trailing axes; they are integrated independently.
        Non-finite values come from nodes that round onto a singular time; that
        set has measure zero and contributes nothing.
        """
        values = np.asarray(values, dtype=float)
        values = np.where(np.isfinite(values), values, 0.0)
        n_hi = self.t_hi.size
        tail = values.shape[1:]
        v_hi = values[:n_hi].reshape(self.t_hi.shape + tail)
        v_lo = values[n_hi:].reshape(self.t_lo.shape + tail)
        w_hi = self.w_hi.reshape(self.w_hi.shape + (1,) * len(tail))
        w_lo = self.w_lo.reshape(self.w_lo.shape + (1,) * len(tail))
        i_hi = np.sum(v_hi * w_hi, axis=1)
        i_lo = np.sum(v_lo * w_lo, axis=1)
        val = np.zeros((self.n_intervals,) + tail)
        err = np.zeros((self.n_intervals,) + tail)
        if len(self.owner):
            # owners are nondecreasing: sum runs of panels per interval
            starts = np.flatnonzero(np.r_[True, self.owner[1:] != self.owner[:-1]])
            ids = self.owner[starts]
            val[ids] = np.add.reduceat(i_hi, starts, axis=0)
            err[ids] = np.add.reduceat(np.abs(i_hi - i_lo), starts, axis=0)
        return val, err


def _mapped(rule, c, L, s_lo, p, direction):
    x, w = rule
    half = 0.5 * (1.0 - s_lo)[:, None]
    s = s_lo[:, None] + half * (x[None, :] + 1.0)
    t = c[:, None] + direction[:, None] * L[:, None] * s ** p[:, None]
    jac = p[:, None] * L[:, None] * s ** (p[:, None] - 1.0)
    return t, w[None, :] * half * jac


class _Panels:
    def __init__(self):
        self.owner, self.c, self.L, self.s_lo, self.p, self.dir = [], [], [], [], [], []

    def add(self, k, c, L, s_lo=0.0, p=1.0, direction=1.0):
        self.owner.append(k)
        self.c.append(c)
        self.L.append(L)
        self.s_lo.append(s_lo)
        self.p.append(p)
        self.dir.append(direction)

    def plain(self, k, lo, hi):
        self.add(k, lo, hi - lo)

    def graded(self, k, c, near, far, direction, ratio, depth, power):
        """Panels between distances ``near`` < ``far`` from anchor c, on the side ``direction``."""
        d = far
        while d * ratio > near and d * ratio > far * depth:
            lo = d * ratio
            self.add(k, c + direction * (lo if direction > 0 else d), d - lo)
            d = lo
        if near >= d * ratio:
            self.add(k, c + direction * (near if direction > 0 else d), d - near)
        else:
            # innermost panel: power substitution toward c
            self.add(k, c, d, (near / d) ** (1.0 / power), power, direction)


def build_nodes(edges_a, edges_b, anchors=(), ratio: float = 0.3, depth: float = 1e-15, power: float = 20.0) -> NodeSet:
    """Nodes for the intervals [a_k, b_k], graded toward the nearest anchors."""
    a = np.asarray(edges_a, dtype=float)
    b = np.asarray(edges_b, dtype=float)
    anchors = np.unique(np.asarray(anchors, dtype=float))
    panels = _Panels()

    def one_sided(k, lo, hi, c_left, c_right):
        width = hi - lo
        near_l = lo - c_left if c_left is not None else np.inf
        near_r = c_right - hi if c_right is not None else np.inf
        close_l = near_l < width / ratio
        close_r = near_r < width / ratio
        if close_l and close_r:
            mid = 0.5 * (lo + hi)
            panels.graded(k, c_left, lo - c_left, mid - c_left, 1.0, ratio, depth, power)
            panels.graded(k, c_right, c_right - hi, c_right - mid, -1.0, ratio, depth, power)
        elif close_l:
            panels.graded(k, c_left, near_l, hi - c_left, 1.0, ratio, depth, power)
        elif close_r:
            panels.graded(k, c_right, near_r, c_right - lo, -1.0, ratio, depth, power)
        else:
            panels.plain(k, lo, hi)

    for k, (lo, hi) in enumerate(zip(a, b)):
        if not hi > lo:
            continue
        inside = anchors[(anchors > lo) & (anchors < hi)]
        j = np.searchsorted(anchors, lo, side="right")
        before = anchors[j - 1] if j > 0 else None
        jr = np.searchsorted(anchors, hi, side="left")
        after = anchors[jr] if jr < anchors.size else None
        cuts = np.concatenate([[lo], inside, [hi]])
        for m in range(len(cuts) - 1):
            x0, x1 = cuts[m], cuts[m + 1]
            c_left = x0 if m > 0 else before
            c_right = x1 if m < len(cuts) - 2 else after
            one_sided(k, x0, x1, c_left, c_right)

    args = [np.asarray(v, dtype=float) for v in (panels.c, panels.L, panels.s_lo, panels.p, panels.dir)]
    if not panels.owner:
        empty = np.empty((0, 16)), np.empty((0, 8))
        return NodeSet(np.empty(0, dtype=np.int64), empty[0], empty[0], empty[1], empty[1], len(a))
    t_hi, w_hi = _mapped(_HI, *args)
    t_lo, w_lo = _mapped(_LO, *args)
    return NodeSet(np.asarray(panels.owner, dtype=np.int64), t_hi, w_hi, t_lo, w_lo, len(a))
