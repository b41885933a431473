"""Adaptive integration with collision/sticking events and cluster restarts.

The dynamics are advanced with the Dormand-Prince 5(4) pair.  Between two
sticking times the cluster partition is frozen and only one state row per
cluster is integrated (an *epoch*).  Collisions are integrated through with the
floored kernel; a sticking event merges the clusters and starts a new epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidMerge, InvalidParameter, NonFinite, PartialResult, SingularCSError, StepUnderflow
from .model import (
    ClusterPartition,
    Normalization,
    ParticleSystem,
    cluster_accelerations,
    cluster_r,
    cluster_R,
    pair_geometry,
    settle_initial_clusters,
)
from .weights import KernelKind, WeightKernel

# Dormand-Prince 5(4) tableau with the free 4th-order interpolant (Shampine).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

# Interior points (fractions of a step) checked for events.
_PROBES = np.linspace(0.0, 1.0, 5)
# grid for locating turning points of the dense velocity, and GL rule for arc length
_TV_GRID = np.linspace(0.0, 1.0, 33)
_GL16 = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class StepControl:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    dt_init: float = 1e-3
    dt_min: float = 1e-15
    dt_max: float = 0.1
    eps_x: float = 1e-8
    eps_v: float = 1e-6
    event_bisect_tol: float = 1e-13
    bind_time: float = 1e-4
    max_steps: int = 2_000_000

    def __post_init__(self) -> None:
        for name in ("rel_tol", "abs_tol", "dt_init", "dt_min", "dt_max", "eps_x", "eps_v", "event_bisect_tol", "bind_time"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameter(f"{name} must be a positive finite number, got {value!r}")
        if not self.dt_min <= self.dt_init <= self.dt_max:
            raise InvalidParameter("need dt_min <= dt_init <= dt_max")
        if self.max_steps < 1:
            raise InvalidParameter("max_steps must be >= 1")

    def tightened(self, factor: float) -> "StepControl":
        """Tolerances and event thresholds times ``factor``; dt_max times factor**(1/5)."""
        dt_max = self.dt_max * factor ** 0.2
        return replace(
            self,
            rel_tol=self.rel_tol * factor,
            abs_tol=self.abs_tol * factor,
            eps_x=self.eps_x * factor,
            eps_v=self.eps_v * factor,
            event_bisect_tol=max(self.event_bisect_tol * factor, 1e-15),
            bind_time=self.bind_time * factor,
            dt_max=dt_max,
            dt_init=min(self.dt_init, dt_max),
            dt_min=min(self.dt_min, self.dt_init * factor, dt_max),
        )


class EventKind(str, Enum):
    COLLISION = "collision"
    STICKING = "sticking"


@dataclass(frozen=True)
class EventRecord:
    """A collision or sticking occurrence.

    For sticking events ``t`` is the estimated contact time and ``t_detect`` the
    time at which the tolerance test fired and the clusters were merged.
    """

    t: float
    kind: EventKind
    members: tuple[int, int]
    t_detect: float | None = None
    distance: float = 0.0
    relative_speed: float = 0.0


# ---------------------------------------------------------------------------
# reduced system and dense output


class ReducedSystem:
    """One row per cluster: y = (X.ravel(), V.ravel())."""

    def __init__(self, roots, m, rows, dim: int, kernel: WeightKernel, coupling: float):
        self.roots = np.asarray(roots)
        self.m = np.asarray(m, dtype=float)
        self.rows = np.asarray(rows)
        self.K = len(self.roots)
        self.dim = dim
        self.kernel = kernel
        self.coupling = coupling
        self.iu, self.ju = np.triu_indices(self.K, 1)
        self._diag = np.eye(self.K, dtype=bool)

    @classmethod
    def from_state(cls, state: ParticleSystem, kernel: WeightKernel) -> "ReducedSystem":
        roots, m, _, _ = state.reduced()
        rows = np.searchsorted(roots, state.partition.labels())
        return cls(roots, m, rows, state.dim, kernel, state.coupling)

    def pack(self, X, V) -> np.ndarray:
        return np.concatenate([np.ravel(X), np.ravel(V)])

    def split(self, y):
        """Works on a single vector (n,) or a stack (..., n)."""
        half = self.K * self.dim
        shape = y.shape[:-1] + (self.K, self.dim)
        return y[..., :half].reshape(shape), y[..., half:].reshape(shape)

    def f(self, y: np.ndarray) -> np.ndarray:
        X, V = self.split(y)
        k = self.kernel
        if self.K == 1 or not (k.is_singular and k.floor > 0):
            acc = cluster_accelerations(X, V, self.m, k, self.coupling)
            return self.pack(V, acc)
        # same sum as cluster_accelerations, without the per-call checks
        dx = X[None, :, :] - X[:, None, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", dx, dx))
        w = np.maximum(dist, k.floor) ** -k.alpha
        w[self._diag] = 0.0
        w *= self.m[None, :]
        dv = V[None, :, :] - V[:, None, :]
        acc = self.coupling * np.sum(w[:, :, None] * dv, axis=1)
        if not np.all(np.isfinite(acc)):
            raise NonFinite("acceleration overflow")
        return np.concatenate([V.ravel(), acc.ravel()])


@dataclass
class Epoch:
    """Dense output of all accepted steps between two restarts."""

    system: ReducedSystem
    t_start: float
    t0: list | np.ndarray = field(default_factory=list)
    h: list | np.ndarray = field(default_factory=list)
    t1: list | np.ndarray = field(default_factory=list)
    y0: list | np.ndarray = field(default_factory=list)
    Q: list | np.ndarray = field(default_factory=list)
    y_start: np.ndarray | None = None

    def append(self, t0: float, h: float, t1: float, y0: np.ndarray, Q: np.ndarray) -> None:
        self.t0.append(t0)
        self.h.append(h)
        self.t1.append(t1)
        self.y0.append(y0)
        self.Q.append(Q)

    def freeze(self) -> None:
        n = 2 * self.system.K * self.system.dim
        self.t0 = np.asarray(self.t0, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        self.t1 = np.asarray(self.t1, dtype=float)
        self.y0 = np.asarray(self.y0, dtype=float).reshape(-1, n)
        self.Q = np.asarray(self.Q, dtype=float).reshape(-1, n, 4)

    @property
    def t_end(self) -> float:
        return float(self.t1[-1]) if len(self.t1) else self.t_start

    @property
    def n_steps(self) -> int:
        return len(self.t0)

    def eval(self, t, seg=None) -> np.ndarray:
        """Reduced state rows at times ``t`` (array); optional explicit segment indices."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.n_steps == 0:
            return np.broadcast_to(self.y_start, t.shape + self.y_start.shape).copy()
        if seg is None:
            seg = np.clip(np.searchsorted(self.t1, t, side="left"), 0, self.n_steps - 1)
        theta = (t - self.t0[seg]) / self.h[seg]
        powers = np.stack([theta, theta**2, theta**3, theta**4], axis=-1)
        return self.y0[seg] + np.einsum("snk,sk->sn", self.Q[seg], powers)


def _step_variation(Qv: np.ndarray, theta_end: float) -> np.ndarray:
    """Variation of each cluster velocity along the dense output on [0, theta_end].

    ``Qv`` (K, d, 4) holds the coefficients of theta, ..., theta**4.  In one
    dimension the velocity is split at the turning points of its cubic
    derivative and the |increments| of the monotone pieces are summed; in
    higher dimension the arc length of the velocity curve is integrated.
    """
    powers = np.arange(1, 5)
    dcoef = Qv * powers  # coefficients of theta**0..3 in dV/dtheta

    def vel(th):  # (G,) -> (G, K, d)
        return np.einsum("kdp,gp->gkd", Qv, th[:, None] ** powers)

    def dvel(th):
        return np.einsum("kdp,gp->gkd", dcoef, th[:, None] ** (powers - 1))

    if Qv.shape[1] > 1:
        x, w = _GL16
        th = 0.5 * theta_end * (x + 1.0)
        return 0.5 * theta_end * np.einsum("g,gk->k", w, np.linalg.norm(dvel(th), axis=-1))
    g = _TV_GRID * theta_end
    V = vel(g)[..., 0]  # (G, K)
    D = dvel(g)[..., 0]
    turn = D[:-1] * D[1:] < 0
    if not turn.any():
        return np.abs(np.diff(V, axis=0)).sum(axis=0)
    # secant start, then Newton on the cubic
    lo, hi = g[:-1, None], g[1:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        th = np.where(turn, lo - D[:-1] * (hi - lo) / (D[1:] - D[:-1]), 0.5 * (lo + hi))
    d2 = Qv[:, 0, 1:] * np.array([2.0, 6.0, 12.0])  # second derivative coefficients
    for _ in range(3):
        d1v = sum(dcoef[:, 0, p] * th**p for p in range(4))
        d2v = sum(d2[:, p] * th**p for p in range(3))
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(turn & (d2v != 0), d1v / d2v, 0.0)
        th = np.clip(th - step, lo, hi)
    Vt = sum(Qv[:, 0, p] * th ** (p + 1) for p in range(4))
    split = np.abs(Vt - V[:-1]) + np.abs(V[1:] - Vt)
    return np.where(turn, split, np.abs(V[1:] - V[:-1])).sum(axis=0)


def _dense_coefficients(h: float, K: np.ndarray) -> np.ndarray:
    return h * K.T @ _P


def _dopri_step(system: ReducedSystem, t: float, y: np.ndarray, f0: np.ndarray, h: float, ctrl: StepControl):
    K = np.empty((7, y.size))
    K[0] = f0
    for s in range(1, 6):
        K[s] = system.f(y + h * (_A[s] @ K[:s]))
    y_new = y + h * (_B @ K[:6])
    f_new = system.f(y_new)
    K[6] = f_new
    scale = ctrl.abs_tol + ctrl.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    err = float(np.sqrt(np.mean((h * (_E @ K) / scale) ** 2)))
    return y_new, f_new, K, err


def _min_pair_distance(system: ReducedSystem, y: np.ndarray) -> float:
    if system.K < 2:
        return float("inf")
    X, _ = system.split(y)
    _, dist = pair_geometry(X)
    return float(dist[system.iu, system.ju].min())


def _adaptive_step(system, t, y, f0, h, ctrl, t_limit):
    """Take one accepted step; returns (h_used, y_new, f_new, K, err, h_next, n_rejected)."""
    rejected = 0
    if system.K == 1 and math.isfinite(t_limit):
        # a lone cluster moves on a straight line: one exact step
        h = t_limit - t
    else:
        h = min(h, ctrl.dt_max, t_limit - t)
    while True:
        if h < ctrl.dt_min and h < t_limit - t:
            raise StepUnderflow(
                "step size fell below dt_min", t=t, dt=h, min_pair_distance=_min_pair_distance(system, y)
            )
        y_new, f_new, K, err = _dopri_step(system, t, y, f0, h, ctrl)
        if np.isfinite(err) and err <= 1.0:
            factor = 10.0 if err == 0 else min(10.0, 0.9 * err ** -0.2)
            return h, y_new, f_new, K, err, h * factor, rejected
        rejected += 1
        shrink = 0.2 if not np.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
        h *= shrink
        if not np.all(np.isfinite(y_new)) and h < ctrl.dt_min:
            raise NonFinite(f"non-finite state near t={t!r}")


def step_adaptive(state: ParticleSystem, kernel: WeightKernel, ctrl: StepControl, dt: float | None = None):
    """One accepted Dormand-Prince step of ``state``; returns (new_state, dt, error_estimate)."""
    system = ReducedSystem.from_state(state, kernel)
    _, _, X, V = state.reduced()
    y = system.pack(X, V)
    h, y_new, _, _, err, _, _ = _adaptive_step(
        system, state.t, y, system.f(y), dt or ctrl.dt_init, ctrl, t_limit=math.inf
    )
    new = state.copy()
    new.t = state.t + h
    Xn, Vn = system.split(y_new)
    new.scatter(system.roots, Xn, Vn)
    return new, h, err


# ---------------------------------------------------------------------------
# events


def _pair_kinematics(system: ReducedSystem, Y: np.ndarray):
    """Pair distances and relative speeds for stacked reduced states Y (S, n)."""
    X, V = system.split(Y)
    dX = X[:, system.ju] - X[:, system.iu]
    dV = V[:, system.ju] - V[:, system.iu]
    return dX, np.linalg.norm(dX, axis=-1), np.linalg.norm(dV, axis=-1)


def _stick_measure(system: ReducedSystem, Y: np.ndarray, ctrl: StepControl) -> np.ndarray:
    """Sticking indicator per probe and pair; a value below 1 means the pair sticks.

    A pair sticks when it is within eps_x and nearly at rest relative to each
    other (eps_v), and also when

    * it is within eps_x and approaching too slowly to get through: in the
      two-cluster reduction a pair with relative speed at most c_pair * Psi(D)
      can never cross, so it stays within eps_x of its partner;
    * it is bound: relative speed below eps_v and the relative velocity relaxes
      faster than ``bind_time`` (rate c_pair * psi(D)).  Such a pair only
      drifts toward a limit separation below D, and resolving the relaxation
      with an explicit method would take steps of order 1 / rate.
    """
    dX, D, S = _pair_kinematics(system, Y)
    g = np.maximum(D / ctrl.eps_x, S / ctrl.eps_v)
    k = system.kernel
    c_pair = system.coupling * (system.m[system.iu] + system.m[system.ju])
    if k.is_singular and k.alpha < 1:
        _, V = system.split(Y)
        dV = V[..., system.ju, :] - V[..., system.iu, :]
        approaching = np.einsum("...k,...k->...", dX, dV) < 0
        cap = c_pair * np.minimum(D, ctrl.eps_x) ** (1 - k.alpha) / (1 - k.alpha) + ctrl.eps_v
        trapped = np.where(approaching, np.maximum(D / ctrl.eps_x, S / cap), np.inf)
        g = np.minimum(g, trapped)
    with np.errstate(divide="ignore"):
        slow = 1.0 / (c_pair * k.raw()(D) * ctrl.bind_time)
    return np.minimum(g, np.maximum(S / ctrl.eps_v, slow))


def _contact_delay(kernel: WeightKernel, distance: float, speed: float, coupling: float) -> float:
    """Contact-time extrapolation for a pair still closing at about the critical speed, else 0."""
    if kernel.kind is not KernelKind.SINGULAR or kernel.alpha >= 1 or distance <= 0:
        return 0.0
    critical = coupling * kernel.primitive(distance)
    if speed < 0.5 * critical:
        return 0.0
    return contact_time_estimate(kernel, distance, coupling)


def _bisect(fun: Callable[[float], bool], a: float, b: float, tol: float) -> float:
    """Smallest t in (a, b] (up to tol) with fun(t) True, given fun(a) False and fun(b) True."""
    while b - a > tol:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if fun(mid):
            b = mid
        else:
            a = mid
    return b


def contact_time_estimate(kernel: WeightKernel, distance: float, coupling: float) -> float:
    """Remaining time of a critical two-cluster approach from ``distance``.

    Along a critical approach the relative speed is c * Psi(w), which gives
    tau = (1 - alpha) * w**alpha / (alpha * c).  Zero for kernels without
    finite-time sticking.
    """
    if kernel.kind is not KernelKind.SINGULAR or kernel.alpha >= 1 or distance <= 0 or coupling <= 0:
        return 0.0
    a = kernel.alpha
    return (1 - a) * distance**a / (a * coupling)


def _scan_step(system: ReducedSystem, interp: Callable, t0: float, t1: float, ctrl: StepControl):
    """Find sticking candidates and collisions of inter-cluster pairs inside [t0, t1].

    Returns (stick, collisions): ``stick`` is a list of (t_detect, pair_index) and
    ``collisions`` a list of (t_c, pair_index, distance, relative_speed).
    """
    if system.K < 2 or t1 <= t0:
        return [], [], None, None
    ts = t0 + _PROBES * (t1 - t0)
    Y = interp(ts)
    dX, D, S = _pair_kinematics(system, Y)
    g = _stick_measure(system, Y, ctrl)
    tol = ctrl.event_bisect_tol

    def pair_g(p):
        def below(t):
            return _stick_measure(system, interp(np.array([t])), ctrl)[0, p] < 1.0

        return below

    stick: dict[int, float] = {}
    for p in np.flatnonzero(np.any(g < 1.0, axis=0)):
        k = int(np.argmax(g[:, p] < 1.0))
        stick[p] = ts[0] if k == 0 else _bisect(pair_g(p), ts[k - 1], ts[k], tol)

    collisions = []
    if system.dim == 1:
        sign = np.sign(dX[..., 0])
        change = (sign[:-1] * sign[1:] < 0) | ((sign[1:] == 0) & (sign[:-1] != 0))
        for k, p in zip(*np.nonzero(change)):
            s0 = sign[k, p]

            def crossed(t, p=p, s0=s0):
                X, _ = system.split(interp(np.array([t]))[0])
                return np.sign(X[system.ju[p], 0] - X[system.iu[p], 0]) != s0

            tc = _bisect(crossed, ts[k], ts[k + 1], tol)
            collisions.append((tc, int(p), ts[k]))
    else:
        h_sub = (t1 - t0) / (len(ts) - 1)
        reach = D.min(axis=0) - S.max(axis=0) * h_sub
        for p in np.flatnonzero(reach < ctrl.eps_x):
            k = int(np.argmin(D[:, p]))
            lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]

            def dist(t, p=p):
                _, Dp, _ = _pair_kinematics(system, interp(np.array([t])))
                return Dp[0, p]

            res = minimize_scalar(dist, bounds=(lo, hi), method="bounded", options={"xatol": tol})
            tc = float(res.x)
            if dist(tc) < ctrl.eps_x:
                collisions.append((tc, int(p), lo))

    out = []
    for tc, p, t_left in collisions:
        _, Dc, Sc = _pair_kinematics(system, interp(np.array([tc])))
        if Sc[0, p] < ctrl.eps_v:
            if p not in stick:
                stick[p] = tc if not pair_g(p)(t_left) else t_left
                if stick[p] == tc and tc > t_left:
                    stick[p] = _bisect(pair_g(p), t_left, tc, tol)
        else:
            out.append((tc, p, float(Dc[0, p]), float(Sc[0, p])))
    return sorted((t, p) for p, t in stick.items()), out, ts, D


def detect_events(prev: ParticleSystem, next: ParticleSystem, ctrl: StepControl, kernel: WeightKernel | None = None):
    """Candidate events between two states of one step.

    The step is interpolated by a cubic Hermite curve through the end positions
    and velocities; sticking candidates carry the detection time in ``t`` (no
    contact-time extrapolation unless ``kernel`` is given).
    """
    if not prev.t < next.t:
        raise InvalidParameter("need prev.t < next.t")
    system = ReducedSystem.from_state(prev, kernel or WeightKernel.singular(0.5, 1e-12))
    _, _, X0, V0 = prev.reduced()
    X1 = next.positions[system.roots]
    V1 = next.velocities[system.roots]
    h = next.t - prev.t

    def interp(ts):
        s = (np.asarray(ts) - prev.t) / h
        s = s[:, None, None]
        h00, h10, h01, h11 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s, -2 * s**3 + 3 * s**2, s**3 - s**2
        X = h00 * X0 + h10 * h * V0 + h01 * X1 + h11 * h * V1
        d00, d10, d01, d11 = 6 * s**2 - 6 * s, 3 * s**2 - 4 * s + 1, -6 * s**2 + 6 * s, 3 * s**2 - 2 * s
        V = (d00 * X0 + d01 * X1) / h + d10 * V0 + d11 * V1
        return np.concatenate([X.reshape(len(s), -1), V.reshape(len(s), -1)], axis=1)

    stick, collisions, _, _ = _scan_step(system, interp, prev.t, next.t, ctrl)
    events = []
    for tc, p, dist, speed in collisions:
        pair = (int(system.roots[system.iu[p]]), int(system.roots[system.ju[p]]))
        events.append(EventRecord(tc, EventKind.COLLISION, pair, distance=dist, relative_speed=speed))
    for td, p in stick:
        pair = (int(system.roots[system.iu[p]]), int(system.roots[system.ju[p]]))
        _, D, S = _pair_kinematics(system, interp(np.array([td])))
        tau = 0.0
        if kernel is not None:
            c = prev.coupling * (system.m[system.iu[p]] + system.m[system.ju[p]])
            tau = _contact_delay(kernel, float(D[0, p]), float(S[0, p]), c)
        events.append(
            EventRecord(td + tau, EventKind.STICKING, pair, t_detect=td, distance=float(D[0, p]), relative_speed=float(S[0, p]))
        )
    return sorted(events, key=lambda e: e.t)


def merge(state: ParticleSystem, event: EventRecord, ctrl: StepControl | None = None) -> ParticleSystem:
    """Union the clusters of ``event.members`` at multiplicity-weighted mean position and velocity."""
    if event.kind is not EventKind.STICKING:
        raise InvalidMerge("only sticking events merge clusters")
    i, j = event.members
    part = state.partition
    ri, rj = part.find(i), part.find(j)
    if ri == rj:
        raise InvalidMerge(f"particles {i} and {j} already share a cluster")
    if ctrl is not None:
        if np.linalg.norm(state.velocities[ri] - state.velocities[rj]) >= ctrl.eps_v:
            raise InvalidMerge("relative speed is not below eps_v")
    new = state.copy()
    mi, mj = float(part.size[ri]), float(part.size[rj])
    x = (mi * state.positions[ri] + mj * state.positions[rj]) / (mi + mj)
    v = (mi * state.velocities[ri] + mj * state.velocities[rj]) / (mi + mj)
    t_merge = event.t_detect if event.t_detect is not None else event.t
    new.partition.union(ri, rj, t_merge)
    root = new.partition.find(ri)
    for k in new.partition.members(root):
        new.positions[k] = x
        new.velocities[k] = v
    return new


# ---------------------------------------------------------------------------
# runs


@dataclass
class StepSeries:
    """Per accepted step diagnostics collected during integration."""

    times: list = field(default_factory=list)
    r: list = field(default_factory=list)
    R: list = field(default_factory=list)
    momentum: list = field(default_factory=list)
    max_speed: list = field(default_factory=list)
    v_increments: list = field(default_factory=list)
    merges: list = field(default_factory=list)  # (t, r_before, r_after, row index)


@dataclass
class Trajectory:
    """Samples at the output cadence plus event times, backed by dense epochs."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    labels: np.ndarray
    epochs: list[Epoch]
    n_particles: int
    dim: int

    def epoch_at(self, t: float) -> Epoch:
        for ep in reversed(self.epochs):
            if t >= ep.t_start:
                return ep
        return self.epochs[0]

    def state_at(self, t):
        """Positions and velocities (len(t), N, d) from the dense output."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        X = np.empty((len(t), self.n_particles, self.dim))
        V = np.empty_like(X)
        starts = np.array([ep.t_start for ep in self.epochs])
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.epochs) - 1)
        for e in np.unique(idx):
            ep = self.epochs[e]
            sel = idx == e
            Xe, Ve = ep.system.split(ep.eval(t[sel]))
            X[sel] = Xe[:, ep.system.rows]
            V[sel] = Ve[:, ep.system.rows]
        return X, V

    @property
    def segment_bounds(self) -> np.ndarray:
        edges = [self.epochs[0].t_start]
        for ep in self.epochs:
            edges.extend(np.asarray(ep.t1).tolist())
        return np.unique(np.asarray(edges))


@dataclass
class Run:
    kernel: WeightKernel
    ctrl: StepControl
    t_final: float
    normalization: Normalization
    trajectory: Trajectory
    events: list[EventRecord]
    steps: StepSeries
    final_state: ParticleSystem
    initial_state: ParticleSystem
    n_steps: int
    n_rejected: int
    config: object = None
    completed: bool = True
    _series: object = None

    @property
    def sticking_events(self) -> list[EventRecord]:
        return [e for e in self.events if e.kind is EventKind.STICKING]

    @property
    def collision_events(self) -> list[EventRecord]:
        return [e for e in self.events if e.kind is EventKind.COLLISION]

    @property
    def merge_times(self) -> list[float]:
        return [m[0] for m in self.steps.merges]

    @property
    def mean_dt(self) -> float:
        return self.t_final / max(self.n_steps, 1)

    @property
    def series(self):
        if self._series is None:
            from .diagnostics import build_series

            self._series = build_series(self)
        return self._series


def _record_step(series: StepSeries, system: ReducedSystem, t: float, y: np.ndarray, tv_inc: np.ndarray, raw):
    X, V = system.split(y)
    series.times.append(t)
    series.r.append(cluster_r(V, system.m))
    series.R.append(cluster_R(X, V, system.m, raw))
    series.momentum.append(system.m @ V)
    series.max_speed.append(float(np.linalg.norm(V, axis=1).max()))
    series.v_increments.append(tv_inc)


def integrate(
    state: ParticleSystem,
    kernel: WeightKernel,
    ctrl: StepControl,
    t_final: float,
    sample_dt: float | None = None,
    config=None,
) -> Run:
    """Integrate ``state`` to ``t_final`` with event handling; see :func:`simulate`."""
    if not t_final > state.t:
        raise InvalidParameter("t_final must exceed the initial time")
    state = state.copy()
    settle_initial_clusters(state)
    initial = state.copy()
    raw = kernel.raw()
    sample_dt = sample_dt or (t_final - state.t) / 200
    cadence = np.arange(state.t, t_final, sample_dt)
    cadence = np.append(cadence, t_final) if cadence[-1] < t_final else cadence

    epochs: list[Epoch] = []
    events: list[EventRecord] = []
    series = StepSeries()
    sample_t: list[float] = []
    sample_X: list[np.ndarray] = []
    sample_V: list[np.ndarray] = []
    sample_L: list[np.ndarray] = []
    n_steps = n_rejected = 0
    h = ctrl.dt_init
    last_collision: dict[tuple[int, int], float] = {}

    def add_sample(t, X, V, labels):
        if sample_t and t <= sample_t[-1]:
            sample_X[-1], sample_V[-1], sample_L[-1] = X, V, labels
            return
        sample_t.append(t)
        sample_X.append(X)
        sample_V.append(V)
        sample_L.append(labels)

    t = state.t
    labels = state.partition.labels()
    add_sample(t, state.positions.copy(), state.velocities.copy(), labels)
    system = ReducedSystem.from_state(state, kernel)
    _, _, X, V = state.reduced()
    y = system.pack(X, V)
    _record_step(series, system, t, y, np.zeros(state.n_particles), raw)
    next_sample = 1

    try:
        while t < t_final:
            epoch = Epoch(system, t, y_start=y.copy())
            epochs.append(epoch)
            # last probe time each pair was at least eps_x apart
            last_far = np.full(len(system.iu), t)
            f = system.f(y)
            merged = False
            # a detected crossing becomes a step breakpoint
            stop = None
            while t < t_final and not merged:
                if n_steps >= ctrl.max_steps:
                    raise StepUnderflow("max_steps exceeded", t=t, dt=h, min_pair_distance=_min_pair_distance(system, y))
                limit = t_final if stop is None else stop
                h_used, y_new, f_new, Kst, _, h, rej = _adaptive_step(system, t, y, f, h, ctrl, limit)
                n_rejected += rej
                t1 = t + h_used
                if limit - t1 <= 4 * np.spacing(limit):
                    t1 = limit
                Q = _dense_coefficients(h_used, Kst)
                t0, y0 = t, y

                def interp(ts, t0=t0, y0=y0, Q=Q, h_used=h_used):
                    th = (np.asarray(ts) - t0) / h_used
                    return y0 + (np.stack([th, th**2, th**3, th**4], axis=-1) @ Q.T)

                stick, collisions, probe_t, probe_D = _scan_step(system, interp, t0, t1, ctrl)
                if stop is None and collisions and not stick:
                    first = min(c[0] for c in collisions)
                    margin = 1e-6 * (t1 - t0)
                    if t0 + margin < first < t1 - margin:
                        # redo the step so that it ends on the crossing
                        stop, h = first, first - t0
                        n_rejected += 1
                        continue
                if stop is not None and t1 >= stop:
                    stop = None
                t_end = t1
                if stick:
                    t_end = stick[0][0]
                    if t_end > t0:
                        y_new = interp(np.array([t_end]))[0]
                if probe_D is not None:
                    far = (probe_D >= ctrl.eps_x) & (probe_t[:, None] <= t_end)
                    seen = far.any(axis=0)
                    last_far[seen] = np.maximum(
                        last_far[seen], np.max(np.where(far, probe_t[:, None], -np.inf), axis=0)[seen]
                    )
                n_steps += 1
                for tc, p, dist, speed in collisions:
                    if tc > t_end:
                        continue
                    pair = (int(system.roots[system.iu[p]]), int(system.roots[system.ju[p]]))
                    prev_tc = last_collision.get(pair)
                    if prev_tc is not None and abs(tc - prev_tc) <= 10 * ctrl.event_bisect_tol:
                        continue
                    last_collision[pair] = tc
                    events.append(EventRecord(tc, EventKind.COLLISION, pair, distance=dist, relative_speed=speed))

                inc = np.zeros(state.n_particles)
                if t_end > t0:
                    epoch.append(t0, h_used, t_end, y0, Q)
                    half = system.K * system.dim
                    Qv = Q[half:].reshape(system.K, system.dim, 4)
                    inc = _step_variation(Qv, (t_end - t0) / h_used)[system.rows]
                    # cadence and collision times inside the step
                    extra = [tc for tc, *_ in collisions if t0 < tc <= t_end]
                    while next_sample < len(cadence) and cadence[next_sample] <= t_end:
                        extra.append(cadence[next_sample])
                        next_sample += 1
                    extra = sorted(set(extra) | {t_end})
                    Xs, Vs = system.split(interp(np.array(extra)))
                    for k, ts_ in enumerate(extra):
                        add_sample(float(ts_), Xs[k][system.rows], Vs[k][system.rows], labels)
                t, y = t_end, y_new

                if not stick:
                    _record_step(series, system, t, y, inc, raw)
                    f = f_new if t_end == t1 else system.f(y)
                    continue

                Xc, Vc = system.split(y)
                system_rows_before = system.rows
                state = ParticleSystem(t, Xc[system.rows], Vc[system.rows], state.partition, state.normalization)
                r_before = cluster_r(Vc, system.m)
                # simultaneous sticking: unions in index order
                for td, p in sorted(stick, key=lambda s: (system.roots[system.iu[s[1]]], system.roots[system.ju[s[1]]])):
                    if td > t_end + ctrl.event_bisect_tol:
                        continue
                    ri, rj = int(system.roots[system.iu[p]]), int(system.roots[system.ju[p]])
                    if state.partition.same(ri, rj):
                        continue
                    a, b = state.partition.find(ri), state.partition.find(rj)
                    dist = float(np.linalg.norm(state.positions[a] - state.positions[b]))
                    speed = float(np.linalg.norm(state.velocities[a] - state.velocities[b]))
                    c = state.coupling * float(state.partition.size[a] + state.partition.size[b])
                    tau = _contact_delay(kernel, dist, speed, c)
                    ev = EventRecord(t + tau, EventKind.STICKING, (ri, rj), t_detect=t, distance=dist, relative_speed=speed)
                    state = merge(state, ev)
                    # a zero crossing inside the floor region that ends stuck is part of the sticking
                    events = [
                        e for e in events
                        if not (e.kind is EventKind.COLLISION and e.members == (ri, rj) and e.t >= last_far[p])
                    ]
                    events.append(ev)
                labels = state.partition.labels()
                system = ReducedSystem.from_state(state, kernel)
                _, _, Xr, Vr = state.reduced()
                y = system.pack(Xr, Vr)
                # the averaging jump belongs to the velocity variation
                inc = inc + np.linalg.norm(state.velocities - Vc[system_rows_before], axis=1)
                series.merges.append((t, r_before, cluster_r(Vr, system.m), len(series.times)))
                add_sample(t, state.positions.copy(), state.velocities.copy(), labels)
                _record_step(series, system, t, y, inc, raw)
                merged = True
            epoch.freeze()
    except SingularCSError as exc:
        if epochs and isinstance(epochs[-1].t0, list):
            epochs[-1].freeze()
        run = _assemble(kernel, ctrl, t_final, state, initial, epochs, events, series, sample_t, sample_X, sample_V, sample_L, system, y, t, n_steps, n_rejected, config)
        run.completed = False
        raise PartialResult(f"integration stopped at t={t!r}: {exc}", run, exc) from exc

    return _assemble(kernel, ctrl, t_final, state, initial, epochs, events, series, sample_t, sample_X, sample_V, sample_L, system, y, t, n_steps, n_rejected, config)


def _assemble(kernel, ctrl, t_final, state, initial, epochs, events, series, sample_t, sample_X, sample_V, sample_L, system, y, t, n_steps, n_rejected, config) -> Run:
    X, V = system.split(y)
    final = ParticleSystem(t, X[system.rows], V[system.rows], state.partition.copy(), state.normalization)
    # events reported in time order; ties keep detection order
    events = sorted(events, key=lambda e: e.t)
    traj = Trajectory(
        np.asarray(sample_t),
        np.asarray(sample_X),
        np.asarray(sample_V),
        np.asarray(sample_L),
        epochs,
        state.n_particles,
        state.dim,
    )
    return Run(kernel, ctrl, t_final, state.normalization, traj, events, series, final, initial, n_steps, n_rejected, config)


def simulate(config) -> Run:
    """Run a configuration end to end.

    ``config`` is a :class:`singular_cs.config.SimConfig`.  Sticking events
    merge clusters and restart the integration; collisions are recorded and
    integrated through.  Raises :class:`PartialResult` carrying the completed
    prefix if the integration fails.
    """
    state = config.initial_state()
    return integrate(state, config.kernel, config.step_control, config.t_final, config.output.cadence, config=config)


# ---------------------------------------------------------------------------
# refinement ladder


@dataclass
class LadderLevel:
    level: int
    ctrl: StepControl
    floor: float
    run: Run

    @property
    def n_steps(self) -> int:
        return self.run.n_steps

    @property
    def mean_dt(self) -> float:
        return self.run.mean_dt

    @property
    def sticking_times(self) -> list[float]:
        return [e.t for e in self.run.sticking_events]


@dataclass
class LadderReport:
    levels: list[LadderLevel]
    grid: np.ndarray
    distances: list[float]
    orders: list[float]
    fitted_order: float
    final_state_changes: list[float]

    def summary(self) -> dict:
        return {
            "levels": [
                {
                    "level": lv.level,
                    "rel_tol": lv.ctrl.rel_tol,
                    "abs_tol": lv.ctrl.abs_tol,
                    "eps_x": lv.ctrl.eps_x,
                    "eps_v": lv.ctrl.eps_v,
                    "floor": lv.floor,
                    "n_steps": lv.n_steps,
                    "mean_dt": lv.mean_dt,
                    "sticking_times": lv.sticking_times,
                    "n_collisions": len(lv.run.collision_events),
                }
                for lv in self.levels
            ],
            "distances": self.distances,
            "orders": self.orders,
            "fitted_order": self.fitted_order,
            "final_state_changes": self.final_state_changes,
        }


def ladder_distance(a: Run, b: Run, grid: np.ndarray) -> float:
    """Sup-norm distance of positions and velocities on a common time grid."""
    Xa, Va = a.trajectory.state_at(grid)
    Xb, Vb = b.trajectory.state_at(grid)
    return float(max(np.abs(Xa - Xb).max(), np.abs(Va - Vb).max()))


def simulate_refinement_ladder(config, levels: int, factor: float = 0.1) -> LadderReport:
    """Rerun ``config`` with tolerances, floor and event thresholds shrunk by ``factor`` per level.

    Observed orders are measured against the mean accepted step size.
    """
    if levels < 2:
        raise InvalidParameter("a ladder needs at least two levels")
    if not 0 < factor < 1:
        raise InvalidParameter("factor must lie in (0, 1)")
    out = []
    for k in range(levels):
        cfg = config.refined(factor**k)
        out.append(LadderLevel(k, cfg.step_control, cfg.kernel.floor, simulate(cfg)))
    t0 = out[0].run.initial_state.t
    grid = np.linspace(t0, config.t_final, 201)
    dists = [ladder_distance(out[k].run, out[k + 1].run, grid) for k in range(levels - 1)]
    finals = [
        float(
            max(
                np.abs(out[k].run.final_state.positions - out[k + 1].run.final_state.positions).max(),
                np.abs(out[k].run.final_state.velocities - out[k + 1].run.final_state.velocities).max(),
            )
        )
        for k in range(levels - 1)
    ]
    hs = np.array([lv.mean_dt for lv in out])
    orders = []
    for k in range(levels - 2):
        num = math.log(dists[k] / dists[k + 1]) if dists[k] > 0 and dists[k + 1] > 0 else math.inf
        den = math.log(hs[k] / hs[k + 1]) if hs[k] != hs[k + 1] else 0.0
        orders.append(num / den if den > 0 else math.inf)
    d = np.array(dists)
    positive = d > 0
    if positive.sum() >= 2 and len(np.unique(hs[:-1][positive])) >= 2:
        slope = np.polyfit(np.log(hs[:-1][positive]), np.log(d[positive]), 1)[0]
        fitted = float(slope)
    else:
        fitted = math.inf
    return LadderReport(out, grid, dists, orders, fitted, finals)
