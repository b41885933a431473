"""Reference solutions for two particles on a line.

With N = 2, d = 1 and the 1/N coupling, the relative position w = x2 - x1 and
relative velocity u = v2 - v1 obey

    w' = u,    u' = -u * psi(|w|),

so du/dw = -psi(|w|) and  I(w, u) = u + sign(w) * Psi(|w|)  is conserved.  For an
approaching pair (w > 0, u < 0) the value E = u + Psi(w) decides the outcome:

* E < 0: the particles cross at speed |E| and separate to |w| -> Psi^-1(|E|).
* E = 0: they stick at t = (1 - alpha) * w**alpha / alpha.
* E > 0: they approach w -> Psi^-1(E) without touching.

All times are obtained from t(w) = int dw / |u(w)| by adaptive quadrature and
inverted with a bracketing root finder, independent of the main integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .errors import OracleInconsistency, OutOfDomain
from .weights import WeightKernel


class OutcomeClass(str, Enum):
    CROSSING = "crossing"
    EXACT_STICKING = "exact_sticking"
    ASYMPTOTIC_APPROACH = "asymptotic_approach"


@dataclass(frozen=True)
class TwoBodyState:
    w: float
    u: float
    alpha: float

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise OutOfDomain(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not (math.isfinite(self.w) and math.isfinite(self.u)):
            raise OutOfDomain("w and u must be finite")

    @property
    def kernel(self) -> WeightKernel:
        return WeightKernel.singular(self.alpha)

    @property
    def energy(self) -> float:
        """E = u + sign(w) Psi(|w|)."""
        return self.u + math.copysign(self.kernel.primitive(abs(self.w)), self.w)


@dataclass(frozen=True)
class TwoBodyOutcome:
    outcome: OutcomeClass
    energy: float
    t_event: float | None = None
    impact_speed: float | None = None
    w_limit: float | None = None

    def as_dict(self) -> dict:
        return {
            "class": self.outcome.value,
            "E": self.energy,
            "t_event": self.t_event,
            "impact_speed": self.impact_speed,
            "w_limit": self.w_limit,
        }


def _check_approach(init: TwoBodyState) -> None:
    if not (init.w > 0 and init.u < 0):
        raise OutOfDomain("classify needs an approaching pair: w > 0 and u < 0")


def _quad(fun, a, b, **kw) -> float:
    val, _ = quad(fun, a, b, limit=200, epsabs=1e-14, epsrel=1e-12, **kw)
    return val


def crossing_time(alpha: float, w0: float, E: float) -> float:
    """Time to reach w = 0 from w0 when E < 0: int_0^w0 dw / (|E| + Psi(w))."""
    k = WeightKernel.singular(alpha)
    return _quad(lambda w: 1.0 / (-E + k.primitive(w)), 0.0, w0)


def classify(init: TwoBodyState, rel_tol: float = 1e-12) -> TwoBodyOutcome:
    """Outcome of an approaching pair; |E| below ``rel_tol * Psi(w)`` counts as critical."""
    _check_approach(init)
    k = init.kernel
    a = init.alpha
    E = init.energy
    if abs(E) <= rel_tol * k.primitive(init.w):
        return TwoBodyOutcome(OutcomeClass.EXACT_STICKING, E, t_event=(1 - a) * init.w**a / a, w_limit=0.0)
    if E < 0:
        return TwoBodyOutcome(
            OutcomeClass.CROSSING,
            E,
            t_event=crossing_time(a, init.w, E),
            impact_speed=-E,
            w_limit=-k.primitive_inverse(-E),
        )
    return TwoBodyOutcome(OutcomeClass.ASYMPTOTIC_APPROACH, E, w_limit=k.primitive_inverse(E))


def _invert(time_of, t: float, lo: float, hi: float) -> float:
    """Solve time_of(q) = t for q in [lo, hi]; time_of increasing in q."""
    if t <= 0:
        return lo
    if time_of(hi) <= t:
        return hi
    return brentq(lambda q: time_of(q) - t, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def _invert_tail(speed, kappa: float, q0: float, q_lim: float, t: float) -> float:
    """Solve int_q0^q dq'/speed(q') = t where speed vanishes like kappa * (q_lim - q).

    The logarithmic part is integrated exactly and the search runs over the
    log-gap zeta = ln((q_lim - q0) / (q_lim - q)).
    """
    span = q_lim - q0
    if t <= 0 or span <= 0:
        return q0

    def regular(q):
        z = q_lim - q
        return 1.0 / speed(q) - 1.0 / (kappa * z) if z > 0 else 0.0

    def excess(zeta):
        q = q_lim - span * math.exp(-zeta)
        return zeta / kappa + _quad(regular, q0, q) - t

    total_regular = _quad(regular, q0, q_lim)
    hi = kappa * (t + abs(total_regular)) + 1.0
    while excess(hi) < 0:
        hi *= 2
    zeta = brentq(excess, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    return q_lim - span * math.exp(-zeta)


def _reference(init: TwoBodyState, t: float) -> tuple[float, float]:
    k = init.kernel
    a = init.alpha
    if init.u == 0:
        return init.w, 0.0
    # mirror so that w >= 0
    sgn = 1.0 if init.w > 0 or (init.w == 0 and init.u > 0) else -1.0
    w0, u0 = sgn * init.w, sgn * init.u
    E = u0 + k.primitive(w0)
    if u0 > 0:
        # separating: u = E - Psi(w) decays to zero at w = Psi^-1(E)
        w_lim = k.primitive_inverse(E)
        w = _invert_tail(lambda q: E - k.primitive(q), k(w_lim), w0, w_lim, t)
        return sgn * w, sgn * max(E - k.primitive(w), 0.0)
    if abs(E) <= 1e-14 * max(1.0, k.primitive(w0)):
        t_s = (1 - a) * w0**a / a
        if t >= t_s:
            return 0.0, 0.0
        w = (w0**a - a * t / (1 - a)) ** (1 / a)
        return sgn * w, -sgn * k.primitive(w)
    if E > 0:
        w_lim = k.primitive_inverse(E)
        q = _invert_tail(lambda q: k.primitive(w0 - q) - E, k(w_lim), 0.0, w0 - w_lim, t)
        w = w0 - q
        return sgn * w, -sgn * max(k.primitive(w) - E, 0.0)
    t_c = crossing_time(a, w0, E)
    if t <= t_c:
        q = _invert(lambda q: _quad(lambda s: 1.0 / (-E + k.primitive(w0 - s)), 0.0, q), t, 0.0, w0)
        w = w0 - q
        return sgn * w, sgn * (E - k.primitive(w))
    y_lim = k.primitive_inverse(-E)
    y = _invert_tail(lambda q: -E - k.primitive(q), k(y_lim), 0.0, y_lim, t - t_c)
    return -sgn * y, sgn * min(E + k.primitive(y), 0.0)


def solve_reduced(init: TwoBodyState, t: float, tol: float = 1e-8) -> tuple[float, float]:
    """(w(t), u(t)) of the reduced two-body system.

    The answer comes from quadrature of the first integral.  As a consistency
    check the system is also integrated with DOP853 at ``tol / 100`` over the
    stretch where |w| stays above 1 % of its initial value; the first integral
    must drift by less than ``tol`` there and the two answers must agree.
    """
    if t < 0:
        raise OutOfDomain("t must be >= 0")
    if tol <= 0:
        raise OutOfDomain("tol must be > 0")
    w, u = _reference(init, t)
    if init.u != 0 and init.w != 0:
        _cross_check(init, t, tol, (w, u))
    return w, u


def _cross_check(init: TwoBodyState, t: float, tol: float, answer) -> None:
    k = init.kernel
    floor = 0.01 * abs(init.w)

    def rhs(_, y):
        return [y[1], -y[1] * k(abs(y[0]))]

    def near(_, y):
        return abs(y[0]) - floor

    near.terminal = True
    sol = solve_ivp(rhs, (0.0, t), [init.w, init.u], method="DOP853", rtol=tol / 100, atol=tol / 100 * 1e-3, events=near)
    if sol.status < 0:
        raise OracleInconsistency(f"reference integration failed: {sol.message}")
    w_path, u_path = sol.y
    drift = np.abs(u_path + np.sign(w_path) * k.primitive(np.abs(w_path)) - init.energy).max()
    if drift > tol:
        raise OracleInconsistency(f"first integral drifted by {drift:.3e}")
    if sol.status == 0:
        scale = 1.0 + abs(init.w) + abs(init.u)
        if abs(w_path[-1] - answer[0]) > tol * scale or abs(u_path[-1] - answer[1]) > tol * scale:
            raise OracleInconsistency(
                f"quadrature ({answer[0]!r}, {answer[1]!r}) and ODE ({w_path[-1]!r}, {u_path[-1]!r}) disagree"
            )


def first_integral_residual(w, u, alpha: float) -> float:
    """Max drift of u + sign(w) Psi(|w|) along samples, relative to |u(0)| + Psi(|w(0)|).

    Samples must come from one stretch without a merge; a change of sign of u
    is impossible for this system and is rejected.
    """
    w = np.asarray(w, dtype=float)
    u = np.asarray(u, dtype=float)
    if w.shape != u.shape or w.size == 0:
        raise OutOfDomain("w and u must be non-empty and of equal length")
    nz = u[u != 0]
    if nz.size and (np.any(nz > 0) and np.any(nz < 0)):
        raise OutOfDomain("relative velocity changes sign inside the segment")
    k = WeightKernel.singular(alpha)
    invariant = u + np.sign(w) * k.primitive(np.abs(w))
    scale = abs(u[0]) + k.primitive(abs(w[0]))
    if scale == 0:
        return 0.0
    return float(np.abs(invariant - invariant[0]).max() / scale)


def integrability_reference(init: TwoBodyState, theta: float, t_end: float) -> float:
    """int_0^t_end |w(t)|^-theta dt for a crossing pair, by change of variables t -> w."""
    out = classify(init)
    if out.outcome is not OutcomeClass.CROSSING:
        raise OutOfDomain("reference integral implemented for crossing pairs only")
    k = init.kernel
    E = out.energy
    w_end, _ = solve_reduced(init, t_end)
    if w_end >= 0:
        return _quad(lambda w: w**-theta / (-E + k.primitive(w)), w_end, init.w)
    pre = _quad(lambda w: w**-theta / (-E + k.primitive(w)), 0.0, init.w)
    post = _quad(lambda y: y**-theta / (-E - k.primitive(y)), 0.0, -w_end)
    return pre + post
