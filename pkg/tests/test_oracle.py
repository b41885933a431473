"""Two-body oracle.  For alpha = 1/2 the substitution s = sqrt(w) makes every
integral elementary; the frozen values below are those closed forms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from singular_cs.errors import OutOfDomain
from singular_cs.oracle import (
    OutcomeClass,
    TwoBodyState,
    classify,
    crossing_time,
    first_integral_residual,
    integrability_reference,
    solve_reduced,
)
from singular_cs.weights import WeightKernel


def test_classify_examples():
    out = classify(TwoBodyState(1.0, -2.0, 0.5))
    assert out.outcome is OutcomeClass.EXACT_STICKING
    assert out.t_event == pytest.approx(1.0, rel=1e-15)

    out = classify(TwoBodyState(1.0, -1.0, 0.5))
    assert out.outcome is OutcomeClass.ASYMPTOTIC_APPROACH
    assert out.w_limit == pytest.approx(0.25, rel=1e-14)

    out = classify(TwoBodyState(1.0, -3.0, 0.5))
    assert out.outcome is OutcomeClass.CROSSING
    assert out.impact_speed == pytest.approx(1.0, rel=1e-15)
    assert out.w_limit == pytest.approx(-0.25, rel=1e-14)


def test_crossing_time_closed_form():
    # int_0^1 dw / (1 + 2 sqrt(w)) = 1 - ln(3) / 2
    assert crossing_time(0.5, 1.0, -1.0) == pytest.approx(1 - 0.5 * math.log(3), rel=1e-12)
    assert classify(TwoBodyState(1.0, -3.0, 0.5)).t_event == pytest.approx(1 - 0.5 * math.log(3), rel=1e-12)


def test_classify_requires_approach():
    with pytest.raises(OutOfDomain):
        classify(TwoBodyState(1.0, 0.5, 0.5))
    with pytest.raises(OutOfDomain):
        TwoBodyState(1.0, -1.0, 1.2)


def test_solve_reduced_fixed_point():
    for t in (0.0, 1.0, 7.5):
        assert solve_reduced(TwoBodyState(0.7, 0.0, 0.3), t) == (0.7, 0.0)


def test_solve_reduced_critical_path():
    # u = -2 sqrt(w) gives w = (1 - t)^2 until contact at t = 1
    init = TwoBodyState(1.0, -2.0, 0.5)
    for t in (0.25, 0.5, 0.9):
        w, u = solve_reduced(init, t)
        assert w == pytest.approx((1 - t) ** 2, abs=1e-10)
        assert u == pytest.approx(-2 * (1 - t), abs=1e-9)
    assert solve_reduced(init, 1.5) == (0.0, 0.0)


def test_solve_reduced_crossing_pre_impact():
    # time to reach w = 1/4 from w = 1 with E = -1: 1/2 - ln(3/2)/2
    t = 0.5 - 0.5 * math.log(1.5)
    w, u = solve_reduced(TwoBodyState(1.0, -3.0, 0.5), t)
    assert w == pytest.approx(0.25, abs=1e-10)
    assert u == pytest.approx(-2.0, abs=1e-9)


def test_solve_reduced_crossing_tail():
    w, u = solve_reduced(TwoBodyState(1.0, -3.0, 0.5), 200.0)
    assert w == pytest.approx(-0.25, abs=1e-6)
    assert abs(u) < 1e-5
    # post-crossing first integral u = E + Psi(|w|)
    assert u == pytest.approx(-1 + 2 * math.sqrt(-w), abs=1e-9)


def test_solve_reduced_asymptotic_tail():
    w, u = solve_reduced(TwoBodyState(1.0, -1.0, 0.5), 200.0)
    assert w == pytest.approx(0.25, abs=1e-6)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 4.0])
def test_sticking_time_scaling(lam):
    a = 0.3
    k = WeightKernel.singular(a)
    base = classify(TwoBodyState(1.0, -k.primitive(1.0), a)).t_event
    out = classify(TwoBodyState(lam, -k.primitive(lam), a))
    assert out.outcome is OutcomeClass.EXACT_STICKING
    assert out.t_event == pytest.approx(base * lam**a, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.1, 3.0), st.floats(0.05, 5.0))
def test_trichotomy_consistent_with_energy(alpha, w, speed):
    init = TwoBodyState(w, -speed, alpha)
    out = classify(init)
    E = init.energy
    if out.outcome is OutcomeClass.CROSSING:
        assert E < 0 and out.impact_speed == pytest.approx(-E)
    elif out.outcome is OutcomeClass.ASYMPTOTIC_APPROACH:
        assert E > 0 and 0 < out.w_limit < w
    else:
        assert abs(E) <= 1e-12 * init.kernel.primitive(w)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(0.2, 2.0), st.floats(0.1, 4.0), st.floats(0.0, 3.0))
def test_solution_preserves_first_integral(alpha, w, speed, t):
    init = TwoBodyState(w, -speed, alpha)
    wt, ut = solve_reduced(init, t)
    k = init.kernel
    if wt != 0 or ut != 0:
        assert ut + math.copysign(k.primitive(abs(wt)), wt) == pytest.approx(init.energy, abs=1e-8)


def test_first_integral_residual():
    k = WeightKernel.singular(0.5)
    w = np.linspace(1.0, 0.3, 20)
    u = 1.0 - k.primitive(w)
    assert first_integral_residual(w, u, 0.5) <= 1e-15
    assert first_integral_residual(w, np.zeros_like(w), 0.5) == pytest.approx(
        np.abs(k.primitive(w) - k.primitive(1.0)).max() / k.primitive(1.0)
    )
    assert first_integral_residual([1.0, 1.0], [0.0, 0.0], 0.5) == 0.0
    with pytest.raises(OutOfDomain):
        first_integral_residual([1.0, 0.9], [-1.0, 1.0], 0.5)


def test_integrability_reference_closed_form():
    # theta = alpha = 1/2: int |w|^-1/2 dt = ln 3 before impact and -ln(1 - 2 sqrt|w|) after
    init = TwoBodyState(1.0, -3.0, 0.5)
    t_end = 2.0
    w_end, _ = solve_reduced(init, t_end)
    expected = math.log(3.0) - math.log(1 - 2 * math.sqrt(-w_end))
    assert integrability_reference(init, 0.5, t_end) == pytest.approx(expected, rel=1e-10)
    with pytest.raises(OutOfDomain):
        integrability_reference(TwoBodyState(1.0, -1.0, 0.5), 0.5, 1.0)
