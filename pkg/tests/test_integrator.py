import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from scipy.integrate import solve_ivp

from conftest import pair_state, run_pair
from singular_cs.config import InitialCondition, SimConfig
from singular_cs.errors import InvalidMerge, InvalidParameter
from singular_cs.integrator import (
    EventKind,
    EventRecord,
    StepControl,
    detect_events,
    integrate,
    merge,
    simulate_refinement_ladder,
    step_adaptive,
)
from singular_cs.model import ParticleSystem, momentum, rhs, velocity_diameter_r
from singular_cs.oracle import TwoBodyState, solve_reduced
from singular_cs.weights import WeightKernel

K05 = WeightKernel.singular(0.5, 1e-10)


def test_step_equilibrium_translates_exactly():
    s = ParticleSystem(0.0, [[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]], [[0.3, -0.2]] * 3)
    new, dt, _ = step_adaptive(s, K05, StepControl(), dt=0.01)
    np.testing.assert_allclose(new.positions, s.positions + 0.01 * s.velocities, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(new.velocities, s.velocities)


def test_step_symmetric_pair_keeps_midpoint():
    s = ParticleSystem(0.0, [[-1.0], [1.0]], [[1.0], [-1.0]])
    k = WeightKernel.singular(0.3, 1e-10)
    for _ in range(20):
        s, _, _ = step_adaptive(s, k, StepControl(), dt=0.01)
        assert abs(s.positions.sum()) <= 1e-15


def test_step_matches_reduced_solution():
    s = pair_state(1.0, -0.5)
    ctrl = StepControl()
    t = 0.0
    for _ in range(30):
        s, dt, _ = step_adaptive(s, K05, ctrl, dt=0.02)
        t += dt
    w, u = solve_reduced(TwoBodyState(1.0, -0.5, 0.5), t, tol=1e-11)
    assert s.positions[1, 0] - s.positions[0, 0] == pytest.approx(w, abs=1e-9)
    assert s.velocities[1, 0] - s.velocities[0, 0] == pytest.approx(u, abs=1e-9)


def test_detect_events_far_pair_is_empty():
    a = ParticleSystem(0.0, [[0.0], [1.0]], [[0.0], [0.0]])
    b = ParticleSystem(0.1, [[0.0], [1.0]], [[0.0], [0.0]])
    assert detect_events(a, b, StepControl()) == []


def test_detect_events_rejects_backward_step():
    a = ParticleSystem(0.0, [[0.0], [1.0]], [[0.0], [0.0]])
    with pytest.raises(InvalidParameter):
        detect_events(a, a.copy(), StepControl())


def test_detect_events_crossing():
    # straight-line crossing at t = 0.5 with relative speed 2
    a = ParticleSystem(0.0, [[-0.5], [0.5]], [[1.0], [-1.0]])
    b = ParticleSystem(1.0, [[0.5], [-0.5]], [[1.0], [-1.0]])
    (ev,) = detect_events(a, b, StepControl())
    assert ev.kind is EventKind.COLLISION
    assert ev.t == pytest.approx(0.5, abs=1e-12)
    assert ev.relative_speed == pytest.approx(2.0, rel=1e-12)


def test_merge_identical():
    s = ParticleSystem(0.0, [[1.0], [1.0]], [[2.0], [2.0]])
    m = merge(s, EventRecord(0.0, EventKind.STICKING, (0, 1)))
    np.testing.assert_array_equal(m.positions, [[1.0], [1.0]])
    np.testing.assert_array_equal(m.velocities, [[2.0], [2.0]])
    assert m.partition.size[m.partition.find(0)] == 2


def test_merge_mean():
    ctrl = StepControl()
    s = ParticleSystem(0.0, [[0.0], [ctrl.eps_x / 2]], [[0.0], [ctrl.eps_v / 2]])
    m = merge(s, EventRecord(0.0, EventKind.STICKING, (0, 1)), ctrl)
    np.testing.assert_allclose(m.positions, [[ctrl.eps_x / 4]] * 2, rtol=1e-15)
    np.testing.assert_allclose(m.velocities, [[ctrl.eps_v / 4]] * 2, rtol=1e-15)


def test_merge_weighted_by_size():
    eps = 1e-7
    s = ParticleSystem(0.0, [[0.0], [0.0], [0.0]], [[0.0], [0.0], [3 * eps]])
    s.partition.union(0, 1, 0.0)
    m = merge(s, EventRecord(0.0, EventKind.STICKING, (1, 2)), StepControl())
    np.testing.assert_allclose(m.velocities, [[eps]] * 3, rtol=1e-15)
    assert m.partition.n_clusters() == 1


def test_merge_rejects_fast_pair_and_collisions():
    s = ParticleSystem(0.0, [[0.0], [0.0]], [[0.0], [1.0]])
    with pytest.raises(InvalidMerge):
        merge(s, EventRecord(0.0, EventKind.STICKING, (0, 1)), StepControl())
    with pytest.raises(InvalidMerge):
        merge(s, EventRecord(0.0, EventKind.COLLISION, (0, 1)))


def test_single_particle_exact():
    s = ParticleSystem(0.0, [[1.0, -2.0]], [[0.5, 0.25]])
    run = integrate(s, K05, StepControl(), 3.0, sample_dt=0.5)
    assert run.events == []
    t = run.trajectory.times
    np.testing.assert_allclose(run.trajectory.positions[:, 0], s.positions[0] + t[:, None] * s.velocities[0], atol=1e-14)


def test_critical_pair_sticks_at_one(critical_run):
    (ev,) = critical_run.events
    assert ev.kind is EventKind.STICKING
    assert ev.t == pytest.approx(1.0, abs=1e-3)
    final = critical_run.final_state
    assert final.partition.n_clusters() == 1
    np.testing.assert_allclose(final.velocities, 0.0, atol=1e-6)


def test_crossing_pair_one_collision(crossing_run):
    (ev,) = crossing_run.events
    assert ev.kind is EventKind.COLLISION
    assert ev.relative_speed == pytest.approx(1.0, rel=1e-4)
    X, V = crossing_run.trajectory.state_at([10.0])
    w = X[0, 1, 0] - X[0, 0, 0]
    ref_w, _ = solve_reduced(TwoBodyState(1.0, -3.0, 0.5), 10.0)
    assert w == pytest.approx(ref_w, abs=1e-4)
    # the floor eps = 1e-10 shifts the limit by about eps**(1 - alpha) = 1e-5
    assert abs(w + 0.25) <= 5e-5


def test_event_times_ordered(many_body_run):
    times = [e.t for e in many_body_run.events]
    assert times == sorted(times)


def test_dense_output_matches_reference_smooth():
    rng = np.random.default_rng(3)
    X0, V0 = rng.uniform(-1, 1, (5, 2)), rng.uniform(-1, 1, (5, 2))
    k = WeightKernel.cucker_smale(1.0, 0.5)
    s = ParticleSystem(0.0, X0, V0)
    run = integrate(s, k, StepControl(), 2.0)

    def f(_, y):
        st_ = ParticleSystem(0.0, y[:10].reshape(5, 2), y[10:].reshape(5, 2))
        return np.concatenate([y[10:], rhs(st_, k).ravel()])

    grid = np.linspace(0, 2, 37)
    ref = solve_ivp(f, (0, 2), np.concatenate([X0.ravel(), V0.ravel()]), method="DOP853", rtol=1e-13, atol=1e-14, t_eval=grid)
    X, V = run.trajectory.state_at(grid)
    np.testing.assert_allclose(X.reshape(len(grid), -1), ref.y[:10].T, atol=1e-8)
    np.testing.assert_allclose(V.reshape(len(grid), -1), ref.y[10:].T, atol=1e-8)


def test_step_control_validation():
    with pytest.raises(InvalidParameter):
        StepControl(rel_tol=0.0)
    with pytest.raises(InvalidParameter):
        StepControl(dt_init=1.0, dt_max=0.1)
    t = StepControl().tightened(0.1)
    assert t.rel_tol == pytest.approx(1e-10) and t.eps_x == pytest.approx(1e-9)


def test_ladder_single_particle_identical():
    cfg = SimConfig(n_particles=1, dim=1, t_final=1.0, initial=InitialCondition(positions=((0.0,),), velocities=((1.0,),)))
    rep = simulate_refinement_ladder(cfg, 3)
    assert all(d <= 1e-15 for d in rep.distances)


def test_ladder_critical_sticking_converges():
    from singular_cs.scenarios import scenario_config

    rep = simulate_refinement_ladder(scenario_config("critical-pair"), 3)
    errs = [abs(lv.sticking_times[0] - 1.0) for lv in rep.levels]
    assert errs[-1] <= errs[0]
    assert rep.distances[1] <= rep.distances[0]


def test_ladder_rejects_bad_arguments():
    from singular_cs.scenarios import scenario_config

    with pytest.raises(InvalidParameter):
        simulate_refinement_ladder(scenario_config("critical-pair"), 1)
    with pytest.raises(InvalidParameter):
        simulate_refinement_ladder(scenario_config("critical-pair"), 3, factor=2.0)


def test_piecewise_interaction_sets_frozen_after_merge(critical_run):
    """Once stuck, the pair stays together bit for bit."""
    traj = critical_run.trajectory
    after = traj.times > critical_run.sticking_events[0].t_detect
    np.testing.assert_array_equal(traj.positions[after, 0], traj.positions[after, 1])
    np.testing.assert_array_equal(traj.velocities[after, 0], traj.velocities[after, 1])


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(2, 6), st.integers(1, 2), st.floats(0.1, 0.9), st.integers(0, 10_000))
def test_random_runs_conserve_and_dissipate(n, d, alpha, seed):
    rng = np.random.default_rng(seed)
    s = ParticleSystem(0.0, rng.uniform(-1, 1, (n, d)), rng.uniform(-1, 1, (n, d)))
    run = integrate(s, WeightKernel.singular(alpha, 1e-10), StepControl(), 0.5)
    p0 = momentum(s)
    p1 = momentum(run.final_state)
    assert np.abs(p1 - p0).max() <= 1e-8 * (1 + np.abs(p0).max())
    r = np.asarray(run.steps.r)
    assert np.all(np.diff(r) <= 1e-8 * velocity_diameter_r(s))
    assert len(run.sticking_events) <= n - 1
    assert run.final_state.is_consistent()
