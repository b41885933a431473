"""Acceptance criteria.  Each test prints one PASS/FAIL line, visible with ``pytest -s`` or ``-v``."""

import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import pair_state
from singular_cs import diagnostics as D
from singular_cs.config import InitialCondition, RandomCloud, SimConfig
from singular_cs.integrator import EventKind, StepControl, integrate, ladder_distance, simulate, simulate_refinement_ladder
from singular_cs.oracle import OutcomeClass, TwoBodyState, classify
from singular_cs.scenarios import SCENARIOS, compare_backward, merged_companion, scenario_config
from singular_cs.weights import WeightKernel

FUZZ_CASES = 200
FUZZ_T = 1.0


@pytest.fixture
def report(capsys):
    def emit(k: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def scenario_runs(critical_run, crossing_run, many_body_run, flock_run):
    runs = {
        "critical-pair": critical_run,
        "crossing-pair": crossing_run,
        "many-body": many_body_run,
        "flock-classic": flock_run,
        "backward-nonuniqueness": simulate(scenario_config("backward-nonuniqueness")),
    }
    runs["backward-nonuniqueness/companion"] = simulate(merged_companion(scenario_config("backward-nonuniqueness")))
    assert set(SCENARIOS) <= set(runs)
    return runs


def engine_outcome(run) -> OutcomeClass:
    if run.sticking_events:
        return OutcomeClass.EXACT_STICKING
    if run.collision_events:
        return OutcomeClass.CROSSING
    return OutcomeClass.ASYMPTOTIC_APPROACH


def test_1_two_body_grid(report):
    start = time.perf_counter()
    mismatches, worst = [], 0.0
    for alpha in (0.1, 0.3, 0.45):
        k = WeightKernel.singular(alpha)
        for w0 in (0.5, 1.0, 2.0):
            for u0 in (-3.0, -k.primitive(w0), -0.5 * k.primitive(w0)):
                expected = classify(TwoBodyState(w0, u0, alpha))
                if expected.outcome is OutcomeClass.EXACT_STICKING:
                    t_stick = (1 - alpha) * w0**alpha / alpha
                    T = 1.3 * t_stick
                elif expected.outcome is OutcomeClass.CROSSING:
                    T = 2 * expected.t_event
                else:
                    T = 5.0
                run = integrate(pair_state(w0, u0), k.with_floor(1e-10), StepControl(), T)
                if engine_outcome(run) is not expected.outcome:
                    mismatches.append((alpha, w0, u0))
                elif expected.outcome is OutcomeClass.EXACT_STICKING:
                    worst = max(worst, abs(run.sticking_events[0].t - t_stick) / t_stick)
    elapsed = time.perf_counter() - start
    ok = not mismatches and worst <= 1e-3 and elapsed < 5.0
    report(1, ok, f"27 cases, mismatches={mismatches}, max sticking rel err={worst:.2e}, runtime={elapsed:.2f}s")


def test_2_crossing_post_state(report):
    cfg = scenario_config("crossing-pair", {"t_final": 50.0})
    run = simulate(cfg)
    X, _ = run.trajectory.state_at([50.0])
    w = X[0, 1, 0] - X[0, 0, 0]
    n_col, n_stick = len(run.collision_events), len(run.sticking_events)
    ok = abs(abs(w) - 0.25) <= 1e-3 and n_col == 1 and n_stick == 0
    report(2, ok, f"|w(50)|={abs(w):.7f} (target 0.25), collisions={n_col}, sticking={n_stick}")


def test_3_dissipation_identity(report, many_body_run):
    res0 = D.energy_identity_residual(many_body_run.series)
    ladder = simulate_refinement_ladder(scenario_config("many-body"), 3)
    res = [D.energy_identity_residual(lv.run.series) for lv in ladder.levels]
    bound = D.dissipation_bound_check(many_body_run.series)
    monotone = all(b < a for a, b in zip(res, res[1:]))
    ok = res0 <= 1e-2 and monotone and bound.holds and bound.margin > 0
    report(3, ok, f"residual={res0:.2e}, ladder residuals={[f'{r:.2e}' for r in res]}, bound margin={bound.margin:.4g}")


def test_4_conservation_and_monotonicity(report, scenario_runs):
    worst_p = max(D.momentum_drift(run.series) for run in scenario_runs.values())
    worst_r = max(D.r_monotonicity(run.series) for run in scenario_runs.values())
    ok = worst_p <= 1e-8 and worst_r <= 1e-8
    report(4, ok, f"{len(scenario_runs)} runs, max momentum drift={worst_p:.2e}, max relative r rise={worst_r:.2e}")


def test_5_uniform_bounds(report, scenario_runs):
    failed = []
    for name, run in scenario_runs.items():
        C1 = float(np.linalg.norm(run.initial_state.velocities, axis=1).max())
        rep = D.uniform_bounds_check(run.series, run.trajectory, C1=C1, tol=1e-6)
        if not rep.holds:
            failed.append(name)
    report(5, not failed, f"{len(scenario_runs)} runs, failures={failed}")


def test_6_total_variation_cauchy(report):
    details, ok = [], True
    for alpha in (0.1, 0.3, 0.45):
        ladder = simulate_refinement_ladder(scenario_config("many-body").with_overrides(alpha=alpha), 4)
        tv = np.array([D.mean_total_variation(lv.run.series) for lv in ladder.levels])
        diffs = np.abs(np.diff(tv))
        ratios = diffs[:-1] / np.maximum(diffs[1:], 1e-300)
        ok &= bool(np.all(ratios >= 1.5))
        details.append(f"alpha={alpha}: ratios={np.round(ratios, 2).tolist()}")
    report(6, ok, "; ".join(details))


def test_7_interpolation(report, critical_run, crossing_run, many_body_run):
    failed, count = [], 0
    for name, run in (("critical-pair", critical_run), ("crossing-pair", crossing_run), ("many-body", many_body_run)):
        for pair, rep in D.interpolation_checks(run, (0.3, 0.5, 0.7)):
            count += 1
            if not rep.satisfied:
                failed.append((name, pair, rep.theta))
    ps = D.PairSeries.from_callables(
        lambda t: t, lambda t: np.ones_like(t), lambda t: np.zeros_like(t), 0.0, 1.0, singular_times=[0.0]
    )
    analytic = D.interpolation_check(ps, 0.5)
    rhs = analytic.rhs_integral + analytic.boundary
    analytic_ok = abs(analytic.lhs - 2) <= 1e-6 and abs(rhs - 2) <= 1e-6
    ok = not failed and analytic_ok
    report(7, ok, f"{count} pair checks, failures={failed[:5]}, analytic LHS={analytic.lhs:.9f} RHS={rhs:.9f}")


def test_8_forward_stability(report, many_body_run):
    cfg = scenario_config("many-body")
    loose = simulate(replace(cfg, step_control=replace(cfg.step_control, rel_tol=1e-6, abs_tol=1e-9)))
    tight = simulate(replace(cfg, step_control=replace(cfg.step_control, rel_tol=1e-9, abs_tol=1e-12)))
    grid = np.linspace(0.0, cfg.t_final, 401)
    gap = ladder_distance(loose, tight, grid)
    order = simulate_refinement_ladder(cfg, 3).fitted_order
    flock_order = simulate_refinement_ladder(scenario_config("flock-classic"), 3).fitted_order
    ok = gap <= 1e-4 and order >= 1 and flock_order >= 4
    report(8, ok, f"tolerance gap={gap:.2e}, many-body order={order:.2f}, flock-classic order={flock_order:.2f}")


def test_9_backward_demo(report, scenario_runs):
    cmp = compare_backward(scenario_runs["backward-nonuniqueness"], scenario_runs["backward-nonuniqueness/companion"])
    ok = cmp.post_distance <= 1e-6 and cmp.pre_distance >= 0.1
    report(9, ok, f"t_stick={cmp.t_stick:.6f}, post distance={cmp.post_distance:.2e}, pre distance={cmp.pre_distance:.3f}")


def fuzz_config(k: int, rng: np.random.Generator) -> SimConfig:
    n = int(rng.integers(2, 21))
    alpha = float(rng.uniform(0.02, 0.98))
    d = int(rng.integers(1, 4))
    return SimConfig(
        kernel=WeightKernel.singular(alpha, 1e-10),
        n_particles=n,
        dim=d,
        t_final=FUZZ_T,
        initial=InitialCondition(random=RandomCloud()),
        seed=k,
    )


def test_10_sticking_count_fuzz(report):
    rng = np.random.default_rng(2024)
    problems, failed_checks = [], 0
    for k in range(FUZZ_CASES):
        cfg = fuzz_config(k, rng)
        try:
            run = simulate(cfg)
            rep = D.verify(run)
        except Exception as exc:  # any crash is a failure of this criterion
            problems.append((k, repr(exc)))
            continue
        failed_checks += not rep["passed"]
        if len(run.sticking_events) > cfg.n_particles - 1 or not D.coarsening_monotone(run):
            problems.append((k, "sticking count or coarsening"))
    report(
        10,
        not problems,
        f"{FUZZ_CASES} configs (T={FUZZ_T}), problems={problems[:5]}, runs with a failed verify check={failed_checks}",
    )
