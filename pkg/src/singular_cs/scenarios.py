"""Named scenarios and the end-to-end scenario runner."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import DEFAULT_FLOOR, InitialCondition, RandomCloud, SimConfig, parse_config
from .diagnostics import verify
from .integrator import Run, ladder_distance, simulate
from .weights import WeightKernel


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    config: Callable[[], SimConfig]


def _pair(v: float, t_final: float) -> SimConfig:
    return SimConfig(
        kernel=WeightKernel.singular(0.5, DEFAULT_FLOOR),
        n_particles=2,
        dim=1,
        t_final=t_final,
        initial=InitialCondition(positions=((-0.5,), (0.5,)), velocities=((v,), (-v,))),
    )


def critical_pair() -> SimConfig:
    """alpha = 1/2, w0 = 1, u0 = -2 = -Psi(1): the pair sticks at t = 1."""
    return _pair(1.0, 2.0)


def crossing_pair() -> SimConfig:
    """alpha = 1/2, w0 = 1, u0 = -3: the pair crosses at speed 1 and separates to |w| = 1/4."""
    return _pair(1.5, 10.0)


def flock_classic() -> SimConfig:
    return SimConfig(
        kernel=WeightKernel.cucker_smale(1.0, 0.5),
        n_particles=10,
        dim=2,
        t_final=5.0,
        initial=InitialCondition(random=RandomCloud()),
        seed=7,
    )


def many_body() -> SimConfig:
    return SimConfig(
        kernel=WeightKernel.singular(0.3, DEFAULT_FLOOR),
        n_particles=10,
        dim=1,
        t_final=5.0,
        initial=InitialCondition(random=RandomCloud()),
        seed=11,
    )


def merged_companion(config: SimConfig) -> SimConfig:
    """Both particles of a pair placed at the post-sticking state: centre of mass with mean velocity."""
    state = config.initial_state()
    x = tuple(state.positions.mean(axis=0))
    v = tuple(state.velocities.mean(axis=0))
    n = state.n_particles
    return SimConfig(
        kernel=config.kernel,
        n_particles=n,
        dim=state.dim,
        normalization=config.normalization,
        t_final=config.t_final,
        initial=InitialCondition(positions=(x,) * n, velocities=(v,) * n),
        step_control=config.step_control,
        output=config.output,
        seed=config.seed,
    )


SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in (
        Scenario("critical-pair", "two particles with exactly critical approach speed; they stick at t = 1", critical_pair),
        Scenario("crossing-pair", "two particles fast enough to pass through each other", crossing_pair),
        Scenario("flock-classic", "ten particles in the plane with the smooth weight K=1, beta=1/2", flock_classic),
        Scenario("many-body", "ten particles on a line, alpha = 0.3, seeded random cloud", many_body),
        Scenario(
            "backward-nonuniqueness",
            "critical pair against a cluster already merged at its final state; the futures agree, the pasts do not",
            critical_pair,
        ),
    )
}


def scenario_config(name: str, overrides: dict | None = None) -> SimConfig:
    """Configuration of a named scenario with a partial document merged on top."""
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
    config = SCENARIOS[name].config()
    if not overrides:
        return config
    doc = config.to_dict()
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict) and key != "initial":
            doc[key] = {**doc[key], **value}
        else:
            doc[key] = value
    return parse_config(doc)


@dataclass
class BackwardComparison:
    t_stick: float
    post_distance: float
    pre_distance: float
    companion: Run

    @property
    def passed(self) -> bool:
        return self.post_distance <= 1e-6 and self.pre_distance >= 0.1

    def as_dict(self) -> dict:
        return {
            "t_stick": self.t_stick,
            "post_distance": self.post_distance,
            "pre_distance": self.pre_distance,
            "passed": self.passed,
        }


def compare_backward(run: Run, companion: Run, gap: float = 0.01, n_grid: int = 401) -> BackwardComparison:
    """Sup-norm distance of the two runs after t_stick + gap and before t_stick - gap."""
    if not run.sticking_events:
        raise ValueError("the reference run has no sticking event")
    t_s = run.sticking_events[0].t
    t0, T = run.initial_state.t, run.t_final
    after = np.linspace(min(t_s + gap, T), T, n_grid)
    before = np.linspace(t0, max(t_s - gap, t0), n_grid)
    return BackwardComparison(float(t_s), ladder_distance(run, companion, after), ladder_distance(run, companion, before), companion)


@dataclass
class ScenarioResult:
    name: str
    config: SimConfig
    run: Run
    report: dict
    extra: dict = field(default_factory=dict)
    out_dir: Path | None = None


def run_scenario(name: str, overrides: dict | None = None, out_dir: str | Path | None = None) -> ScenarioResult:
    """Simulate, verify and (with ``out_dir``) export a named scenario."""
    from .export import export

    config = scenario_config(name, overrides)
    if out_dir is not None:
        config = scenario_config(name, {**(overrides or {}), "output": {**config.to_dict()["output"], "out_dir": str(out_dir)}})
    run = simulate(config)
    report = verify(run)
    extra: dict = {}
    if name == "backward-nonuniqueness":
        companion = simulate(merged_companion(config))
        cmp = compare_backward(run, companion)
        extra["backward"] = cmp.as_dict()
        report["checks"].append({"name": "backward_nonuniqueness", **cmp.as_dict()})
        report["passed"] = report["passed"] and cmp.passed
    result = ScenarioResult(name, config, run, report, extra)
    if config.output.out_dir:
        result.out_dir = export(run, report, config.output.out_dir, config=config, extra={"scenario": name, **extra})
    return result
