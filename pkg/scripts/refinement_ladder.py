"""Refinement ladder for a scenario: trajectory distances, observed order, TV and energy residuals.

    python3 scripts/refinement_ladder.py many-body --levels 4 --alpha 0.3
"""

import argparse

import numpy as np

from singular_cs import diagnostics as D
from singular_cs.integrator import simulate_refinement_ladder
from singular_cs.scenarios import SCENARIOS, scenario_config


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("scenario", choices=sorted(SCENARIOS))
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--factor", type=float, default=0.1)
    ap.add_argument("--alpha", type=float)
    args = ap.parse_args()

    cfg = scenario_config(args.scenario)
    if args.alpha is not None:
        cfg = cfg.with_overrides(alpha=args.alpha)
    rep = simulate_refinement_ladder(cfg, args.levels, args.factor)
    tv = [D.mean_total_variation(lv.run.series) for lv in rep.levels]
    print(f"{'level':>5} {'rel_tol':>8} {'floor':>8} {'steps':>7} {'events':>6} {'mean TV':>14} {'energy res':>10}")
    for lv, t in zip(rep.levels, tv):
        res = D.energy_identity_residual(lv.run.series)
        print(f"{lv.level:5d} {lv.ctrl.rel_tol:8.0e} {lv.floor:8.0e} {lv.n_steps:7d} {len(lv.run.events):6d} {t:14.10f} {res:10.2e}")
    diffs = np.abs(np.diff(tv))
    print("distances between levels:", [f"{d:.2e}" for d in rep.distances])
    print("orders:", [f"{o:.2f}" for o in rep.orders], f"fitted {rep.fitted_order:.2f}")
    if len(diffs) > 1:
        print("TV difference ratios:", [f"{r:.2f}" for r in diffs[:-1] / np.maximum(diffs[1:], 1e-300)])


if __name__ == "__main__":
    main()
