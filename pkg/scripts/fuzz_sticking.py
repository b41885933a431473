"""Seeded random configurations: sticking count, coarsening and verification outcome.

    python3 scripts/fuzz_sticking.py --cases 200 --t-final 1.0
"""

import argparse
import time

import numpy as np

from singular_cs.config import InitialCondition, RandomCloud, SimConfig
from singular_cs.diagnostics import coarsening_monotone, verify
from singular_cs.integrator import simulate
from singular_cs.weights import WeightKernel


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--cases", type=int, default=200)
    ap.add_argument("--t-final", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--max-n", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    start = time.perf_counter()
    bad = 0
    print(f"{'case':>4} {'n':>3} {'d':>2} {'alpha':>6} {'stick':>5} {'coll':>5} {'ok':>3} {'secs':>6}  failed checks")
    for k in range(args.cases):
        n, alpha, d = int(rng.integers(2, args.max_n + 1)), float(rng.uniform(0.02, 0.98)), int(rng.integers(1, 4))
        cfg = SimConfig(
            kernel=WeightKernel.singular(alpha, 1e-10),
            n_particles=n,
            dim=d,
            t_final=args.t_final,
            initial=InitialCondition(random=RandomCloud()),
            seed=k,
        )
        t0 = time.perf_counter()
        try:
            run = simulate(cfg)
            rep = verify(run)
        except Exception as exc:
            bad += 1
            print(f"{k:4d} {n:3d} {d:2d} {alpha:6.3f} crashed: {exc!r}")
            continue
        ok = len(run.sticking_events) <= n - 1 and coarsening_monotone(run)
        bad += not ok
        failed = [c["name"] for c in rep["checks"] if not c["passed"]]
        print(
            f"{k:4d} {n:3d} {d:2d} {alpha:6.3f} {len(run.sticking_events):5d} {len(run.collision_events):5d}"
            f" {'yes' if ok else 'NO':>3} {time.perf_counter() - t0:6.2f}  {', '.join(failed)}"
        )
    print(f"{args.cases} cases, {bad} problems, {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
