"""Engine outcome versus the two-body reference over an (alpha, w0, u0) grid.

    python3 scripts/two_body_grid.py [--alphas 0.1 0.3 0.45] [--w0 0.5 1 2]
"""

import argparse
import time

from singular_cs.integrator import StepControl, integrate
from singular_cs.model import ParticleSystem
from singular_cs.oracle import OutcomeClass, TwoBodyState, classify
from singular_cs.weights import WeightKernel


def horizon(out) -> float:
    if out.outcome is OutcomeClass.EXACT_STICKING:
        return 1.3 * out.t_event
    if out.outcome is OutcomeClass.CROSSING:
        return 2 * out.t_event
    return 5.0


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.1, 0.3, 0.45])
    ap.add_argument("--w0", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    ap.add_argument("--floor", type=float, default=1e-10)
    args = ap.parse_args()

    print(f"{'alpha':>6} {'w0':>5} {'u0':>9} {'reference':>20} {'engine':>20} {'t_ref':>10} {'t_engine':>10} {'steps':>6}")
    start = time.perf_counter()
    for alpha in args.alphas:
        k = WeightKernel.singular(alpha)
        for w0 in args.w0:
            for u0 in (-3.0, -k.primitive(w0), -0.5 * k.primitive(w0)):
                out = classify(TwoBodyState(w0, u0, alpha))
                state = ParticleSystem(0.0, [[-w0 / 2], [w0 / 2]], [[-u0 / 2], [u0 / 2]])
                run = integrate(state, k.with_floor(args.floor), StepControl(), horizon(out))
                engine = run.events[0] if run.events else None
                kind = engine.kind.value if engine else "none"
                t_eng = f"{engine.t:10.6f}" if engine else f"{'-':>10}"
                t_ref = f"{out.t_event:10.6f}" if out.t_event is not None else f"{'-':>10}"
                print(f"{alpha:6.2f} {w0:5.2f} {u0:9.4f} {out.outcome.value:>20} {kind:>20} {t_ref} {t_eng} {run.n_steps:6d}")
    print(f"total {time.perf_counter() - start:.2f}s")


if __name__ == "__main__":
    main()
