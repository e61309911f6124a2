"""Best-found value per seed for a builtin objective.

    python scripts/seed_sweep.py --objective fun_branin --fun-evals 20
"""
import argparse
import time

import numpy as np

from spotkit import FunControl, SpotConfig, make_objective, run
from spotkit.objectives import REGISTRY
from spotkit.space import SearchSpace


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--objective", default="fun_branin")
    ap.add_argument("--fun-evals", type=int, default=20)
    ap.add_argument("--init-size", type=int, default=10)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--criterion", default="y", choices=["y", "s", "ei"])
    ap.add_argument("--sigma", type=float, default=0.0)
    args = ap.parse_args()

    lo, hi = REGISTRY[args.objective].bounds
    space = SearchSpace.from_bounds(lo, hi)
    results = []
    t0 = time.perf_counter()
    for seed in range(args.seeds):
        cfg = SpotConfig(
            fun_evals=args.fun_evals, init_size=args.init_size, seed=seed, infill_criterion=args.criterion
        )
        st = run(cfg, make_objective(args.objective, FunControl(sigma=args.sigma, seed=seed)), space)
        y = min(b for _, b in st.progress)
        results.append(y)
        print(f"seed {seed:3d}  best y {y:.6g}")
    r = np.array(results)
    print(f"median {np.median(r):.6g}  worst {r.max():.6g}  total {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
