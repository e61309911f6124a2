"""Compare OCBA allocations against brute-force optimal ones on 3-design instances.

Approximate PCS is the Bonferroni lower bound.  Prints every instance whose
gap exceeds the threshold and a summary line.
"""
import argparse
import itertools

import numpy as np

from spotkit.ocba import allocate, apcs

GAPS = [(0.5, 1), (0.5, 2), (1, 1), (1, 2), (1, 3), (2, 3), (0.25, 0.5), (2, 2), (3, 4)]
VARS = list(itertools.product([0.25, 1.0, 4.0], repeat=3))
COUNTS = [(2, 2, 2), (5, 5, 5), (2, 5, 3), (3, 2, 5)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--delta", type=int, default=10)
    ap.add_argument("--threshold", type=float, default=0.05)
    args = ap.parse_args()
    d = args.delta
    allocs = [np.array((i, j, d - i - j)) for i in range(d + 1) for j in range(d + 1 - i)]
    gaps = []
    for (d1, d2), v, c in itertools.product(GAPS, VARS, COUNTS):
        m, v, c = np.array([0.0, d1, d2]), np.array(v), np.array(c)
        scores = [apcs(m, v, c + a) for a in allocs]
        best = max(scores)
        ours_alloc = allocate(m, v, c, d)
        ours = apcs(m, v, c + ours_alloc)
        gap = (best - ours) / abs(best)
        gaps.append(gap)
        if gap > args.threshold:
            opt = allocs[int(np.argmax(scores))]
            print(f"means {m.tolist()} var {v.tolist()} counts {c.tolist()}: "
                  f"ocba {ours_alloc.tolist()} ({ours:.3f}) optimum {opt.tolist()} ({best:.3f})")
    g = np.array(gaps)
    print(f"{np.sum(g > args.threshold)}/{g.size} instances beyond {args.threshold:.0%}; worst {g.max():.1%}")


if __name__ == "__main__":
    main()
