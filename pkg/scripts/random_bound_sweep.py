"""Cycle counts over random coefficient sets, split by which hypotheses hold."""
import argparse
import collections
import time

import numpy as np

from abelcycles.model import AbelParams, classify_hypotheses
from abelcycles.poincare import find_limit_cycles


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-n", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scale", type=float, default=2.0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    hist = collections.Counter()
    worst = collections.defaultdict(int)
    t0 = time.perf_counter()
    for _ in range(args.n):
        p = AbelParams.from_sequence(rng.uniform(-args.scale, args.scale, 6))
        hyp = classify_hypotheses(p)
        inv = find_limit_cycles(p)
        group = ("fixed_sign" if hyp.cond_a or hyp.cond_b or hyp.cond_c
                 else "H" if hyp.hyp_H else "other")
        hist[(group, inv.total_count)] += 1
        worst[group] = max(worst[group], inv.total_count)
    for (group, total), n in sorted(hist.items()):
        print(f"{group:10s} total={total}: {n}")
    print("max total per group:", dict(worst))
    print(f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
