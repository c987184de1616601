"""Count the small cycles born near x = 0 as (p0, q0) move away from zero.

Prints positive/negative counts for each q2 sign and perturbation size.
"""
import argparse

from abelcycles.continuation import hopf_inventory
from abelcycles.model import normal_form


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p1", type=float, default=1.0)
    ap.add_argument("--q1", type=float, default=0.3)
    ap.add_argument("--kappa", type=float, default=0.25, help="q0 = kappa p0^2 / (p1 |q2|)")
    ap.add_argument("--eps", type=float, nargs="+", default=[0.01, 0.02, 0.03, 0.04, 0.05])
    args = ap.parse_args()
    print(f"{'q2':>5} {'eps':>6} {'q0':>10} {'pos':>4} {'neg':>4} {'total':>6}")
    for q2 in (1.0, -1.0):
        base = normal_form(0.0, args.p1, 0.0, args.q1, q2)
        for eps in args.eps:
            q0 = args.kappa * eps * eps / (args.p1 * abs(q2))
            inv = hopf_inventory(base, eps, q0)
            print(f"{q2:5.1f} {eps:6.3f} {q0:10.3e} {inv.count_pos:4d} {inv.count_neg:4d} "
                  f"{inv.total_count:6d}")


if __name__ == "__main__":
    main()
