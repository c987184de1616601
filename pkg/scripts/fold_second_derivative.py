"""Follow a cycle to its fold in q0 and compare the loop-integral L'' with the variational one."""
import argparse

import numpy as np

from abelcycles.continuation import DECREASING, INCREASING, continue_in_q0
from abelcycles.integrator import integrate_variational
from abelcycles.model import normal_form
from abelcycles.poincare import find_limit_cycles
from abelcycles.structure import analyze_geometry, compute_W_profile, second_derivative_loop


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nf", default="0.03,1,0.000225,0.3,1", help="p0,p1,q0,q1,q2")
    ap.add_argument("--direction", choices=("increasing", "decreasing"), default="increasing")
    ap.add_argument("--cycle", type=int, default=0)
    ap.add_argument("--w-csv", help="write s, W, W' samples here")
    args = ap.parse_args()
    nf = normal_form(*(float(v) for v in args.nf.split(",")))
    inv = find_limit_cycles(nf)
    if not inv.cycles:
        raise SystemExit("no nonzero cycle")
    direction = INCREASING if args.direction == "increasing" else DECREASING
    br = continue_in_q0(nf, inv.cycles[args.cycle], direction, (nf.q0 - 1, nf.q0 + 1))
    print(f"branch: {len(br.points)} points, termination {br.termination}")
    if br.fold is None:
        return
    fnf = nf.with_values(q0=br.fold.q0_at_fold)
    fc = br.fold.cycle_at_fold
    geo = analyze_geometry(fc, fnf.g(), fnf.f())
    prof = compute_W_profile(fc, fnf.g(), fnf.f(), geo)
    lpp_loop = second_derivative_loop(prof, geo.x_star)
    ref = integrate_variational(fnf.g(), fnf.f(), geo.x_star, t0=geo.t_star).Lpp
    print(f"fold q0 = {br.fold.q0_at_fold:.12g}, x(0) = {fc.x_at_0:.12g}, multiplier - 1 = "
          f"{fc.multiplier - 1:.2e}")
    print(f"minimum point t* = {geo.t_star:.6f}, x* = {geo.x_star:.9g}")
    print(f"L'' loop integral {lpp_loop:.9g}, variational {ref:.9g}, rel diff {abs(lpp_loop / ref - 1):.2e}")
    print(f"W range [{np.min(prof.W):.3e}, {np.max(prof.W):.3e}], W' sign changes "
          f"{prof.wprime_sign_changes}")
    if args.w_csv:
        prof.write_csv(args.w_csv)


if __name__ == "__main__":
    main()
