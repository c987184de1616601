"""Continuation of cycles in q0, fold location, Hopf inventories and the three-cycle search.

The right-hand side S = (p0 + p1 sin t) x^3 + (q0 + q1 sin t + q2 cos t) x^2 has
dS/dq0 = x^2 > 0 off x = 0, so q0 rotates the vector field: stable cycles move
up and unstable cycles move down as q0 increases, until two of them merge.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .integrator import COMPLETE, DEFAULT_CONFIG, IntegratorConfig, integrate_batch
from .model import NormalForm, hypothesis_H, normal_form
from .poincare import (DEFAULT_FINDER, LOWER_STABLE_UPPER_UNSTABLE, LOWER_UNSTABLE_UPPER_STABLE,
                       STABLE, UNSTABLE, CycleFinderConfig, CycleInventory, LimitCycle,
                       find_limit_cycles, make_cycle)

INCREASING = "increasing_q0"
DECREASING = "decreasing_q0"


class WitnessNotFound(Exception):
    def __init__(self, message: str, best_count: int, trace: list):
        super().__init__(message)
        self.best_count = best_count
        self.trace = trace


@dataclass(frozen=True)
class StepConfig:
    h0: float = 1e-3          # first q0 step
    h_min: float = 1e-9
    h_max: float = 0.05
    grow: float = 1.5
    max_points: int = 2000
    newton_iter: int = 30
    fold_tol: float = 1e-6    # |multiplier - 1| at a located fold
    fold_q0_tol: float = 1e-8
    fold_signature: float = 0.05   # |multiplier - 1| below which a failed step is read as a fold
    zero_tol: float = 1e-8    # |x_at_0| below which the cycle has reached x = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


DEFAULT_STEP = StepConfig()


@dataclass
class FoldEvent:
    q0_at_fold: float
    cycle_at_fold: LimitCycle
    Lpp_sign: str
    H_at_fold: float = 0.0

    def to_dict(self) -> dict:
        return {"q0_at_fold": self.q0_at_fold, "cycle_at_fold": self.cycle_at_fold.to_dict(),
                "Lpp_sign": self.Lpp_sign, "H_at_fold": self.H_at_fold}


@dataclass
class Branch:
    nf: NormalForm
    points: list                 # (q0, LimitCycle)
    direction: str
    termination: str             # fold, range_end, cycle_lost, collision_with_zero
    fold: FoldEvent | None = None

    @property
    def q0(self) -> np.ndarray:
        return np.array([q for q, _ in self.points])

    @property
    def x_at_0(self) -> np.ndarray:
        return np.array([c.x_at_0 for _, c in self.points])

    @property
    def multipliers(self) -> np.ndarray:
        return np.array([c.multiplier for _, c in self.points])

    def is_monotone(self) -> bool:
        """x_at_0 moves up with q0 on stable branches and down on unstable ones."""
        q, x = self.q0, self.x_at_0
        order = np.argsort(q)
        dx = np.diff(x[order])
        stable = self.points[0][1].multiplier < 1.0
        return bool(np.all(dx >= 0) if stable else np.all(dx <= 0))

    def to_dict(self) -> dict:
        return {"normal_form": self.nf.to_dict(), "direction": self.direction,
                "termination": self.termination,
                "points": [{"q0": q, **c.to_dict()} for q, c in self.points],
                "fold": None if self.fold is None else self.fold.to_dict()}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q0", "x_at_0", "multiplier", "stability"])
            for q, c in self.points:
                w.writerow([repr(float(q)), repr(float(c.x_at_0)), repr(float(c.multiplier)),
                            c.stability])


@dataclass
class WitnessResult:
    params: NormalForm
    inventory: CycleInventory
    search_trace: list

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "inventory": self.inventory.to_dict(),
                "total_count": self.inventory.total_count, "search_trace": self.search_trace}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# --------------------------------------------------------------------------
# corrector

def _eval(nf: NormalForm, xs, cfg):
    return integrate_batch(nf.g(), nf.f(), np.atleast_1d(np.asarray(xs, dtype=float)), 0.0, cfg)


def correct_cycle(nf: NormalForm, x_guess: float, cfg: IntegratorConfig = DEFAULT_CONFIG,
                  max_iter: int = 30, residual_tol: float = 1e-10, max_move: float | None = None):
    """Newton on H(x0) = 0 from ``x_guess``. Returns (x, Lp, Lpp, H) or None."""
    x = float(x_guess)
    for _ in range(max_iter):
        r = _eval(nf, [x], cfg)
        if r.status[0] != COMPLETE:
            return None
        H, d = float(r.H[0]), float(r.Lp[0]) - 1.0
        tol = residual_tol * max(1.0, abs(x))
        if d == 0.0:
            return None
        step = H / d
        if abs(H) < tol and abs(step) < 1e-11 * max(abs(x), 1e-300):
            return x, float(r.Lp[0]), float(r.Lpp[0]), H
        x -= step
        if max_move is not None and abs(x - x_guess) > max_move:
            return None
        if x == 0.0 or not math.isfinite(x):
            return None
    r = _eval(nf, [x], cfg)
    if r.status[0] == COMPLETE and abs(r.H[0]) < residual_tol * max(1.0, abs(x)):
        return x, float(r.Lp[0]), float(r.Lpp[0]), float(r.H[0])
    return None


def critical_point(nf: NormalForm, x_guess: float, cfg: IntegratorConfig = DEFAULT_CONFIG,
                   max_iter: int = 40, max_move: float | None = None, accept: float = 1e-7):
    """Newton on L'(x0) - 1 = 0 with L''. Returns (x, Lp, Lpp, H) or None.

    When integration noise keeps the step from shrinking, the iterate with the
    smallest |L' - 1| is returned provided it is below ``accept``.
    """
    x = float(x_guess)
    best = None
    for _ in range(max_iter):
        r = _eval(nf, [x], cfg)
        if r.status[0] != COMPLETE or r.Lpp[0] == 0.0:
            break
        cur = (x, float(r.Lp[0]), float(r.Lpp[0]), float(r.H[0]))
        if best is None or abs(cur[1] - 1.0) < abs(best[1] - 1.0):
            best = cur
        step = (r.Lp[0] - 1.0) / r.Lpp[0]
        if abs(step) < 1e-11 * max(abs(x), 1e-300):
            return cur
        x_new = x - step
        if max_move is not None and abs(x_new - x_guess) > max_move:
            return None
        x = x_new
    if best is not None and abs(best[1] - 1.0) < accept:
        return best
    return None


def _light_cycle(x, Lp, Lpp, H, stability) -> LimitCycle:
    return LimitCycle(float(x), math.nan, math.nan, float(Lp), float(Lpp), 1, stability,
                      np.empty((0, 2)), residual=float(H))


# --------------------------------------------------------------------------
# fold

def locate_fold(nf: NormalForm, x_guess: float, q0_in: float, q0_out: float,
                cfg: IntegratorConfig = DEFAULT_CONFIG, step: StepConfig = DEFAULT_STEP,
                orbit_samples: int = 4096) -> FoldEvent | None:
    """Saddle-node in q0 between ``q0_in`` (cycles present) and ``q0_out`` (absent).

    For each q0 the critical point x_c of H (L' = 1) is found by Newton; the fold
    is the zero of G(q0) = H(x_c(q0); q0), located by Brent's method. The two
    merging cycles are never resolved directly.
    """
    state = {"x": float(x_guess)}
    span = abs(q0_out - q0_in)
    move = max(10.0 * abs(x_guess), 1.0)

    def G(q0):
        cp = critical_point(nf.with_values(q0=q0), state["x"], cfg, max_move=move)
        if cp is None:
            raise ArithmeticError("critical point lost")
        state["x"], state["Lpp"] = cp[0], cp[2]
        return cp[3]

    try:
        # where the two cycles exist, H has a strict extremum of the opposite
        # sign to L'' at x_c, so G * sign(L'') < 0 on the inner side
        q_in, g_in = q0_in, G(q0_in)
        x_in = state["x"]
        sgn = 1.0 if state["Lpp"] > 0 else -1.0
        for _ in range(20):
            if g_in * sgn < 0:
                break
            q_in = q0_out + 2.0 * (q_in - q0_out)
            g_in = G(q_in)
            x_in = state["x"]
        q_out, g_out = q0_out, G(q0_out)
        for _ in range(20):
            if g_out * sgn > 0:
                break
            q_out = q_in + 2.0 * (q_out - q_in)
            g_out = G(q_out)
        if not (g_in * sgn < 0 < g_out * sgn):
            return None
        state["x"] = x_in
        tol = min(step.fold_q0_tol, 1e-6 * span) if span > 0 else step.fold_q0_tol
        qf = brentq(G, min(q_in, q_out), max(q_in, q_out), xtol=max(tol * 1e-4, 1e-15),
                    rtol=4 * np.finfo(float).eps, maxiter=200)
        cp = critical_point(nf.with_values(q0=qf), state["x"], cfg, max_move=move)
    except (ArithmeticError, ValueError):
        return None
    if cp is None:
        return None
    x, Lp, Lpp, H = cp
    stab = LOWER_STABLE_UPPER_UNSTABLE if Lpp > 0 else LOWER_UNSTABLE_UPPER_STABLE
    nf_f = nf.with_values(q0=qf)
    cyc = make_cycle(nf_f, dict(x=x, H=H, Lp=Lp, Lpp=Lpp), 2, stab, cfg, orbit_samples)
    return FoldEvent(float(qf), cyc, "+" if Lpp > 0 else "-", float(H))


# --------------------------------------------------------------------------
# branch following

def continue_in_q0(nf: NormalForm, start: LimitCycle, direction: str = INCREASING,
                   q0_range: tuple = (0.0, 1.0), step: StepConfig = DEFAULT_STEP,
                   cfg: IntegratorConfig = DEFAULT_CONFIG, locate: bool = True) -> Branch:
    """Follow a hyperbolic cycle of ``nf`` as q0 moves through ``q0_range``.

    Secant predictor on x_at_0, Newton corrector on H. A step is rejected when
    the corrector fails or lands on a cycle of the other stability; the step is
    then halved. When the step underflows near |multiplier - 1| = 0 the branch
    ends in a fold, located separately by ``locate_fold``.
    """
    if direction not in (INCREASING, DECREASING):
        raise ValueError(f"direction must be {INCREASING!r} or {DECREASING!r}")
    sgn = 1.0 if direction == INCREASING else -1.0
    q_lo, q_hi = float(q0_range[0]), float(q0_range[1])
    q_end = q_hi if sgn > 0 else q_lo
    stable = start.multiplier < 1.0
    label = start.stability if start.multiplicity == 1 else (STABLE if stable else UNSTABLE)

    if start.x_at_0 == 0.0:
        # x = 0 is a solution for every q0
        qs = np.linspace(nf.q0, q_end, 11)
        pts = [(float(q), _light_cycle(0.0, 1.0, 0.0, 0.0, label)) for q in qs]
        return Branch(nf, pts, direction, "range_end")

    q = nf.q0
    pts = [(q, start)]
    h = step.h0
    last_fail_q = None
    while len(pts) < step.max_points:
        if sgn * (q_end - q) <= 0:
            return Branch(nf, pts, direction, "range_end")
        h_eff = min(h, abs(q_end - q))
        q_new = q + sgn * h_eff
        x_prev = pts[-1][1].x_at_0
        if len(pts) >= 2:
            (qa, ca), (qb, cb) = pts[-2], pts[-1]
            slope = (cb.x_at_0 - ca.x_at_0) / (qb - qa)
            x_pred = x_prev + slope * (q_new - qb)
        else:
            x_pred = x_prev
        if x_pred * x_prev <= 0:
            x_pred = 0.5 * x_prev
        move = 0.25 * abs(x_prev) + 10.0 * abs(x_pred - x_prev)
        res = correct_cycle(nf.with_values(q0=q_new), x_pred, cfg, step.newton_iter,
                            max_move=move)
        ok = res is not None and (res[1] < 1.0) == stable and res[0] * x_prev > 0
        if ok:
            x, Lp, Lpp, H = res
            # a corrector jump across the fold onto a far cycle would break monotonicity
            if (x - x_prev) * sgn * (1 if stable else -1) < 0 and abs(x - x_prev) > 1e-9 * abs(x_prev):
                ok = False
            # Newton can also slide into the x = 0 solution; approach it gradually
            if abs(x) < 0.5 * abs(x_prev):
                ok = False
        if ok:
            pts.append((q_new, _light_cycle(x, Lp, Lpp, H, label)))
            q = q_new
            if abs(x) < step.zero_tol:
                return Branch(nf, pts, direction, "collision_with_zero")
            h = min(step.h_max, h_eff * step.grow)
            continue
        last_fail_q = q_new
        h = 0.5 * h_eff
        if h < step.h_min:
            c_last = pts[-1][1]
            if abs(c_last.multiplier - 1.0) < step.fold_signature:
                fold = None
                if locate:
                    fold = locate_fold(nf, c_last.x_at_0, q, last_fail_q, cfg, step)
                return Branch(nf, pts, direction, "fold", fold)
            if abs(c_last.x_at_0) < 1e3 * step.zero_tol:
                return Branch(nf, pts, direction, "collision_with_zero")
            return Branch(nf, pts, direction, "cycle_lost")
    return Branch(nf, pts, direction, "cycle_lost")


# --------------------------------------------------------------------------
# Hopf inventories and the empty p0 = q0 = 0 region

def hopf_radius(nf: NormalForm) -> float:
    """Size of the small cycles predicted by H / (pi x^2) ~ 2 q0 + 2 p0 x + p1 q2 x^2."""
    a = nf.p1 * abs(nf.q2)
    if a == 0.0:
        return math.inf
    return (abs(nf.p0) + math.sqrt(nf.p0 ** 2 + 2.0 * a * abs(nf.q0))) / a


def hopf_inventory(base: NormalForm, eps_p0: float, eps_q0: float, window=None,
                   cfg: IntegratorConfig = DEFAULT_CONFIG,
                   finder: CycleFinderConfig = DEFAULT_FINDER) -> CycleInventory:
    """Cycles of ``base`` with (p0, q0) = (eps_p0, eps_q0), near x = 0.

    The default window is eight times the predicted small-cycle radius (or
    [-1, 1] when no perturbation is applied).
    """
    if base.p1 <= 0.0 or base.q2 == 0.0:
        raise ValueError("base must have p1 > 0 and q2 != 0")
    if eps_p0 < 0 or eps_q0 < 0:
        raise ValueError("perturbations must be nonnegative")
    nf = base.with_values(p0=float(eps_p0), q0=float(eps_q0))
    if window is None:
        r = hopf_radius(nf)
        r = 1.0 if r == 0.0 else min(8.0 * r, 1.0)
        window = (-r, r)
    return find_limit_cycles(nf, window, cfg=cfg, finder=finder)


@dataclass
class EmptyRegionReport:
    normal_form: NormalForm
    inventory: CycleInventory
    stability_integrals: list   # (x_at_0, integral of S_x, consistent with sign(x) sign(q2))

    @property
    def nonzero_count(self) -> int:
        return self.inventory.nonzero_count

    @property
    def passed(self) -> bool:
        return self.nonzero_count == 0

    def to_dict(self) -> dict:
        return {"normal_form": self.normal_form.to_dict(), "nonzero_count": self.nonzero_count,
                "zero_orbit": self.inventory.zero_orbit.to_dict(),
                "stability_integrals": [list(s) for s in self.stability_integrals],
                "passed": self.passed}


def verify_empty_region(p1: float, q1: float, q2: float, window=(-10.0, 10.0),
                   cfg: IntegratorConfig = DEFAULT_CONFIG,
                   finder: CycleFinderConfig = DEFAULT_FINDER) -> EmptyRegionReport:
    """Scan (p1 sin t) x^3 + (q1 sin t + q2 cos t) x^2 for nonzero cycles."""
    if p1 <= 0 or q2 == 0:
        raise ValueError("need p1 > 0 and q2 != 0")
    nf = normal_form(0.0, p1, 0.0, q1, q2)
    inv = find_limit_cycles(nf, window, cfg=cfg, finder=finder)
    integrals = []
    for c in inv.cycles:
        log_lp = math.log(c.multiplier)
        integrals.append((c.x_at_0, log_lp,
                          bool(np.sign(log_lp) == np.sign(c.x_at_0) * np.sign(q2))))
    return EmptyRegionReport(nf, inv, integrals)


# --------------------------------------------------------------------------
# three-cycle witness

DEFAULT_BOX = {"p0": (0.05, 0.5), "q0": (0.0, 0.1), "q1": (-0.5, 0.5)}


def find_three_cycle_witness(seed: int = 0, box: dict | None = None, q2: float = 1.0,
                             budget: int = 60, cfg: IntegratorConfig = DEFAULT_CONFIG,
                             finder: CycleFinderConfig = DEFAULT_FINDER,
                             window=(-10.0, 10.0), validate: bool = True) -> WitnessResult:
    """Search (p0, q0, q1) at p1 = 1 for an equation with exactly three limit cycles.

    Candidates start from the small-cycle regime q0 = kappa p0^2 / (p1 |q2|)
    with kappa in (0, 1/2), where the quadratic approximation of H / x^2 has two
    small roots, and kappa is bisected on the observed nonzero-cycle count.
    Every returned cycle is checked with ``analyze_geometry``.
    """
    from .structure import GeometryViolation, analyze_geometry

    if q2 not in (1.0, -1.0):
        raise ValueError("q2 must be +1 or -1")
    box = {**DEFAULT_BOX, **(box or {})}
    rng = np.random.default_rng(seed)
    p1 = 1.0
    trace = []
    best = -1
    evals = 0

    def clip(name, v):
        lo, hi = box[name]
        return float(min(max(v, lo), hi))

    def evaluate(p0, q0, q1, kappa):
        nonlocal evals, best
        evals += 1
        nf = normal_form(p0, p1, q0, q1, q2)
        inv = find_limit_cycles(nf, window, cfg=cfg, finder=finder)
        trace.append({"p0": p0, "q0": q0, "q1": q1, "kappa": kappa, "hyp_H": hypothesis_H(nf),
                      "nonzero": inv.nonzero_count, "total": inv.total_count})
        best = max(best, inv.total_count)
        return nf, inv

    while evals < budget:
        p0 = float(rng.uniform(*box["p0"]))
        q1 = float(rng.uniform(*box["q1"]))
        k_lo, k_hi = 0.0, 0.5
        for _ in range(8):
            if evals >= budget:
                break
            kappa = 0.5 * (k_lo + k_hi)
            q0 = clip("q0", kappa * p0 * p0 / (p1 * abs(q2)))
            nf, inv = evaluate(p0, q0, q1, kappa)
            if inv.total_count == 3 and inv.zero_orbit.is_limit_cycle:
                ok = True
                if validate:
                    try:
                        for c in inv.cycles:
                            analyze_geometry(c, nf.g(), nf.f())
                    except GeometryViolation as exc:
                        trace[-1]["geometry_violation"] = str(exc)
                        ok = False
                if ok:
                    return WitnessResult(nf, inv, trace)
            nz = inv.nonzero_count
            q_try = kappa * p0 * p0 / (p1 * abs(q2))
            if q_try != q0:
                break  # the box clips q0: kappa no longer steers the count
            if nz == 0:
                k_hi = kappa   # pair already merged: move back toward the Hopf point
            else:
                k_lo = kappa   # one small cycle unresolved or absorbed by x = 0
    raise WitnessNotFound(f"no three-cycle equation found in {evals} evaluations",
                          max(best, 0), trace)
