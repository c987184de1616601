"""Period-2pi return map, limit-cycle location and classification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .integrator import (COMPLETE, DEFAULT_CONFIG, BatchResult, IntegratorConfig, integrate,
                         integrate_batch)
from .model import TWO_PI, AbelParams, NormalForm

STABLE = "stable"
UNSTABLE = "unstable"
LOWER_STABLE_UPPER_UNSTABLE = "lower_stable_upper_unstable"
LOWER_UNSTABLE_UPPER_STABLE = "lower_unstable_upper_stable"


@dataclass(frozen=True)
class CycleFinderConfig:
    """Grid and tolerance settings for ``find_limit_cycles``."""

    grid_n: int = 512              # uniform points per window side
    log_points: int = 256          # extra logarithmic points per side, dense near 0
    inner_radius: float = 1e-5     # smallest |x0| scanned, relative to the side length
    residual_tol: float = 1e-10    # |H| < residual_tol * max(1, |x0|) at an accepted root
    hyperbolic_tol: float = 1e-4
    dedup_tol: float = 1e-7
    noise_factor: float = 100.0
    orbit_samples: int = 4096
    max_iter: int = 80
    edge_points: int = 48          # geometric points between the last grid point and an escape boundary

    def __post_init__(self):
        if self.grid_n < 64:
            raise ValueError("grid_n must be at least 64")


DEFAULT_FINDER = CycleFinderConfig()


@dataclass(frozen=True)
class ReturnMapSample:
    x0: float
    P: float
    H: float
    Lp: float
    Lpp: float
    status: str  # "ok" or "escaped"


@dataclass
class LimitCycle:
    x_at_0: float
    x_star: float
    t_star: float
    multiplier: float
    Lpp: float
    multiplicity: int
    stability: str
    orbit: np.ndarray = field(repr=False)   # (N+1, 2) samples (t, x) over [0, 2pi]
    residual: float = 0.0

    @property
    def hyperbolic(self) -> bool:
        return self.multiplicity == 1

    def to_dict(self) -> dict:
        return {"x_at_0": self.x_at_0, "x_star": self.x_star, "t_star": self.t_star,
                "multiplier": self.multiplier, "Lpp": self.Lpp,
                "multiplicity": self.multiplicity, "stability": self.stability,
                "residual": self.residual}


@dataclass(frozen=True)
class ZeroOrbitClass:
    multiplicity: object  # 2, 3, 4 or "center_suspected"
    stability: str | None
    L2: float | None
    L3: float | None
    L4: float | None

    @property
    def is_limit_cycle(self) -> bool:
        return self.multiplicity != "center_suspected"

    @property
    def label(self) -> str:
        if not self.is_limit_cycle:
            return "center_suspected"
        return f"m{self.multiplicity}:{self.stability}"

    def to_dict(self) -> dict:
        return {"multiplicity": self.multiplicity, "stability": self.stability,
                "L2": self.L2, "L3": self.L3, "L4": self.L4}


@dataclass
class CycleInventory:
    cycles: list
    zero_orbit: ZeroOrbitClass
    window: tuple
    escape_boundaries: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def count_pos(self) -> int:
        return sum(1 for c in self.cycles if c.x_at_0 > 0)

    @property
    def count_neg(self) -> int:
        return sum(1 for c in self.cycles if c.x_at_0 < 0)

    @property
    def nonzero_count(self) -> int:
        return len(self.cycles)

    @property
    def total_count(self) -> int:
        """Limit cycles including x = 0 (when x = 0 is isolated)."""
        return len(self.cycles) + (1 if self.zero_orbit.is_limit_cycle else 0)

    def min_distance_to_one(self) -> float:
        if not self.cycles:
            return math.nan
        return min(abs(c.multiplier - 1.0) for c in self.cycles)

    def to_dict(self) -> dict:
        return {
            "cycles": [c.to_dict() for c in self.cycles],
            "zero_orbit": self.zero_orbit.to_dict(),
            "window": list(self.window),
            "escape_boundaries": [list(b) for b in self.escape_boundaries],
            "warnings": list(self.warnings),
        }


# --------------------------------------------------------------------------

def _raw(eq) -> AbelParams:
    return eq.to_params() if isinstance(eq, NormalForm) else eq


def return_map(eq, x0: float, cfg: IntegratorConfig = DEFAULT_CONFIG) -> ReturnMapSample:
    """One sample of the time-2pi map from the t = 0 section."""
    b = integrate_batch(eq.g(), eq.f(), [x0], 0.0, cfg)
    if b.status[0] != COMPLETE:
        return ReturnMapSample(float(x0), math.nan, math.nan, math.nan, math.nan, "escaped")
    return ReturnMapSample(float(x0), float(b.P[0]), float(b.H[0]), float(b.Lp[0]),
                           float(b.Lpp[0]), "ok")


def lyapunov_constants(eq) -> tuple[float, float, float]:
    """Leading coefficients of H at x0 = 0 for degree-one coefficients.

    L2 = 2pi * mean(f); L3 = 2pi * mean(g) (meaningful when L2 = 0);
    L4 = pi * (a1 b2 - a2 b1), which is pi p1 q2 in normal form (meaningful when L2 = L3 = 0).
    """
    p = _raw(eq)
    return TWO_PI * p.b0, TWO_PI * p.a0, math.pi * (p.a1 * p.b2 - p.a2 * p.b1)


def classify_zero_orbit(eq, zero_tol: float = 0.0) -> ZeroOrbitClass:
    """Multiplicity and stability of x = 0 from the closed-form Lyapunov constants."""
    L2, L3, L4 = lyapunov_constants(eq)
    if abs(L2) > zero_tol:
        # H ~ L2 x^2: same sign on both sides
        stab = ("upper_unstable_lower_stable" if L2 > 0 else "upper_stable_lower_unstable")
        return ZeroOrbitClass(2, stab, L2, None, None)
    if abs(L3) > zero_tol:
        stab = ("upper_unstable_lower_unstable" if L3 > 0 else "upper_stable_lower_stable")
        return ZeroOrbitClass(3, stab, L2, L3, None)
    if abs(L4) > zero_tol:
        stab = ("upper_unstable_lower_stable" if L4 > 0 else "upper_stable_lower_unstable")
        return ZeroOrbitClass(4, stab, L2, L3, L4)
    return ZeroOrbitClass("center_suspected", None, L2, L3, L4)


# --------------------------------------------------------------------------
# scanning helpers

def _noise(x0, zmax, cfg: IntegratorConfig, factor: float):
    ax = np.abs(x0)
    return factor * ax * (cfg.abs_tol * np.minimum(1.0, ax) + cfg.rel_tol * zmax)


class _Evaluator:
    """Batched H, H', H'' evaluation for one equation, counting integrations."""

    def __init__(self, eq, cfg: IntegratorConfig, finder: CycleFinderConfig):
        self.g, self.f = eq.g(), eq.f()
        self.cfg = cfg
        self.finder = finder
        self.n_evals = 0

    def __call__(self, xs) -> BatchResult:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        self.n_evals += len(xs)
        return integrate_batch(self.g, self.f, xs, 0.0, self.cfg)

    def noise(self, b: BatchResult):
        return _noise(b.x0, b.zmax, self.cfg, self.finder.noise_factor)


def _side_grid(r_lo: float, r_hi: float, finder: CycleFinderConfig) -> np.ndarray:
    uni = np.linspace(r_lo, r_hi, finder.grid_n + 1)
    inner = max(r_lo, finder.inner_radius * r_hi)
    logp = np.geomspace(inner if inner > 0 else finder.inner_radius * r_hi, r_hi, finder.log_points)
    r = np.unique(np.concatenate([uni, logp]))
    return r[r > 0]


def _first_escaping(ev: _Evaluator, xs: np.ndarray) -> int:
    """Index of the first non-returning point of ``xs`` (ordered outward from 0).

    Solutions of a scalar equation cannot cross, so escape is monotone in |x0|
    on each side and a bisection over grid indices suffices.
    """
    n = len(xs)
    if n == 0:
        return 0
    last = ev(xs[-1:])
    if last.status[0] == COMPLETE:
        return n
    first = ev(xs[:1])
    if first.status[0] != COMPLETE:
        return 0
    lo, hi = 0, n - 1  # lo returns, hi escapes
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ev(xs[mid:mid + 1]).status[0] == COMPLETE:
            lo = mid
        else:
            hi = mid
    return hi


def _refine_roots(ev: _Evaluator, brackets: list, finder: CycleFinderConfig):
    """Safeguarded Newton (H' = L' - 1) with bisection fallback, all brackets at once.

    ``brackets`` holds (a, b, Ha, Hb) with Ha * Hb < 0. Returns one dict per
    bracket with the root and the return-map data there; ``stable`` records
    whether H > 0 below the root (and so < 0 above it).
    """
    if not brackets:
        return []
    a = np.array([br[0] for br in brackets], dtype=float)
    b = np.array([br[1] for br in brackets], dtype=float)
    Ha = np.array([br[2] for br in brackets], dtype=float)
    Hb = np.array([br[3] for br in brackets], dtype=float)
    # regula falsi start
    x = a - Ha * (b - a) / (Hb - Ha)
    bad = ~np.isfinite(x) | (x <= np.minimum(a, b)) | (x >= np.maximum(a, b))
    x[bad] = 0.5 * (a[bad] + b[bad])
    lower_positive = np.where(a < b, Ha, Hb) > 0
    done = np.zeros(len(a), dtype=bool)
    out = [None] * len(a)
    for _ in range(finder.max_iter):
        idx = np.flatnonzero(~done)
        if len(idx) == 0:
            break
        r = ev(x[idx])
        for j, k in enumerate(idx):
            if r.status[j] != COMPLETE:
                # cannot happen inside the returning domain; fall back to bisection
                b[k] = x[k]
                x[k] = 0.5 * (a[k] + b[k])
                continue
            H, dH = r.H[j], r.Lp[j] - 1.0
            out[k] = dict(x=x[k], H=H, Lp=r.Lp[j], Lpp=r.Lpp[j], zmax=r.zmax[j],
                          stable=bool(lower_positive[k]))
            if H == 0.0:
                done[k] = True
                continue
            if np.sign(H) == np.sign(Ha[k]):
                a[k], Ha[k] = x[k], H
            else:
                b[k], Hb[k] = x[k], H
            lo, hi = min(a[k], b[k]), max(a[k], b[k])
            xn = x[k] - H / dH if dH != 0.0 else math.nan
            if not (np.isfinite(xn) and lo < xn < hi):
                xn = 0.5 * (lo + hi)
            scale = max(abs(x[k]), 1e-300)
            tol_res = max(finder.residual_tol * max(1.0, abs(x[k])),
                          float(_noise(x[k], r.zmax[j], ev.cfg, finder.noise_factor)))
            if (abs(H) < tol_res and abs(xn - x[k]) < 1e-12 * scale) or hi - lo < 4e-15 * scale:
                done[k] = True
            else:
                x[k] = xn
    return [o for o in out if o is not None]


def _refine_critical(ev: _Evaluator, lo: float, hi: float, finder: CycleFinderConfig):
    """Zero of H' = L' - 1 in [lo, hi] (bracketed), using H'' = L''."""
    r = ev([lo, hi])
    da, db = r.Lp[0] - 1.0, r.Lp[1] - 1.0
    if not (np.isfinite(da) and np.isfinite(db)) or da * db > 0:
        return None
    x = 0.5 * (lo + hi)
    res = None
    for _ in range(finder.max_iter):
        rr = ev([x])
        if rr.status[0] != COMPLETE:
            return None
        d = rr.Lp[0] - 1.0
        res = dict(x=x, H=rr.H[0], Lp=rr.Lp[0], Lpp=rr.Lpp[0], zmax=rr.zmax[0])
        if d == 0.0:
            break
        if np.sign(d) == np.sign(da):
            lo, da = x, d
        else:
            hi, db = x, d
        xn = x - d / rr.Lpp[0] if rr.Lpp[0] != 0 else math.nan
        if not (np.isfinite(xn) and min(lo, hi) < xn < max(lo, hi)):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) < 1e-13 * max(abs(x), 1e-300) or abs(hi - lo) < 4e-15 * abs(x):
            break
        x = xn
    return res


def _orbit_samples(g, f, x0: float, n: int, cfg: IntegratorConfig):
    traj = integrate(g, f, x0, 0.0, TWO_PI, cfg)
    t = np.linspace(0.0, TWO_PI, n + 1)
    if traj.status != "complete":
        return np.column_stack([t, np.full_like(t, np.nan)]), traj
    return np.column_stack([t, traj.x_at(t)]), traj


def make_cycle(eq, root: dict, multiplicity: int, stability: str,
               cfg: IntegratorConfig = DEFAULT_CONFIG, samples: int = 4096) -> LimitCycle:
    """Build a LimitCycle (orbit samples, minimum point) from a refined root."""
    g, f = eq.g(), eq.f()
    orbit, traj = _orbit_samples(g, f, root["x"], samples, cfg)
    xs = orbit[:, 1]
    i = int(np.nanargmin(xs[:-1]))
    dt = TWO_PI / samples
    if traj.status == "complete":
        # minimise on the dense output around the best sample, wrapping the period
        lo, hi = orbit[i, 0] - dt, orbit[i, 0] + dt
        opt = minimize_scalar(lambda s: traj.x_at(s % TWO_PI), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        t_star = float(opt.x % TWO_PI)
        x_star = float(min(opt.fun, xs[i]))
    else:
        t_star, x_star = float(orbit[i, 0]), float(xs[i])
    return LimitCycle(float(root["x"]), x_star, t_star, float(root["Lp"]), float(root["Lpp"]),
                      multiplicity, stability, orbit, residual=float(root["H"]))


def find_limit_cycles(eq, window=(-10.0, 10.0), grid_n: int | None = None,
                      cfg: IntegratorConfig = DEFAULT_CONFIG,
                      finder: CycleFinderConfig = DEFAULT_FINDER,
                      with_orbits: bool = True) -> CycleInventory:
    """Locate and classify every nonzero limit cycle with x(0) in ``window``.

    ``eq`` is a NormalForm or AbelParams. x = 0 is reported separately through
    the zero-orbit classification.
    """
    lo_w, hi_w = float(window[0]), float(window[1])
    if not lo_w < hi_w:
        raise ValueError("window must satisfy lo < hi")
    if grid_n is not None:
        finder = CycleFinderConfig(**{**finder.__dict__, "grid_n": int(grid_n)})
    ev = _Evaluator(eq, cfg, finder)
    warnings: list[str] = []
    escape_boundaries = []
    brackets = []
    probes = []
    unresolved_total = 0
    scanned_total = 0

    for sign in (1.0, -1.0):
        r_hi = hi_w if sign > 0 else -lo_w
        r_lo = max(lo_w, 0.0) if sign > 0 else max(-hi_w, 0.0)
        if r_hi <= 0:
            continue
        xs = sign * _side_grid(r_lo, r_hi, finder)
        k = _first_escaping(ev, xs)
        if k < len(xs):
            x_ret, x_esc = _escape_boundary(ev, xs[k - 1] if k > 0 else 0.0, xs[k])
            escape_boundaries.append((x_ret, x_esc))
            # the return map stays finite up to the boundary (solutions can touch
            # the escape bound and come back), so sample geometrically toward it
            if k > 0:
                gap = abs(x_ret - xs[k - 1])
                if gap > 0:
                    extra = x_ret - sign * np.geomspace(gap, max(gap * 1e-9, 1e-15 * abs(x_ret)),
                                                        finder.edge_points)
                    xs = np.concatenate([xs[:k], extra[1:], [x_ret]])
                else:
                    xs = xs[:k]
            else:
                xs = np.array([x_ret]) if x_ret != 0.0 else xs[:0]
        if len(xs) == 0:
            continue
        b = ev(xs)
        ok = b.status == COMPLETE
        xs_r, H = xs[ok], b.H[ok]
        eta = ev.noise(b)[ok]
        resolved = np.abs(H) > eta
        scanned_total += len(H)
        unresolved_total += int(np.sum(~resolved))
        ri = np.flatnonzero(resolved)
        for i0, i1 in zip(ri[:-1], ri[1:]):
            if H[i0] * H[i1] < 0:
                brackets.append((xs_r[i0], xs_r[i1], H[i0], H[i1]))
        # local extrema of H with no sign change: candidate double cycles / close pairs
        for j in range(1, len(ri) - 1):
            i_prev, i, i_next = ri[j - 1], ri[j], ri[j + 1]
            if not (H[i_prev] * H[i] > 0 and H[i] * H[i_next] > 0):
                continue
            if abs(H[i]) <= abs(H[i_prev]) and abs(H[i]) <= abs(H[i_next]):
                probes.append((xs_r[i_prev], xs_r[i_next], H[i]))

    if scanned_total and unresolved_total > 0.5 * scanned_total:
        warnings.append(f"H indistinguishable from zero on {unresolved_total}/{scanned_total} "
                        "grid points (possible center)")

    roots = []  # (root dict, multiplicity, stability)
    for lo, hi, Hmid in probes:
        a, c = min(lo, hi), max(lo, hi)
        crit = _refine_critical(ev, a, c, finder)
        if crit is None:
            continue
        eta = float(_noise(crit["x"], crit["zmax"], cfg, finder.noise_factor))
        tol_res = max(finder.residual_tol * max(1.0, abs(crit["x"])), eta)
        if abs(crit["H"]) <= tol_res:
            stab = LOWER_STABLE_UPPER_UNSTABLE if crit["Lpp"] > 0 else LOWER_UNSTABLE_UPPER_STABLE
            roots.append((crit, 2, stab))
        elif np.sign(crit["H"]) != np.sign(Hmid) and abs(crit["H"]) > eta:
            # a close pair the grid stepped over
            ends = ev([a, c])
            brackets.append((a, crit["x"], float(ends.H[0]), crit["H"]))
            brackets.append((crit["x"], c, crit["H"], float(ends.H[1])))

    for root in _refine_roots(ev, brackets, finder):
        # bracketed roots have odd multiplicity; the side signs give the stability
        stab = STABLE if root["stable"] else UNSTABLE
        roots.append((root, 1, stab))

    roots.sort(key=lambda r: r[0]["x"])
    merged = []
    for r in roots:
        if merged and abs(r[0]["x"] - merged[-1][0]["x"]) <= finder.dedup_tol * max(1.0, abs(r[0]["x"])):
            if merged[-1][1] == 1 and r[1] == 2:
                merged[-1] = r
            continue
        if merged and abs(r[0]["x"] - merged[-1][0]["x"]) <= 2 * finder.dedup_tol * max(1.0, abs(r[0]["x"])):
            warnings.append(f"window_unresolved: roots {merged[-1][0]['x']:.12g} and "
                            f"{r[0]['x']:.12g} closer than twice the dedup tolerance")
        merged.append(r)

    cycles = []
    for root, mult, stab in merged:
        if with_orbits:
            cycles.append(make_cycle(eq, root, mult, stab, cfg, finder.orbit_samples))
        else:
            cycles.append(LimitCycle(float(root["x"]), math.nan, math.nan, float(root["Lp"]),
                                     float(root["Lpp"]), mult, stab, np.empty((0, 2)),
                                     residual=float(root["H"])))
    return CycleInventory(cycles, classify_zero_orbit(eq), (lo_w, hi_w),
                          sorted(escape_boundaries), warnings)


def _escape_boundary(ev: _Evaluator, x_ret: float, x_esc: float, rel: float = 1e-13):
    """Bisect between a returning and an escaping initial value."""
    lo, hi = float(x_ret), float(x_esc)
    while abs(hi - lo) > rel * max(abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if ev([mid]).status[0] == COMPLETE:
            lo = mid
        else:
            hi = mid
    return lo, hi
