"""Geometry of a nonzero cycle and the h / W diagnostics for its second derivative.

For a cycle x(t) with minimum (t_star, x_star) and maximum (t_star_hi, x_star_hi)
the orbit splits into an increasing branch t = tau1(s) and a decreasing branch
t = tau2(s), s in (x_star, x_star_hi). With h(t) = int_{t_star}^t g x^2 the
function W(s) = h(tau1(s)) - h(tau2(s)) controls the sign of L'' at a
non-hyperbolic cycle.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq

from .integrator import DEFAULT_CONFIG, IntegratorConfig, integrate
from .model import TWO_PI, TrigPoly, check_C1_C2, trig_zeros


class GeometryViolation(Exception):
    """The orbit does not have the one-minimum / one-maximum shape with the expected signs."""

    def __init__(self, message: str, interval=None):
        super().__init__(message)
        self.interval = interval


class BranchNonMonotone(Exception):
    """An orbit branch between the extrema is not strictly monotone."""


class PreconditionViolation(Exception):
    pass


@dataclass(frozen=True)
class CycleGeometry:
    t_star: float
    x_star: float
    t_star_hi: float       # unwrapped into (t_star, t_star + 2pi)
    x_star_hi: float
    t1: float              # zeros of g in (t_star, t_star + 2pi), t1 < t2
    t2: float
    stationary_count: int
    sign_pattern_ok: bool
    u_monotonicity: str

    def to_dict(self) -> dict:
        return {"t_star": self.t_star, "x_star": self.x_star, "t_star_hi": self.t_star_hi,
                "x_star_hi": self.x_star_hi, "t1": self.t1, "t2": self.t2,
                "stationary_count": self.stationary_count,
                "sign_pattern_ok": self.sign_pattern_ok,
                "u_monotonicity": self.u_monotonicity}


@dataclass
class WProfile:
    h_samples: np.ndarray = field(repr=False)       # (N, 2): t, h(t) over [t_star, t_star + 2pi]
    w_samples: np.ndarray = field(repr=False)       # (M, 3): s, W(s), W'(s)
    wprime_sign_changes: int
    h_period_residual: float
    Lpp_loop: float
    loop_integral: float                            # closed-orbit integral of exp(h) dx
    multiplier: float
    W_endpoints: tuple = (math.nan, math.nan)       # W at x_star and at x_star_hi

    @property
    def s(self) -> np.ndarray:
        return self.w_samples[:, 0]

    @property
    def W(self) -> np.ndarray:
        return self.w_samples[:, 1]

    @property
    def Wprime(self) -> np.ndarray:
        return self.w_samples[:, 2]

    def to_dict(self) -> dict:
        return {"wprime_sign_changes": self.wprime_sign_changes,
                "h_period_residual": self.h_period_residual,
                "Lpp_loop": self.Lpp_loop, "multiplier": self.multiplier,
                "W_min": float(np.min(self.W)), "W_max": float(np.max(self.W)),
                "W_endpoints": list(self.W_endpoints)}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "W", "Wprime"])
            for row in self.w_samples:
                w.writerow([repr(float(v)) for v in row])


# --------------------------------------------------------------------------
# geometry

def _sign_changes(values: np.ndarray, floor: float = 0.0) -> int:
    v = values[np.abs(values) > floor]
    return int(np.count_nonzero(np.sign(v[1:]) != np.sign(v[:-1])))


def analyze_geometry(cycle, g: TrigPoly, f: TrigPoly, check_points: int = 64,
                     ode_tol: float = 1e-4) -> CycleGeometry:
    """Locate the extrema of a nonzero cycle and check its shape against the nullcline.

    Works on ``cycle.orbit`` (samples (t, x) over one period). Raises
    GeometryViolation if the samples are not a solution, if the number of
    stationary points is not two, or if the sign of x - u on any of the four
    intervals between t_star, t1, t_star_hi, t2 is wrong.
    """
    orbit = np.asarray(cycle.orbit, dtype=float)
    if orbit.ndim != 2 or len(orbit) < 1025:
        raise GeometryViolation("orbit needs at least 1024 samples per period")
    t, x = orbit[:, 0], orbit[:, 1]
    if not np.all(np.isfinite(x)) or np.any(x == 0.0) or np.any(np.sign(x) != np.sign(x[0])):
        raise GeometryViolation("orbit is not a nonzero cycle", (t[0], t[-1]))
    span = float(np.max(x) - np.min(x))
    if span <= 1e-12 * float(np.max(np.abs(x))):
        raise GeometryViolation("orbit is constant", (t[0], t[-1]))

    # periodic interpolant; also confirms the samples solve the equation
    xp = x.copy()
    xp[-1] = xp[0]
    spl = CubicSpline(t, xp, bc_type="periodic")
    rhs = x * x * (g(t) * x + f(t))
    scale = max(float(np.max(np.abs(rhs))), 1e-300)
    mismatch = float(np.max(np.abs(spl(t, 1) - rhs))) / scale
    if mismatch > ode_tol:
        raise GeometryViolation(f"samples do not satisfy the equation (mismatch {mismatch:.3g})",
                                (t[0], t[-1]))

    F = lambda s: g(s) * spl(s % TWO_PI) + f(s)  # x' = x^2 F
    Fv = g(t[:-1]) * x[:-1] + f(t[:-1])
    n = len(Fv)
    mins, maxs = [], []
    for i in range(n):
        a, b = Fv[i], Fv[(i + 1) % n]
        if a == 0.0 or a * b < 0.0:
            ta, tb = t[i], t[i + 1]
            r = ta if a == 0.0 else brentq(F, ta, tb, xtol=1e-14)
            if a < 0 or (a == 0.0 and b > 0):
                mins.append(r % TWO_PI)
            else:
                maxs.append(r % TWO_PI)
    stationary = len(mins) + len(maxs)
    if len(mins) != 1 or len(maxs) != 1:
        raise GeometryViolation(f"expected one minimum and one maximum, found "
                                f"{len(mins)} and {len(maxs)}", (t[0], t[-1]))
    t_star = mins[0]
    t_hi = maxs[0] if maxs[0] > t_star else maxs[0] + TWO_PI
    x_star, x_hi = float(spl(t_star)), float(spl(t_hi % TWO_PI))

    c1, mono = check_C1_C2(g, f)
    zg = trig_zeros(g)
    zg = np.sort(np.where(zg > t_star, zg, zg + TWO_PI))
    if len(zg) != 2:
        raise GeometryViolation(f"g has {len(zg)} zeros per period, expected 2", (t_star, t_star + TWO_PI))
    t1, t2 = float(zg[0]), float(zg[1])
    if not t1 < t_hi < t2:
        raise GeometryViolation("maximum point not between the zeros of g", (t1, t2))

    # sign of x - u = sign(g x + f) * sign(g), never forming u
    expected = [-1.0, 1.0, -1.0, 1.0]
    if mono == "decreasing":
        expected = [-e for e in expected]
    ok = mono in ("increasing", "decreasing")
    edges = [t_star, t1, t_hi, t2, t_star + TWO_PI]
    for k in range(4):
        s = np.linspace(edges[k], edges[k + 1], check_points + 2)[1:-1]
        sg = np.sign(F(s)) * np.sign(g(s))
        if ok and not np.all(sg == expected[k]):
            raise GeometryViolation(f"x - u has the wrong sign on ({edges[k]:.6g}, {edges[k + 1]:.6g})",
                                    (edges[k], edges[k + 1]))
    return CycleGeometry(float(t_star), x_star, float(t_hi), x_hi, t1, t2, stationary, ok, mono)


# --------------------------------------------------------------------------
# h, W, W' and the loop integral for L''

def compute_W_profile(cycle, g: TrigPoly, f: TrigPoly, geo: CycleGeometry,
                      n_orbit: int = 16384, n_s: int = 256, guard: float = 1e-4,
                      noise_floor: float = 1e-9,
                      cfg: IntegratorConfig = DEFAULT_CONFIG) -> WProfile:
    """Sample h, W, W' along the cycle started from its minimum point.

    The second derivative of the return map at the minimum is
    -2 / x_star^2 times the loop integral of exp(h) dx, evaluated here as a
    time integral of exp(h(t)) x'(t) so no branch inversion enters it.
    """
    traj = integrate(g, f, geo.x_star, geo.t_star, geo.t_star + TWO_PI, cfg)
    if traj.status != "complete":
        raise GeometryViolation("orbit from the minimum point does not return", (geo.t_star, traj.t_end))
    tt = np.linspace(geo.t_star, geo.t_star + TWO_PI, n_orbit + 1)
    xx = traj.x_at(tt)
    h = cumulative_simpson(g(tt) * xx * xx, x=tt, initial=0.0)
    dx = xx * xx * (g(tt) * xx + f(tt))
    loop = float(simpson(np.exp(h) * dx, x=tt))
    lpp13 = -2.0 / geo.x_star ** 2 * loop

    k_hi = int(np.argmax(xx))
    b1 = slice(0, k_hi + 1)
    b2 = slice(k_hi, None)
    x1, t1s, h1 = xx[b1], tt[b1], h[b1]
    x2, t2s, h2 = xx[b2][::-1], tt[b2][::-1], h[b2][::-1]
    for xb in (x1, x2):
        bad = np.diff(xb) <= 0
        # the flat ends near the extrema may tie at sampling resolution
        if np.any(bad[2:-2]):
            raise BranchNonMonotone("orbit branch is not strictly monotone between extrema")
    keep1 = np.concatenate([[True], np.diff(x1) > 0])
    keep2 = np.concatenate([[True], np.diff(x2) > 0])
    tau1 = PchipInterpolator(x1[keep1], t1s[keep1])
    tau2 = PchipInterpolator(x2[keep2], t2s[keep2])
    hb1 = PchipInterpolator(x1[keep1], h1[keep1])
    hb2 = PchipInterpolator(x2[keep2], h2[keep2])

    lo, hi = float(xx[0]), float(xx[k_hi])
    band = guard * (hi - lo)
    s = np.linspace(lo + band, hi - band, n_s)
    W = hb1(s) - hb2(s)
    ta, tb = tau1(s), tau2(s)
    Wp = g(ta) / (g(ta) * s + f(ta)) - g(tb) / (g(tb) * s + f(tb))
    changes = _sign_changes(Wp, noise_floor)
    h_res = float(h[-1])
    ends = (float(h[0] - h[-1]), 0.0)   # W(x_star) = -h(t_star + 2pi), W(x_star_hi) = 0
    return WProfile(np.column_stack([tt, h]), np.column_stack([s, W, Wp]), changes, h_res,
                    lpp13, loop, float(cycle.multiplier), ends)


def second_derivative_loop(profile: WProfile, x_star: float, max_defect: float = 1e-3) -> float:
    """L'' at the minimum point from the loop integral; valid only when L' = 1."""
    if not abs(profile.multiplier - 1.0) < max_defect:
        raise PreconditionViolation(f"multiplier {profile.multiplier:.6g} is not close to 1")
    return -2.0 / x_star ** 2 * profile.loop_integral
