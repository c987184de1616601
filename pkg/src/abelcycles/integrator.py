"""Adaptive integration of the Abel equation and its variational equations.

The state integrated per initial value x0 is (z, u, r) with

    z = log(x / x0),   z' = g x^2 + f x,
    u = log v,         u' = S_x,              u(t0) = 0,
    r = w / v,         r' = S_xx exp(u),      r(t0) = 0,

where S = g x^3 + f x^2, S_x = 3 g x^2 + 2 f x, S_xx = 6 g x + 2 f, and v, w
are the first and second derivatives of the flow map (v' = S_x v,
w' = S_x w + S_xx v^2). The log form keeps the displacement
x(T) - x0 = x0 * expm1(z) accurate to a relative error for small |x0|, which is
what the cycle finder needs near the zero orbit; likewise u keeps v accurate
to a relative error even when it swings through large values along the orbit.

Stepping uses the Dormand-Prince 5(4) pair with PI step-size control and its
free quartic dense output. The per-lane loop is compiled with numba.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.integrate import RK45

from .model import TWO_PI, TrigPoly

COMPLETE, ESCAPED, STEP_FAILURE = 0, 1, 2
STATUS_NAMES = {COMPLETE: "complete", ESCAPED: "escaped", STEP_FAILURE: "step_failure"}

# Dormand-Prince tableau and dense-output matrix, taken from scipy's RK45.
_C = np.ascontiguousarray(RK45.C, dtype=np.float64)
_A = np.ascontiguousarray(RK45.A, dtype=np.float64)
_B = np.ascontiguousarray(RK45.B, dtype=np.float64)
_E = np.ascontiguousarray(RK45.E, dtype=np.float64)
_P = np.ascontiguousarray(RK45.P, dtype=np.float64)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.pi / 16
    escape_bound: float = 1e6
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("rel_tol and abs_tol must be positive")
        if not self.escape_bound > 0:
            raise ValueError("escape_bound must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if int(self.max_steps) < 1:
            raise ValueError("max_steps must be a positive integer")

    def to_dict(self) -> dict:
        return {"rel_tol": self.rel_tol, "abs_tol": self.abs_tol, "max_step": self.max_step,
                "escape_bound": self.escape_bound, "max_steps": int(self.max_steps)}


DEFAULT_CONFIG = IntegratorConfig()


# --------------------------------------------------------------------------
# compiled kernel

@njit(cache=True)
def _trig(c0, cc, ss, t):
    out = c0
    for k in range(cc.shape[0]):
        out += cc[k] * math.cos((k + 1) * t) + ss[k] * math.sin((k + 1) * t)
    return out


@njit(cache=True)
def _rhs(t, y, x0, g0, gc, gs, f0, fc, fs, out):
    x = x0 * math.exp(y[0])
    gt = _trig(g0, gc, gs, t)
    ft = _trig(f0, fc, fs, t)
    out[0] = gt * x * x + ft * x
    sx = 3.0 * gt * x * x + 2.0 * ft * x
    sxx = 6.0 * gt * x + 2.0 * ft
    out[1] = sx
    out[2] = sxx * math.exp(y[1])


@njit(cache=True)
def _lane(x0, t0, t1, g0, gc, gs, f0, fc, fs, rtol, atol, hmax, bound, max_steps, record):
    """Integrate one initial value; returns (status, t, y, zmax, rec_t, rec_y, rec_q)."""
    y = np.zeros(3)
    cap = 256 if record else 1
    rec_t = np.empty(cap)
    rec_y = np.empty((cap, 3))
    rec_q = np.empty((cap, 3, 4))
    nrec = 0
    if record:
        rec_t[0] = t0
        rec_y[0, :] = y
    if x0 == 0.0:
        if record:
            rec_t[1] = t1
            rec_y[1, :] = y
            rec_q[0, :, :] = 0.0
            nrec = 1
        return COMPLETE, t1, y, 0.0, rec_t[: nrec + 1], rec_y[: nrec + 1], rec_q[:nrec]

    ax0 = abs(x0)
    zcap = math.log(bound / ax0)
    atol_z = max(atol * min(1.0, ax0), 1e-300)  # a subnormal x0 must not zero the error scale
    K = np.empty((7, 3))
    ynew = np.empty(3)
    ytmp = np.empty(3)
    t = t0
    h = min(hmax, 0.01 * (t1 - t0), 1e-2)
    err_old = 1e-4
    rejected = False
    nsteps = 0
    n_tiny = 0
    zmax = 0.0
    status = COMPLETE
    _rhs(t, y, x0, g0, gc, gs, f0, fc, fs, K[0])
    while t < t1:
        if nsteps >= max_steps:
            status = STEP_FAILURE
            break
        if h < 4e-16 * max(1.0, abs(t)):
            status = STEP_FAILURE
            break
        # steps near the floating-point resolution of t make no real progress
        if h < 1e-12 * max(1.0, abs(t)):
            n_tiny += 1
            if n_tiny > 1000:
                status = STEP_FAILURE
                break
        else:
            n_tiny = 0
        last = False
        if t + h >= t1 or t1 - (t + h) < 1e-14 * max(1.0, abs(t1)):
            h = t1 - t
            last = True
        for s in range(1, 6):
            for j in range(3):
                acc = 0.0
                for r in range(s):
                    acc += _A[s, r] * K[r, j]
                ytmp[j] = y[j] + h * acc
            _rhs(t + _C[s] * h, ytmp, x0, g0, gc, gs, f0, fc, fs, K[s])
        for j in range(3):
            acc = 0.0
            for r in range(6):
                acc += _B[r] * K[r, j]
            ynew[j] = y[j] + h * acc
        tnew = t1 if last else t + h
        _rhs(tnew, ynew, x0, g0, gc, gs, f0, fc, fs, K[6])
        nsteps += 1
        err = 0.0
        finite = True
        for j in range(3):
            e = 0.0
            for r in range(7):
                e += _E[r] * K[r, j]
            e *= h
            if j == 0:
                sc = atol_z + rtol * max(abs(y[0]), abs(ynew[0]))
            elif j == 1:
                # u is a log: an absolute error in u is a relative error in v
                sc = atol + rtol * max(1.0, abs(y[1]), abs(ynew[1]))
            else:
                sc = atol + rtol * max(abs(y[j]), abs(ynew[j]))
            q = e / sc
            if not math.isfinite(q) or not math.isfinite(ynew[j]):
                finite = False
            err += q * q
        err = math.sqrt(err / 3.0) if finite else math.inf

        if err <= 1.0:
            if record:
                if nrec + 1 >= cap:
                    cap *= 2
                    nt = np.empty(cap)
                    nt[: nrec + 1] = rec_t[: nrec + 1]
                    rec_t = nt
                    ny = np.empty((cap, 3))
                    ny[: nrec + 1] = rec_y[: nrec + 1]
                    rec_y = ny
                    nq = np.empty((cap, 3, 4))
                    nq[:nrec] = rec_q[:nrec]
                    rec_q = nq
                for j in range(3):
                    for c in range(4):
                        acc = 0.0
                        for r in range(7):
                            acc += K[r, j] * _P[r, c]
                        rec_q[nrec, j, c] = acc
                nrec += 1
                rec_t[nrec] = tnew
                rec_y[nrec, :] = ynew
            if ynew[0] > zcap:
                # crossing time from the dense output of this step, by bisection
                qd = np.empty((3, 4))
                for j in range(3):
                    for c in range(4):
                        acc = 0.0
                        for r in range(7):
                            acc += K[r, j] * _P[r, c]
                        qd[j, c] = acc
                lo, hi = 0.0, 1.0
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    zm = y[0] + h * mid * (qd[0, 0] + mid * (qd[0, 1] + mid * (qd[0, 2] + mid * qd[0, 3])))
                    if zm > zcap:
                        hi = mid
                    else:
                        lo = mid
                for j in range(3):
                    y[j] = y[j] + h * hi * (qd[j, 0] + hi * (qd[j, 1] + hi * (qd[j, 2] + hi * qd[j, 3])))
                t = t + hi * h
                zmax = max(zmax, abs(y[0]))
                status = ESCAPED
                break
            t = tnew
            for j in range(3):
                y[j] = ynew[j]
                K[0, j] = K[6, j]
            zmax = max(zmax, abs(y[0]))
            if err == 0.0:
                fac = 10.0
            else:
                fac = 0.9 * err ** -0.17 * err_old ** 0.04
                fac = min(10.0, max(0.2, fac))
            if rejected:
                fac = min(1.0, fac)
            rejected = False
            err_old = max(err, 1e-4)
            h = min(hmax, h * fac)
        else:
            fac = 0.2 if not math.isfinite(err) else max(0.2, 0.9 * err ** -0.17)
            h = h * fac
            rejected = True
    return status, t, y, zmax, rec_t[: nrec + 1], rec_y[: nrec + 1], rec_q[:nrec]


@njit(cache=True)
def _batch(x0s, t0, t1, g0, gc, gs, f0, fc, fs, rtol, atol, hmax, bound, max_steps):
    n = x0s.shape[0]
    status = np.empty(n, dtype=np.int64)
    tend = np.empty(n)
    ys = np.empty((n, 3))
    zmax = np.empty(n)
    for i in range(n):
        st, t, y, zm, _, _, _ = _lane(x0s[i], t0, t1, g0, gc, gs, f0, fc, fs,
                                      rtol, atol, hmax, bound, max_steps, False)
        status[i] = st
        tend[i] = t
        ys[i, :] = y
        zmax[i] = zm
    return status, tend, ys, zmax


def _coeff_args(g: TrigPoly, f: TrigPoly):
    g0, gc, gs = g.arrays()
    f0, fc, fs = f.arrays()
    # the kernel wants equal-length float arrays; pad with zeros
    m = max(len(gc), len(fc), 1)
    pad = lambda a: np.concatenate([a, np.zeros(m - len(a))])
    return g0, pad(gc), pad(gs), f0, pad(fc), pad(fs)


def _cfg_args(cfg: IntegratorConfig):
    return (float(cfg.rel_tol), float(cfg.abs_tol), float(cfg.max_step),
            float(cfg.escape_bound), int(cfg.max_steps))


# --------------------------------------------------------------------------
# results

@dataclass
class Trajectory:
    """Dense numerical solution of the Abel equation from (t0, x0)."""

    t0: float
    t1: float
    x0: float
    t: np.ndarray
    x: np.ndarray
    status: str
    t_escape: float | None = None
    _y: np.ndarray = field(default=None, repr=False)
    _q: np.ndarray = field(default=None, repr=False)

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.x.tolist()))

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def _interp(self, tq, comp):
        tq = np.asarray(tq, dtype=float)
        if np.any(tq < self.t[0] - 1e-12) or np.any(tq > self.t[-1] + 1e-12):
            raise ValueError("requested time outside the integrated interval")
        n = len(self.t) - 1
        if n == 0:
            return np.full(tq.shape, self._y[0, comp])
        idx = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, n - 1)
        h = self.t[idx + 1] - self.t[idx]
        th = (tq - self.t[idx]) / h
        powers = np.stack([th, th ** 2, th ** 3, th ** 4], axis=-1)
        return self._y[idx, comp] + h * np.einsum("...c,...c->...", self._q[idx, comp, :], powers)

    def x_at(self, tq):
        """Dense-output value of x at time(s) ``tq``."""
        z = self._interp(tq, 0)
        out = self.x0 * np.exp(z)
        return float(out) if np.ndim(out) == 0 else out

    def v_at(self, tq):
        """Dense-output value of dx(t)/dx0."""
        out = np.exp(self._interp(tq, 1))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def P(self) -> float:
        return float(self.x[-1])

    @property
    def Lp(self) -> float:
        return math.exp(self._y[-1, 1])

    @property
    def Lpp(self) -> float:
        return math.exp(self._y[-1, 1]) * float(self._y[-1, 2])


@dataclass(frozen=True)
class VariationalResult:
    P: float
    Lp: float
    Lpp: float
    status: str
    t_escape: float | None = None


@dataclass
class BatchResult:
    """Vectorised counterpart of VariationalResult over many initial values."""

    x0: np.ndarray
    P: np.ndarray
    H: np.ndarray
    Lp: np.ndarray
    Lpp: np.ndarray
    status: np.ndarray  # integer codes COMPLETE / ESCAPED / STEP_FAILURE
    t_end: np.ndarray
    z: np.ndarray
    zmax: np.ndarray  # max |log(x(t)/x0)| along each lane, sets the noise level of H

    @property
    def ok(self) -> np.ndarray:
        return self.status == COMPLETE


# --------------------------------------------------------------------------
# public operations

def integrate(g: TrigPoly, f: TrigPoly, x0: float, t0: float, t1: float,
              cfg: IntegratorConfig = DEFAULT_CONFIG) -> Trajectory:
    """Solve dx/dt = g x^3 + f x^2, x(t0) = x0 on [t0, t1] with dense output."""
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    x0 = float(x0)
    st, t, y, _, rt, ry, rq = _lane(x0, float(t0), float(t1), *_coeff_args(g, f),
                                    *_cfg_args(cfg), True)
    x = x0 * np.exp(ry[:, 0])
    return Trajectory(float(t0), float(t1), x0, rt.copy(), x, STATUS_NAMES[st],
                      t_escape=float(t) if st == ESCAPED else None, _y=ry.copy(), _q=rq.copy())


def integrate_variational(g: TrigPoly, f: TrigPoly, x0: float, t0: float = 0.0,
                          cfg: IntegratorConfig = DEFAULT_CONFIG) -> VariationalResult:
    """Return map value and its first two derivatives over [t0, t0 + 2pi]."""
    b = integrate_batch(g, f, np.array([float(x0)]), t0, cfg)
    st = int(b.status[0])
    return VariationalResult(float(b.P[0]), float(b.Lp[0]), float(b.Lpp[0]), STATUS_NAMES[st],
                             t_escape=float(b.t_end[0]) if st == ESCAPED else None)


def integrate_batch(g: TrigPoly, f: TrigPoly, x0s, t0: float = 0.0,
                    cfg: IntegratorConfig = DEFAULT_CONFIG, period: float = TWO_PI) -> BatchResult:
    """Variational integration for an array of initial values (lanes are independent)."""
    x0s = np.ascontiguousarray(np.atleast_1d(np.asarray(x0s, dtype=float)))
    status, tend, ys, zmax = _batch(x0s, float(t0), float(t0) + period, *_coeff_args(g, f),
                                 *_cfg_args(cfg))
    z = ys[:, 0]
    with np.errstate(over="ignore", invalid="ignore"):
        H = x0s * np.expm1(z)
    P = x0s + H
    bad = status != COMPLETE
    with np.errstate(over="ignore", invalid="ignore"):
        Lp = np.exp(ys[:, 1])
        Lpp = Lp * ys[:, 2]
    return BatchResult(x0s, np.where(bad, np.nan, P), np.where(bad, np.nan, H),
                       np.where(bad, np.nan, Lp), np.where(bad, np.nan, Lpp),
                       status, tend, z, zmax)


# --------------------------------------------------------------------------
# cross-check paths (integral forms of the derivative formulas)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _s_x(g, f, t, x):
    return 3.0 * g(t) * x * x + 2.0 * f(t) * x


def _s_xx(g, f, t, x):
    return 6.0 * g(t) * x + 2.0 * f(t)


def log_multiplier_quadrature(traj: Trajectory, g: TrigPoly, f: TrigPoly) -> float:
    """Integral of S_x(x(t), t) along the dense orbit, by 8-point Gauss-Legendre per step.

    exp of this value is L'(x0); it uses only the dense x(t), not v.
    """
    a, b = traj.t[:-1], traj.t[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = _s_x(g, f, nodes, traj.x_at(nodes))
    return float(np.sum(half * (vals @ _GL_W)))


def second_derivative_quadrature(traj: Trajectory, g: TrigPoly, f: TrigPoly) -> float:
    """L'' from L' * int S_xx exp(int_t0^t S_x) dt, with nested Gauss-Legendre quadrature."""
    a, b = traj.t[:-1], traj.t[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]          # (n, 8)
    step_int = half * (_s_x(g, f, nodes, traj.x_at(nodes)) @ _GL_W)
    phi_start = np.concatenate([[0.0], np.cumsum(step_int)[:-1]])
    # partial integral from the step start to each node
    sub_half = 0.5 * (nodes - a[:, None])                             # (n, 8)
    sub_nodes = a[:, None, None] + sub_half[:, :, None] * (1.0 + _GL_X[None, None, :])
    partial = sub_half * (_s_x(g, f, sub_nodes, traj.x_at(sub_nodes)) @ _GL_W)
    phi = phi_start[:, None] + partial
    outer = half * ((_s_xx(g, f, nodes, traj.x_at(nodes)) * np.exp(phi)) @ _GL_W)
    log_lp = float(np.sum(step_int))
    return math.exp(log_lp) * float(np.sum(outer))


# --------------------------------------------------------------------------
# exactly solvable cases

def closed_form_return_map(case: str, coeff: float, x0: float,
                           oscillatory: tuple[float, float] = (0.0, 0.0)):
    """Exact (P, P', P'') over one period for the two quadrature-solvable cases.

    ``case="riccati"``: g = 0, f = coeff + s sin t + c cos t.
    ``case="cubic"``: f = 0, g = coeff + s sin t + c cos t.
    ``oscillatory`` is (s, c). Returns None if the solution blows up within the period.
    """
    s, c = oscillatory
    tt = np.linspace(0.0, TWO_PI, 4097)
    primitive = coeff * tt + s * (1.0 - np.cos(tt)) + c * np.sin(tt)
    if case == "riccati":
        # 1/x(t) = 1/x0 - F(t)
        if np.any(1.0 - x0 * primitive <= 0.0):
            return None
        d = 1.0 - TWO_PI * coeff * x0
        a = TWO_PI * coeff
        return x0 / d, 1.0 / d ** 2, 2.0 * a / d ** 3
    if case == "cubic":
        # x(t)^-2 = x0^-2 - 2 G(t)
        if np.any(1.0 - 2.0 * x0 * x0 * primitive <= 0.0):
            return None
        a = 2.0 * TWO_PI * coeff
        d = 1.0 - a * x0 * x0
        return x0 / math.sqrt(d), d ** -1.5, 3.0 * a * x0 * d ** -2.5
    raise ValueError(f"unknown closed-form case {case!r}")
