"""Coefficient data, reduction to normal form and hypothesis checks.

The equation studied throughout the package is

    dx/dt = g(t) x^3 + f(t) x^2,

with g(t) = a0 + a1 sin t + a2 cos t and f(t) = b0 + b1 sin t + b2 cos t for
the raw parameters, and g(t) = p0 + p1 sin t, f(t) = q0 + q1 sin t + q2 cos t
for the normal form.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

TWO_PI = 2.0 * math.pi


class ResolutionWarning(UserWarning):
    """A sampled quantity whose sign matters was below the zero threshold."""


@dataclass(frozen=True)
class TrigPoly:
    """Real trigonometric polynomial c0 + sum_k (c_k cos kt + s_k sin kt)."""

    constant: float
    cos_coeffs: tuple[float, ...] = ()
    sin_coeffs: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "cos_coeffs", tuple(float(c) for c in self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(float(s) for s in self.sin_coeffs))
        if len(self.cos_coeffs) != len(self.sin_coeffs):
            raise ValueError("cos and sin coefficient sequences must have equal length")
        coeffs = (self.constant,) + self.cos_coeffs + self.sin_coeffs
        if not all(math.isfinite(c) for c in coeffs):
            raise ValueError("trigonometric coefficients must be finite")

    @property
    def degree(self) -> int:
        return len(self.cos_coeffs)

    def __call__(self, t):
        return evaluate_trig(self, t)

    def derivative(self, t):
        return evaluate_trig(self, t, derivative=1)

    def is_zero(self) -> bool:
        return self.constant == 0.0 and not any(self.cos_coeffs) and not any(self.sin_coeffs)

    def arrays(self) -> tuple[float, np.ndarray, np.ndarray]:
        """(constant, cos, sin) with float arrays, the layout used by the integrator kernel."""
        return (
            self.constant,
            np.asarray(self.cos_coeffs, dtype=float),
            np.asarray(self.sin_coeffs, dtype=float),
        )


def evaluate_trig(tp: TrigPoly, t, derivative: int = 0):
    """Evaluate ``tp`` (or its first derivative) at scalar or array ``t``."""
    t = np.asarray(t, dtype=float)
    if derivative not in (0, 1):
        raise ValueError("only the value and the first derivative are supported")
    out = np.full(t.shape, tp.constant if derivative == 0 else 0.0)
    for k, (c, s) in enumerate(zip(tp.cos_coeffs, tp.sin_coeffs), start=1):
        if derivative == 0:
            out = out + c * np.cos(k * t) + s * np.sin(k * t)
        else:
            out = out + k * (s * np.cos(k * t) - c * np.sin(k * t))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AbelParams:
    """Raw coefficients of (a0 + a1 sin t + a2 cos t) x^3 + (b0 + b1 sin t + b2 cos t) x^2."""

    a0: float
    a1: float
    a2: float
    b0: float
    b1: float
    b2: float

    def __post_init__(self):
        for name in ("a0", "a1", "a2", "b0", "b1", "b2"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "AbelParams":
        values = list(values)
        if len(values) != 6:
            raise ValueError(f"expected 6 parameters a0,a1,a2,b0,b1,b2, got {len(values)}")
        return cls(*values)

    @classmethod
    def parse(cls, text: str) -> "AbelParams":
        """Parse ``"a0,a1,a2,b0,b1,b2"`` or a JSON object with those keys."""
        text = text.strip()
        if text.startswith("{"):
            return cls.from_json(text)
        try:
            values = [float(v) for v in text.split(",")]
        except ValueError as exc:
            raise ValueError(f"malformed parameter list {text!r}") from exc
        return cls.from_sequence(values)

    @classmethod
    def from_json(cls, text_or_obj) -> "AbelParams":
        obj = json.loads(text_or_obj) if isinstance(text_or_obj, str) else dict(text_or_obj)
        missing = [k for k in ("a0", "a1", "a2", "b0", "b1", "b2") if k not in obj]
        if missing:
            raise ValueError(f"missing parameter keys: {missing}")
        return cls(*(float(obj[k]) for k in ("a0", "a1", "a2", "b0", "b1", "b2")))

    def as_tuple(self) -> tuple[float, ...]:
        return (self.a0, self.a1, self.a2, self.b0, self.b1, self.b2)

    def to_dict(self) -> dict:
        return dict(zip(("a0", "a1", "a2", "b0", "b1", "b2"), self.as_tuple()))

    def g(self) -> TrigPoly:
        return TrigPoly(self.a0, (self.a2,), (self.a1,))

    def f(self) -> TrigPoly:
        return TrigPoly(self.b0, (self.b2,), (self.b1,))


@dataclass(frozen=True)
class NormalForm:
    """Parameters of (p0 + p1 sin t) x^3 + (q0 + q1 sin t + q2 cos t) x^2.

    ``theta`` is the phase shift s = t + theta taking the raw equation to the
    rotated one. ``sign_flips`` lists the symmetries applied afterwards, in
    order: ``"time_reversal"`` is (t, p0, q0, q2) -> (-t, -p0, -q0, -q2) and
    ``"reflection"`` is (x, t, p0, q1) -> (-x, -t, -p0, -q1).
    """

    p0: float
    p1: float
    q0: float
    q1: float
    q2: float
    theta: float = 0.0
    sign_flips: tuple[str, ...] = ()
    degenerate: bool = False

    def g(self) -> TrigPoly:
        return TrigPoly(self.p0, (0.0,), (self.p1,))

    def f(self) -> TrigPoly:
        return TrigPoly(self.q0, (self.q2,), (self.q1,))

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.p0, self.p1, self.q0, self.q1, self.q2)

    def to_params(self) -> AbelParams:
        """The normal form is itself a raw equation with a2 = 0."""
        return AbelParams(self.p0, self.p1, 0.0, self.q0, self.q1, self.q2)

    def with_values(self, **changes) -> "NormalForm":
        vals = dict(p0=self.p0, p1=self.p1, q0=self.q0, q1=self.q1, q2=self.q2,
                    theta=self.theta, sign_flips=self.sign_flips, degenerate=self.degenerate)
        vals.update(changes)
        return NormalForm(**vals)

    @property
    def time_reversed(self) -> bool:
        return len(self.sign_flips) % 2 == 1

    def original_section(self) -> tuple[float, float]:
        """Where the raw equation's t = 0 section sits in normal-form coordinates.

        Returns ``(s, sign)`` such that a solution x of the raw equation and the
        corresponding normal-form solution y satisfy x(0) = sign * y(s).
        """
        s = self.theta * (-1.0) ** len(self.sign_flips)
        sign = -1.0 if "reflection" in self.sign_flips else 1.0
        return s, sign

    def to_dict(self) -> dict:
        return {
            "p0": self.p0, "p1": self.p1, "q0": self.q0, "q1": self.q1, "q2": self.q2,
            "theta": self.theta, "sign_flips": list(self.sign_flips),
            "degenerate": self.degenerate,
        }


def normal_form(p0: float, p1: float, q0: float, q1: float, q2: float) -> NormalForm:
    """A normal form given directly by its five coefficients (no reduction record)."""
    return NormalForm(float(p0), float(p1), float(q0), float(q1), float(q2), degenerate=(p1 == 0.0))


def reduce_to_normal_form(p: AbelParams) -> NormalForm:
    """Rotate time so that g = p0 + p1 sin, then normalise signs so p0, q0 >= 0."""
    p1 = math.hypot(p.a1, p.a2)
    if p1 > 0.0:
        theta = math.atan2(p.a2, p.a1)
        q1 = (p.a1 * p.b1 + p.a2 * p.b2) / p1
        q2 = (p.a1 * p.b2 - p.a2 * p.b1) / p1
        degenerate = False
    else:
        theta, q1, q2 = 0.0, p.b1, p.b2
        degenerate = True
    p0, q0 = p.a0, p.b0
    flips = []
    if q0 < 0.0:
        p0, q0, q2 = -p0, -q0, -q2
        flips.append("time_reversal")
    if p0 < 0.0:
        p0, q1 = -p0, -q1
        flips.append("reflection")
    # avoid signed zeros in reports
    return NormalForm(p0 + 0.0, p1, q0 + 0.0, q1 + 0.0, q2 + 0.0, theta, tuple(flips), degenerate)


@dataclass(frozen=True)
class HypothesisReport:
    cond_a: bool
    cond_b: bool
    cond_c: bool
    hyp_H: bool
    c1: bool
    c2: str
    q2_sign: str
    normal_form: NormalForm = field(compare=False, default=None)

    @property
    def any_cond(self) -> bool:
        return self.cond_a or self.cond_b or self.cond_c

    def to_dict(self) -> dict:
        return {
            "cond_a": self.cond_a,
            "cond_b": self.cond_b,
            "cond_c": self.cond_c,
            "hyp_H": self.hyp_H,
            "c1": self.c1,
            "c2": self.c2,
            "q2_sign": self.q2_sign,
            "normal_form": None if self.normal_form is None else self.normal_form.to_dict(),
        }


def hypothesis_H(nf: NormalForm) -> bool:
    """Hypothesis (H) evaluated on normal-form coefficients."""
    lhs = (nf.p0 * nf.q1 - nf.p1 * nf.q0) ** 2 + (nf.p0 * nf.q2) ** 2
    return (lhs < (nf.p1 * nf.q2) ** 2 and nf.p0 >= 0.0 and nf.q0 >= 0.0
            and nf.p1 > 0.0 and nf.q2 != 0.0)


def _sign_label(v: float) -> str:
    return "+" if v > 0 else "-" if v < 0 else "0"


def classify_hypotheses(p: AbelParams, samples: int = 4096) -> HypothesisReport:
    """Evaluate the three fixed-sign inequalities, (H), (C.1) and (C.2)."""
    a0, a1, a2, b0, b1, b2 = p.as_tuple()
    cond_a = a0 * a0 >= a1 * a1 + a2 * a2
    cond_b = b0 * b0 >= b1 * b1 + b2 * b2
    cond_c = (a1 * b0 - a0 * b1) ** 2 + (a0 * b2 - a2 * b0) ** 2 >= (a1 * b2 - a2 * b1) ** 2
    nf = reduce_to_normal_form(p)
    # The (H) inequality is invariant under the rotation and both reflections,
    # so it is evaluated on the raw coefficients: it is then exactly "not cond_c".
    hyp = (not cond_c) and nf.p1 > 0.0 and nf.q2 != 0.0
    if nf.p1 > 0.0:
        c1, c2 = check_C1_C2(nf.g(), nf.f(), samples)
    else:
        c1, c2 = False, "indefinite"
    return HypothesisReport(cond_a, cond_b, cond_c, hyp, c1, c2, _sign_label(nf.q2), nf)


def trig_zeros(tp: TrigPoly, samples: int = 4096, xtol: float = 1e-12) -> np.ndarray:
    """Zeros of ``tp`` in [0, 2pi) from sign changes on a periodic grid, refined by bisection."""
    t = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    dt = TWO_PI / samples
    v = tp(t)
    zeros = []
    for i in range(samples):
        a, b = v[i], v[(i + 1) % samples]
        if a == 0.0:
            zeros.append(t[i])
        elif a * b < 0.0:
            ta, tb = t[i], t[i] + dt
            if tp(ta) * tp(tb) < 0.0:
                zeros.append(brentq(tp, ta, tb, xtol=xtol))
            else:
                # the sign flips across the wrap point only through rounding
                zeros.append(tb)
    zeros = sorted(z % TWO_PI for z in zeros)
    out = []
    for z in zeros:
        if not out or z - out[-1] > 10 * xtol:
            out.append(z)
    if len(out) > 1 and out[0] + TWO_PI - out[-1] <= 10 * xtol:
        out.pop()
    return np.array(out)


def check_C1_C2(g: TrigPoly, f: TrigPoly, samples: int = 4096,
                zero_threshold: float = 1e-10) -> tuple[bool, str]:
    """Conditions (C.1) and (C.2) for arbitrary trigonometric g, f.

    Returns ``(c1, c2)`` where ``c2`` is ``"increasing"``, ``"decreasing"`` or
    ``"indefinite"`` according to the sign of g'f - f'g (the sign of the
    derivative of u = -f/g).
    """
    if g.is_zero():
        raise ValueError("g must not vanish identically")
    zeros = trig_zeros(g, samples)
    scale = max(1.0, abs(f.constant), *map(abs, f.cos_coeffs), *map(abs, f.sin_coeffs))
    c1 = len(zeros) == 2 and bool(np.all(np.abs(f(zeros)) > zero_threshold * scale))

    t = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    d = g.derivative(t) * f(t) - f.derivative(t) * g(t)
    if np.any(np.abs(d) < zero_threshold):
        warnings.warn("g'f - f'g is below the zero threshold at some sample; "
                      "monotonicity reported as indefinite", ResolutionWarning, stacklevel=2)
        return c1, "indefinite"
    if np.all(d > 0):
        return c1, "increasing"
    if np.all(d < 0):
        return c1, "decreasing"
    return c1, "indefinite"
