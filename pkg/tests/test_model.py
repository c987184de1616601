import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from abelcycles.model import (AbelParams, NormalForm, ResolutionWarning, TrigPoly, check_C1_C2,
                              classify_hypotheses, evaluate_trig, hypothesis_H, normal_form,
                              reduce_to_normal_form)
from abelcycles.poincare import find_limit_cycles
from abelcycles.integrator import integrate

coef = st.floats(-3.0, 3.0, allow_nan=False)
params6 = st.tuples(*[coef] * 6)


def test_evaluate_trig_examples():
    assert evaluate_trig(TrigPoly(0.0, (0.0,), (1.0,)), math.pi / 2) == pytest.approx(1.0, abs=1e-15)
    assert evaluate_trig(TrigPoly(1.0, (1.0,), (0.0,)), math.pi) == pytest.approx(0.0, abs=1e-15)
    assert evaluate_trig(TrigPoly(0.5, (0.0,), (1.0,)), 7 * math.pi / 6) == pytest.approx(0.0, abs=1e-15)


def test_trigpoly_rejects_bad_input():
    with pytest.raises(ValueError):
        TrigPoly(math.nan, (0.0,), (0.0,))
    with pytest.raises(ValueError):
        TrigPoly(0.0, (1.0, 2.0), (0.0,))


@given(st.integers(0, 5), st.data())
def test_derivative_matches_central_difference(m, data):
    c = data.draw(st.lists(coef, min_size=2 * m + 1, max_size=2 * m + 1))
    tp = TrigPoly(c[0], tuple(c[1:m + 1]), tuple(c[m + 1:]))
    t = data.draw(st.floats(0.0, 2 * math.pi))
    eps = 1e-5
    fd = (tp(t + eps) - tp(t - eps)) / (2 * eps)
    exact = evaluate_trig(tp, t, derivative=1)
    assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


@given(st.lists(coef, min_size=5, max_size=5), st.floats(-20.0, 20.0))
def test_periodicity(c, t):
    tp = TrigPoly(c[0], tuple(c[1:3]), tuple(c[3:]))
    assert tp(t + 2 * math.pi) == pytest.approx(tp(t), abs=1e-12)


def test_reduce_examples():
    nf = reduce_to_normal_form(AbelParams(0, 0, 1, 0, 2, 3))
    assert nf.as_tuple() == pytest.approx((0, 1, 0, 3, -2), abs=1e-14)
    assert nf.theta == pytest.approx(math.pi / 2)
    nf = reduce_to_normal_form(AbelParams(1, 3, 4, 0, 5, 5))
    assert nf.as_tuple() == pytest.approx((1, 5, 0, 7, -1), abs=1e-14)
    assert nf.theta == pytest.approx(math.atan(4 / 3))
    nf = reduce_to_normal_form(AbelParams(0.3, 2.0, 0.0, 0.1, -0.4, 0.7))
    assert nf.as_tuple() == (0.3, 2.0, 0.1, -0.4, 0.7) and nf.theta == 0.0 and nf.sign_flips == ()


def test_reduce_degenerate():
    nf = reduce_to_normal_form(AbelParams(1, 0, 0, 0.5, 2, 3))
    assert nf.degenerate and nf.p1 == 0 and (nf.q1, nf.q2) == (2, 3)


@given(params6)
def test_reduction_invariants(v):
    p = AbelParams(*v)
    nf = reduce_to_normal_form(p)
    assert nf.p1 >= 0 and nf.p0 >= 0 and nf.q0 >= 0
    assert nf.p1 ** 2 == pytest.approx(p.a1 ** 2 + p.a2 ** 2, rel=1e-12, abs=1e-14)
    if nf.p1 > 0:
        assert nf.q1 ** 2 + nf.q2 ** 2 == pytest.approx(p.b1 ** 2 + p.b2 ** 2, rel=1e-10, abs=1e-12)


@given(params6)
def test_normal_form_is_a_time_shift_of_the_raw_equation(v):
    # before the sign flips, g_raw(t) = g_nf(t + theta)
    p = AbelParams(*v)
    nf = reduce_to_normal_form(p)
    assume(nf.sign_flips == () and not nf.degenerate)
    t = np.linspace(0, 2 * math.pi, 17)
    assert np.allclose(p.g()(t), nf.g()(t + nf.theta), atol=1e-12)
    assert np.allclose(p.f()(t), nf.f()(t + nf.theta), atol=1e-12)


def test_params_parse():
    assert AbelParams.parse("1,2,3,4,5,6").as_tuple() == (1, 2, 3, 4, 5, 6)
    p = AbelParams.parse('{"a0":1,"a1":2,"a2":3,"b0":4,"b1":5,"b2":6}')
    assert p.b2 == 6
    for bad in ("1,2,3", "1,2,x,4,5,6", '{"a0":1}', "1,2,3,4,5,nan"):
        with pytest.raises(ValueError):
            AbelParams.parse(bad)


def test_classify_examples():
    assert classify_hypotheses(AbelParams(2, 1, 0, 0, 0, 0)).cond_a
    rep = classify_hypotheses(normal_form(0, 1, 0, 0, 1).to_params())
    assert rep.hyp_H and hypothesis_H(normal_form(0, 1, 0, 0, 1))
    rep = classify_hypotheses(normal_form(1, 1, 0, 0, 1).to_params())
    assert not rep.hyp_H and rep.cond_c
    assert not hypothesis_H(normal_form(1, 1, 0, 0, 1))


@given(params6)
def test_hyp_H_excludes_condition_c(v):
    rep = classify_hypotheses(AbelParams(*v), samples=512)
    if rep.hyp_H:
        assert not rep.cond_c
        assert rep.normal_form.p1 > 0 and rep.normal_form.q2 != 0
        assert hypothesis_H(rep.normal_form)


def test_C1_C2_examples():
    s, c = TrigPoly(0, (0,), (1,)), TrigPoly(0, (1,), (0,))
    assert check_C1_C2(s, c) == (True, "increasing")
    assert check_C1_C2(s, s)[0] is False
    assert check_C1_C2(TrigPoly(0.5, (0,), (1,)), c) == (True, "increasing")


def test_C1_C2_warns_below_threshold():
    # g'f - f'g vanishes identically when f is a multiple of g
    g = TrigPoly(0.2, (0,), (1,))
    with pytest.warns(ResolutionWarning):
        assert check_C1_C2(g, g)[1] == "indefinite"


@given(st.floats(0.0, 0.9), st.floats(0.2, 2.0), st.floats(0.0, 0.5), st.floats(-2, 2),
       st.sampled_from([-1.0, 1.0]))
def test_C1_C2_under_H_follows_sign_of_q2(p0, p1, q0, q1, s):
    nf = normal_form(p0 * p1, p1, q0, q1, s * (abs(q1) + 1.0) * 3)
    assume(hypothesis_H(nf))
    # keep a margin from the boundary of (H) so the sampled sign is unambiguous
    lhs = (nf.p0 * nf.q1 - nf.p1 * nf.q0) ** 2 + (nf.p0 * nf.q2) ** 2
    assume(lhs < 0.9 * (nf.p1 * nf.q2) ** 2)
    c1, c2 = check_C1_C2(nf.g(), nf.f())
    assert c1
    assert c2 == ("increasing" if nf.q2 > 0 else "decreasing")


def _map_cycles_to_raw(nf: NormalForm, inv):
    """x(0) of the raw equation for each cycle found on the normal form."""
    s, sign = nf.original_section()
    s = s % (2 * math.pi)
    out = []
    for c in inv.cycles:
        y = c.x_at_0 if s == 0.0 else integrate(nf.g(), nf.f(), c.x_at_0, 0.0, s).P
        m = c.multiplier if not nf.time_reversed else 1.0 / c.multiplier
        out.append((sign * y, m))
    return sorted(out)


@settings(max_examples=12)
@given(st.tuples(*[st.floats(-1.5, 1.5)] * 6))
def test_reduction_preserves_cycles(v):
    p = AbelParams(*v)
    nf = reduce_to_normal_form(p)
    assume(not nf.degenerate)
    raw = find_limit_cycles(p, (-20, 20), with_orbits=False)
    red = find_limit_cycles(nf, (-20, 20), with_orbits=False)
    mapped = [(x, m) for x, m in _map_cycles_to_raw(nf, red) if abs(x) < 5]
    found = [(c.x_at_0, c.multiplier) for c in raw.cycles if abs(c.x_at_0) < 5]
    assert len(mapped) == len(found)
    for (xa, ma), (xb, mb) in zip(mapped, found):
        assert xa == pytest.approx(xb, rel=1e-6, abs=1e-9)
        assert ma == pytest.approx(mb, rel=1e-6)
