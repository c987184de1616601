import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abelcycles.continuation import (DECREASING, INCREASING, StepConfig, WitnessNotFound,
                                     continue_in_q0, correct_cycle, find_three_cycle_witness,
                                     hopf_inventory, hopf_radius, verify_empty_region)
from abelcycles.model import normal_form
from abelcycles.poincare import STABLE, UNSTABLE, find_limit_cycles

HOPF = normal_form(0.03, 1, 0.25 * 0.03 ** 2, 0.3, 1.0)
BASE = normal_form(0.0, 1.0, 0.0, 0.3, 1.0)


@pytest.fixture(scope="module")
def pos_branches():
    inv = find_limit_cycles(HOPF)
    return [continue_in_q0(HOPF, c, INCREASING, (-1, 1)) for c in inv.cycles]


def test_branches_are_monotone_and_fold_agrees(pos_branches):
    a, b = pos_branches
    assert {a.points[0][1].stability, b.points[0][1].stability} == {STABLE, UNSTABLE}
    for br in pos_branches:
        assert br.is_monotone() and br.termination == "fold"
        assert br.fold.Lpp_sign == "+"
        assert abs(br.fold.cycle_at_fold.multiplier - 1) < 1e-6
    assert a.fold.q0_at_fold == pytest.approx(b.fold.q0_at_fold, abs=1e-8)
    assert a.fold.cycle_at_fold.x_at_0 == pytest.approx(b.fold.cycle_at_fold.x_at_0, rel=1e-4)


def test_negative_q2_fold_sign():
    nf = normal_form(0.3, 1, -0.02, -0.2, -1.0)
    c = find_limit_cycles(nf).cycles[0]
    br = continue_in_q0(nf, c, DECREASING, (-1, 1))
    assert br.termination == "fold" and br.fold.Lpp_sign == "-"
    assert br.is_monotone()


def test_fold_splits_into_two_cycles(pos_branches):
    fold = pos_branches[0].fold
    xf, qf = fold.cycle_at_fold.x_at_0, fold.q0_at_fold
    w = (3 * xf, 0.3 * xf) if xf < 0 else (0.3 * xf, 3 * xf)
    eps = 1e-6
    inner = find_limit_cycles(HOPF.with_values(q0=qf - eps), window=w)
    outer = find_limit_cycles(HOPF.with_values(q0=qf + eps), window=w)
    assert inner.nonzero_count == 2 and outer.nonzero_count == 0
    assert sorted(c.stability for c in inner.cycles) == [STABLE, UNSTABLE]


def test_zero_branch_is_constant():
    c = find_limit_cycles(HOPF, window=(-1, 1)).cycles[0]
    c.x_at_0 = 0.0
    br = continue_in_q0(HOPF, c, INCREASING, (0, 0.1))
    assert np.all(br.x_at_0 == 0.0) and br.termination == "range_end"


def test_direction_validation():
    c = find_limit_cycles(HOPF).cycles[0]
    with pytest.raises(ValueError):
        continue_in_q0(HOPF, c, "sideways")


@pytest.mark.parametrize("q2,expected", [(1.0, (0, 2)), (-1.0, (1, 1))])
@pytest.mark.parametrize("eps", [0.01, 0.02, 0.03, 0.04, 0.05])
def test_small_cycle_distribution(q2, expected, eps):
    base = BASE.with_values(q2=q2)
    inv = hopf_inventory(base, eps, 0.25 * eps * eps)
    assert (inv.count_pos, inv.count_neg) == expected
    assert inv.total_count == 3
    r = hopf_radius(base.with_values(p0=eps, q0=0.25 * eps * eps))
    assert all(abs(c.x_at_0) < 8 * r for c in inv.cycles)


def test_unperturbed_base_has_no_small_cycles():
    assert hopf_inventory(BASE, 0.0, 0.0).nonzero_count == 0
    with pytest.raises(ValueError):
        hopf_inventory(BASE.with_values(q2=0.0), 0.01, 0.0)


@pytest.mark.parametrize("p1,q1,q2", [(1, 0, 1), (1, 3, -0.5)])
def test_empty_region_examples(p1, q1, q2):
    rep = verify_empty_region(p1, q1, q2)
    assert rep.passed and rep.nonzero_count == 0
    assert rep.inventory.zero_orbit.multiplicity == 4
    assert json.loads(json.dumps(rep.to_dict()))["passed"] is True


@settings(max_examples=10)
@given(st.floats(0.1, 2.0), st.floats(-2.0, 2.0), st.floats(0.1, 2.0), st.sampled_from([1, -1]))
def test_empty_region_property(p1, q1, q2, s):
    assert verify_empty_region(p1, q1, s * q2).nonzero_count == 0


@pytest.mark.parametrize("q2", [1.0, -1.0])
def test_three_cycle_witness(q2):
    w = find_three_cycle_witness(seed=0, q2=q2)
    assert w.inventory.total_count == 3
    if q2 > 0:
        assert w.inventory.count_neg == 2
    again = find_limit_cycles(w.params, grid_n=2048)
    assert again.total_count == 3
    d = json.loads(w.to_json())
    assert d["total_count"] == 3 and d["search_trace"]


def test_witness_not_found_in_restricted_box():
    box = {"q0": (1.01, 1.5), "q1": (-0.1, 0.1)}
    with pytest.raises(WitnessNotFound) as exc:
        find_three_cycle_witness(seed=0, box=box, budget=6)
    assert exc.value.best_count <= 2
    assert len(exc.value.trace) == 6


def test_correct_cycle_recovers_root():
    c = find_limit_cycles(HOPF).cycles[0]
    res = correct_cycle(HOPF, c.x_at_0 * 1.01)
    assert res is not None and res[0] == pytest.approx(c.x_at_0, rel=1e-9)


def test_branch_exports(tmp_path, pos_branches):
    br = pos_branches[0]
    path = tmp_path / "b.csv"
    br.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["q0", "x_at_0", "multiplier", "stability"]
    assert len(rows) == len(br.points) + 1
    d = json.loads(json.dumps(br.to_dict()))
    assert d["termination"] == "fold" and d["fold"]["Lpp_sign"] == "+"
    assert StepConfig().to_dict()["h0"] == 1e-3
