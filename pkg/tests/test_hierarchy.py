import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from amolab.arithmetic import Frequency, PhaseScan, ResonanceSequence, construct_phase, find_resonances
from amolab.asymptotics import EnvelopeModel, f_log
from amolab.eigensolve import BoxSpec, profiles_peaking_near
from amolab.errors import InvalidArgument
from amolab.hierarchy import (LocalMaximum, build_hierarchy, is_local_max, local_k_maxima, profile_from_logU,
                              reflective_similarity, similarity_range)
from amolab.operator import OperatorParams


def test_single_peak():
    sites = np.arange(-50, 51)
    prof = profile_from_logU(sites, -np.abs(sites - 7).astype(float))
    assert local_k_maxima(prof, 10) == [7]


def test_monotone_has_none():
    sites = np.arange(0, 100)
    prof = profile_from_logU(sites, -0.5 * sites.astype(float))
    assert local_k_maxima(prof, 5) == []


def test_plateau_leftmost():
    sites = np.arange(0, 40)
    u = -np.abs(sites - 20).astype(float)
    u[20:24] = 0.0
    prof = profile_from_logU(sites, u)
    assert local_k_maxima(prof, 5) == [20]


def test_search_window_validated():
    prof = profile_from_logU(np.arange(0, 30), np.zeros(30))
    with pytest.raises(InvalidArgument):
        local_k_maxima(prof, 5, (2, 20))
    with pytest.raises(InvalidArgument):
        local_k_maxima(prof, 0)


@given(st.lists(st.integers(-5, 5), min_size=30, max_size=120), st.integers(1, 6))
def test_local_maxima_definition(vals, K):
    u = np.array(vals, dtype=float)
    prof = profile_from_logU(np.arange(len(u)), u)
    found = local_k_maxima(prof, K)
    lo, hi = K, len(u) - 1 - K
    # every reported site satisfies the definition
    for b in found:
        assert is_local_max(prof, b, K)
    # every qualifying site is reported or sits on a plateau to the right of a reported one
    for i in range(lo, hi + 1):
        if u[i] >= u[i - K:i + K + 1].max():
            j = i
            while j - 1 >= lo and u[j - 1] == u[i] and u[j - 1] >= u[j - 1 - K:j + K].max():
                j -= 1
            assert j in found


def test_f_model_profile_has_max_near_resonance(golden_deep):
    ph = construct_phase(golden_deep, 0.5, [20])
    m = EnvelopeModel.build("f", golden_deep, ph.value, 1.0, 200)
    prof = profile_from_logU(m.ells, m.values, anchor=0)
    near = [b for b in local_k_maxima(prof, 5) if abs(b - 20) <= 3]
    assert near


def test_empty_resonances_root_only(golden_deep):
    sites = np.arange(-100, 101)
    prof = profile_from_logU(sites, -np.abs(sites).astype(float))
    rep = build_hierarchy(prof, ResonanceSequence((), 0.4), golden_deep, 0.1, 1.0)
    assert rep.nodes == [] and rep.root == 0


@pytest.fixture(scope="module")
def single_resonance_run(golden_deep):
    ph = construct_phase(golden_deep, 0.5, [20])
    p = OperatorParams(1.0, golden_deep, ph.value)
    profs = profiles_peaking_near(p, BoxSpec(-600, 600), 0, 5)
    res = find_resonances(golden_deep, ph.value, 0.4, 200)
    return profs, res, ph


def test_single_resonance_depth_one(golden_deep, single_resonance_run):
    profs, res, ph = single_resonance_run
    centred = [q for q in profs if q.anchor == 0]
    assert centred
    for prof in centred:
        rep = build_hierarchy(prof, res, golden_deep, ph.value, 1.0, 1)
        (node,) = rep.nodes
        assert node.status == "found"
        assert node.deviation <= 3
        assert is_local_max(prof, node.position, node.window)


def test_single_resonance_all_profiles(golden_deep, single_resonance_run):
    # off-centre anchors see the resonance at 20 - 2 k0; most still show the node
    profs, res, ph = single_resonance_run
    found = 0
    for prof in profs:
        (node,) = build_hierarchy(prof, res, golden_deep, ph.value, 1.0, 1).nodes
        assert node.resonance_path == (20 - 2 * prof.anchor,)
        if node.status == "found":
            found += 1
            assert node.deviation <= node.window
    assert found >= 0.8 * len(profs)


def test_report_serialization(golden_deep, single_resonance_run, tmp_path):
    profs, res, ph = single_resonance_run
    rep = build_hierarchy(profs[0], res, golden_deep, ph.value, 1.0, 2)
    d = json.loads(rep.to_json())
    assert d["K_hat_est"] == rep.K_hat and d["root"] == profs[0].anchor
    rep.to_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[0].startswith("depth,path")


@pytest.fixture(scope="module")
def two_resonance_run():
    alpha = Frequency.near_period(105, 7.5)
    ph = construct_phase(alpha, 0.5, [15, 120])
    p = OperatorParams(1.0, alpha, ph.value)
    profs = profiles_peaking_near(p, BoxSpec(-500, 500), 0, 5)
    res = find_resonances(alpha, ph.value, 0.4, 200)
    return alpha, ph, profs, res


def test_two_resonances_depth_two(two_resonance_run):
    alpha, ph, profs, res = two_resonance_run
    assert profs
    for prof in profs:
        rep = build_hierarchy(prof, res, alpha, ph.value, 1.0, 2, 0.4)
        deep = [n for n in rep.iter_nodes() if n.depth == 2]
        assert deep and deep[0].status == "found"
        assert deep[0].deviation <= rep.K_hat ** 2
        # resonances are re-expressed from the anchor: predicted k0 + K2 - K1
        K2, K1 = deep[0].resonance_path
        assert deep[0].predicted == prof.anchor + K2 - K1
        assert rep.deviations_within_bound()
        for n in rep.found():
            assert is_local_max(prof, n.position, n.window)


# -- reflective similarity ---------------------------------------------------

def synthetic_node(depth, K, sign, alpha, theta, L=1.0, span=400):
    """Profile equal to log f(sign * x) around a node at site 0."""
    scan = PhaseScan(alpha, theta, 2 * span)
    xs = np.arange(-span, span + 1)
    vals = np.array([0.0 if x == 0 else f_log(*scan.x0_eta(int(sign * x))[:2], L, int(sign * x)) for x in xs])
    prof = profile_from_logU(xs, vals, anchor=0)
    node = LocalMaximum(0, 10, depth, tuple(range(depth)), (K,) * depth, 0, 0, 10)
    return prof, node, scan


def test_similarity_exact_profile_passes(golden_deep):
    ph = construct_phase(golden_deep, 0.5, [20])
    prof, node, scan = synthetic_node(1, 200, -1, golden_deep, ph.value)
    out = reflective_similarity(prof, node, scan, 1.0, 0.15, 0.4, 2, 3.0, 3.0)
    assert out["status"] == "tested"
    assert out["max_deviation"] <= 3.0 and out["passed"]
    assert out["sign_wins"]


def test_similarity_wrong_sign_fails(golden_deep):
    ph = construct_phase(golden_deep, 0.5, [20])
    prof, node, scan = synthetic_node(1, 200, +1, golden_deep, ph.value)
    out = reflective_similarity(prof, node, scan, 1.0, 0.0, 0.4, 2, 3.0, 3.0)
    assert out["status"] == "tested"
    assert not out["passed"]
    assert not out["sign_wins"]


def test_similarity_empty_range(golden_deep):
    prof, node, scan = synthetic_node(1, 20, -1, golden_deep, 0.1, span=60)
    lo, hi = similarity_range(node, 0.4, 1.0, 2, 3.0)
    assert lo > hi
    out = reflective_similarity(prof, node, scan, 1.0, 0.15, 0.4, 2, 3.0, 3.0)
    assert out["status"] == "empty-range" and out["passed"] is None


def test_similarity_range_formula():
    node = LocalMaximum(0, 10, 2, (0, 1), (300, 120), 0, 0, 4)
    assert similarity_range(node, 0.4, 1.0, 2, 3.0) == (12, 12)
