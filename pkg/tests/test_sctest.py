import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from amolab.arithmetic import construct_phase, find_resonances
from amolab.eigensolve import BoxSpec, dense_eigenpairs, eigenvector_profile
from amolab.errors import InvalidArgument, InvalidRegime, NotAResonance
from amolab.operator import OperatorParams, potential_array
from amolab.sctest import (as_signed_log, decay_slope, palindrome_test, potential_symmetry_bound, reflect,
                           sc_transport_check, wronskian_profile)


@given(st.lists(st.floats(-10, 10, allow_nan=False).filter(lambda x: x != 0), min_size=2, max_size=40),
       st.integers(-50, 50), st.integers(-20, 20))
def test_reflect_is_involution(vals, k, start):
    u = as_signed_log(np.array(vals), np.arange(start, start + len(vals)))
    r = reflect(reflect(u, k), k)
    assert np.array_equal(r.sites, u.sites)
    assert np.array_equal(r.sign, u.sign) and np.array_equal(r.log, u.log)


def test_reflect_values():
    u = as_signed_log(np.array([1.0, -2.0, 3.0]), np.array([0, 1, 2]))
    r = reflect(u, 5)
    assert list(r.sites) == [3, 4, 5]
    assert np.allclose(r.linear(), [3.0, -2.0, 1.0])


@given(st.lists(st.floats(-5, 5, allow_nan=False).filter(lambda x: abs(x) > 1e-3), min_size=2, max_size=30))
def test_self_wronskian_vanishes(vals):
    W = wronskian_profile(np.array(vals), np.array(vals))
    assert np.all(W.linear() == 0)


def test_wronskian_needs_overlap():
    with pytest.raises(InvalidArgument):
        wronskian_profile(as_signed_log([1.0, 2.0], [0, 1]), as_signed_log([1.0, 2.0], [5, 6]))


def test_wronskian_matches_direct():
    rng = np.random.default_rng(1)
    u, v = rng.normal(size=12), rng.normal(size=12)
    W = wronskian_profile(u, v).linear()
    assert np.allclose(W, u[1:] * v[:-1] - u[:-1] * v[1:], rtol=1e-12, atol=1e-14)


K = 20
SITES = np.arange(-40, 61)


def symmetric_potential(n):
    return 3.0 * math.cos(0.37 * (n - K / 2))


def test_exact_palindrome():
    # even profile about K/2 with an exactly symmetric potential
    u = np.exp(-0.05 * (SITES - K / 2) ** 2) + 0.1
    v = palindrome_test(as_signed_log(u, SITES), K, 0.6, 0.1, potential=symmetric_potential)
    assert v.potential_mismatch == 0.0
    assert v.wronskian_sup <= 1e-10
    assert v.branch == "difference small" and v.iota == -1
    assert v.parity == "even" and v.midpoint == 10
    assert v.transport_ratio <= 1e-12 and v.transport_defect <= 1e-12


def test_odd_palindrome_branch():
    k = 21
    u = np.exp(-0.05 * (SITES - k / 2) ** 2)
    v = palindrome_test(as_signed_log(u, SITES), k, 0.6, 0.1, potential=lambda n: math.cos(0.3 * (n - k / 2)))
    assert v.parity == "odd"
    assert v.branch == "difference small"
    assert v.wronskian_sup <= 1e-10


def test_antisymmetric_profile_takes_sum_branch():
    x = SITES - K / 2
    u = x * np.exp(-0.05 * x ** 2)
    u[SITES == K // 2] = 1e-300  # keep the log finite at the node
    prof = as_signed_log(u, SITES)
    v = palindrome_test(prof, K, 0.6, 0.1, potential=symmetric_potential)
    assert v.branch == "sum small" and v.iota == 1


def test_random_vector_exceeds_bound():
    rng = np.random.default_rng(3)
    u = rng.normal(size=len(SITES))
    v = palindrome_test(as_signed_log(u, SITES), K, 0.6, 0.1, potential=symmetric_potential)
    assert v.wronskian_sup > v.predicted_bound


def test_not_a_resonance():
    with pytest.raises(NotAResonance):
        palindrome_test(as_signed_log(np.ones(len(SITES)), SITES), K, 0.6, 0.1, potential=lambda n: math.cos(n))


def test_window_must_cover_resonance():
    with pytest.raises(InvalidArgument):
        palindrome_test(as_signed_log(np.ones(20), np.arange(0, 20)), K, 0.6, 0.1, potential=symmetric_potential)


@pytest.fixture(scope="module")
def sc_params(golden):
    ph = construct_phase(golden, 0.6, [20])
    return OperatorParams(0.3, golden, ph.value), ph


def test_potential_symmetry_bound(sc_params):
    p, _ = sc_params
    bound = potential_symmetry_bound(p, 20)
    V = potential_array(p, -200, 401)
    Vi = potential_array(p, 20 - 200, 401)[::-1]
    assert np.max(np.abs(V - Vi)) <= bound * (1 + 1e-9)
    assert bound <= 2 * math.pi * 2 * math.exp(0.3) * math.exp(-0.6 * 20) * 1.01


def test_telescoping_identity_on_eigenvector(sc_params):
    p, _ = sc_params
    box = BoxSpec(-60, 60)
    E, W = dense_eigenpairs(p, box)
    peaks = np.argmax(np.abs(W), axis=0) + box.a
    i = int(np.argmin(np.abs(peaks - 10)))
    prof = eigenvector_profile(p, box, float(E[i]))
    v = palindrome_test(prof, 20, 0.6, 0.1, p)
    assert v.telescoping_residual <= 1e-8
    assert v.potential_mismatch <= v.potential_bound * (1 + 1e-9)


def test_localized_params_rejected(golden):
    ph = construct_phase(golden, 0.5, [20])
    p = OperatorParams(1.0, golden, ph.value)
    with pytest.raises(InvalidRegime):
        sc_transport_check(p, [20], 100, delta_hat=0.5)


def test_decay_slope_exponential():
    sites = np.arange(-100, 101)
    from amolab.hierarchy import profile_from_logU

    prof = profile_from_logU(sites, -0.7 * np.abs(sites))
    assert decay_slope(prof, -100, 100) == pytest.approx(-0.7, abs=1e-12)


def test_sc_pipeline_small(sc_params):
    p, ph = sc_params
    res = find_resonances(p.alpha, ph.value, 0.4, 100, k_min=10)
    rep = sc_transport_check(p, res, 150, delta_hat=0.6)
    assert rep.verdicts
    assert 0 <= rep.transport_fraction <= 1 and 0 <= rep.wronskian_fraction <= 1
    for v in rep.verdicts:
        assert v.telescoping_residual <= 1e-6
        assert v.k in rep.resonances
    lines = rep.to_jsonl().splitlines()
    assert len(lines) == len(rep.verdicts)
