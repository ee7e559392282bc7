import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from amolab.arithmetic import (Frequency, Phase, ResonanceSequence, construct_phase, continued_fraction,
                               find_resonances, ln_sin_sum, locate_x0_eta, log_fraction, log_sin_pi,
                               log_torus_norm, resonance_exponent, torus_norm)
from amolab.errors import InvalidArgument

fractions = st.fractions(min_value=-10**6, max_value=10**6, max_denominator=10**9)
unit_fractions = st.integers(2, 10**9).flatmap(lambda q: st.builds(lambda p: Fraction(p, q), st.integers(1, q - 1)))


# -- continued fractions -------------------------------------------------

def test_cf_three_sevenths():
    coeffs, convs = continued_fraction(Fraction(3, 7))
    assert coeffs == [2, 3]
    assert convs == [(1, 2), (3, 7)]


def test_cf_thirteen_29():
    assert continued_fraction(Fraction(13, 29))[0] == [2, 4, 3]


def test_cf_fibonacci_ratio_canonical():
    coeffs, convs = continued_fraction(Fraction(4181, 6765))
    # canonical form ends in 2; [1]*19 is the equivalent non-canonical expansion
    assert coeffs == [1] * 17 + [2]
    assert convs[-1] == (4181, 6765)


def test_golden_target_keeps_all_fibonacci_convergents():
    a = Frequency.from_target("golden", min_denominator=24000)
    qs = a.convergent_denominators()
    assert all(q in qs for q in (89, 233, 610, 1597, 4181, 6765))
    assert a.den >= 24000


@given(unit_fractions)
def test_cf_roundtrip(x):
    coeffs, convs = continued_fraction(x)
    assert Fraction(*convs[-1]) == x


@given(unit_fractions)
def test_convergents_satisfy_approximation_bound(x):
    _, convs = continued_fraction(x)
    for (p, q), (_, q1) in zip(convs[:-2], convs[1:-1]):
        assert abs(x - Fraction(p, q)) < Fraction(1, q * q1)


@given(st.integers(1, 10**6), st.integers(10**6 + 1, 2 * 10**6))
def test_best_approximation(p, q):
    x = Fraction(p, q)
    _, convs = continued_fraction(x)
    for (pn, qn) in convs[1:]:
        if qn > 3000:
            break
        assert torus_norm(qn * x) == abs(qn * x - pn)
        assert all(torus_norm(qn * x) < torus_norm(k * x) for k in range(1, qn))


def test_frequency_invariants(golden, golden_deep):
    golden.check_invariants()
    golden_deep.check_invariants()


def test_frequency_roundtrip(golden):
    assert Frequency.from_dict(golden.to_dict()).value == golden.value


# -- torus norm ----------------------------------------------------------

@pytest.mark.parametrize("x,expected", [(Fraction(7, 10), Fraction(3, 10)), (Fraction(1, 2), Fraction(1, 2)),
                                        (Fraction(13, 5), Fraction(2, 5))])
def test_torus_norm_examples(x, expected):
    assert torus_norm(x) == expected


@given(fractions, st.integers(-1000, 1000))
def test_torus_norm_periodic_and_even(x, m):
    assert torus_norm(x + m) == torus_norm(x)
    assert torus_norm(-x) == torus_norm(x)
    assert 0 <= torus_norm(x) <= Fraction(1, 2)


@given(unit_fractions)
def test_log_torus_norm_accuracy(x):
    t = torus_norm(x)
    if t:
        assert math.isclose(log_torus_norm(x), math.log(float(t)), rel_tol=1e-12, abs_tol=1e-12)


def test_log_fraction_tiny():
    x = Fraction(1, 3**500)
    assert math.isclose(log_fraction(x), -500 * math.log(3), rel_tol=1e-13)


@given(unit_fractions)
def test_log_sin_pi(x):
    s = abs(math.sin(math.pi * float(x)))
    if s > 1e-6:
        assert math.isclose(log_sin_pi(x), math.log(s), abs_tol=1e-10)


# -- exponents and resonances --------------------------------------------

def test_beta_golden_frozen(golden):
    # oracle: direct scan over the dyadic tail; maximum at k = 55
    beta, k = resonance_exponent("beta", golden, K_max=100)
    assert k == 55
    assert beta == pytest.approx(0.0874942610067712, rel=1e-9)
    assert beta <= 0.09


def test_delta_constructed(golden, resonant_phase):
    est, k = resonance_exponent("delta", golden, resonant_phase.value, K_max=20)
    assert k == 20
    assert abs(est - 0.5) <= 0.02


def test_delta_single_term(golden):
    est, k = resonance_exponent("delta", golden, Fraction(1, 4), K_max=1, k_min=1)
    ref = max(-log_torus_norm(Fraction(1, 2) + s * golden.value) for s in (1, -1))
    assert est == pytest.approx(ref, rel=1e-12)


def test_resonance_exponent_bad_mode(golden):
    with pytest.raises(InvalidArgument):
        resonance_exponent("gamma", golden)


def test_find_resonances_constructed(golden, resonant_phase):
    res = find_resonances(golden, resonant_phase.value, 0.4, 200)
    assert res.ks == [20]
    assert res.strengths[0] == pytest.approx(0.5, abs=0.02)


def test_find_resonances_absurd_threshold(golden, resonant_phase):
    assert len(find_resonances(golden, resonant_phase.value, 10.0, 50)) == 0


def test_two_resonances_near_periodic():
    # ||2theta + 15 alpha|| and ||2theta + 120 alpha|| both small force ||105 alpha|| small
    alpha = Frequency.near_period(105, 0.5 * 15)
    ph = construct_phase(alpha, 0.5, [15, 120])
    res = find_resonances(alpha, ph.value, 0.3, 200)
    assert 15 in res.ks and 120 in res.ks
    assert len(res) == 2


def test_delta_bounds_every_resonance(golden, resonant_phase):
    res = find_resonances(golden, resonant_phase.value, 0.05, 100, k_min=1)
    est, _ = resonance_exponent("delta", golden, resonant_phase.value, K_max=100, k_min=1)
    assert all(est >= s - 1e-12 for s in res.strengths)


@given(st.floats(0.3, 0.9), st.sampled_from([20, 25, 30, 40]))
def test_construct_phase_roundtrip(golden, delta, K):
    ph = construct_phase(golden, delta, [K])
    found = dict(find_resonances(golden, ph.value, 0.9 * delta, 200, k_min=10).entries)
    assert K in found
    assert abs(found[K] - delta) <= 0.1 * delta


def test_construct_phase_window(golden, resonant_phase):
    s = -log_torus_norm(2 * resonant_phase.value + 20 * golden.value) / 20
    assert 0.45 <= s <= 0.55


def test_construct_phase_nonresonant(golden, flat_phase):
    assert flat_phase.delta_hat <= 0.05


def test_construct_phase_zero_delta(golden):
    with pytest.raises(InvalidArgument):
        construct_phase(golden, 0.0, [20])


def test_phase_roundtrip(golden, resonant_phase):
    d = resonant_phase.to_dict()
    back = Phase.from_dict(d)
    assert back.value == resonant_phase.value
    assert back.delta_hat == resonant_phase.delta_hat


def test_growth_constant_positive():
    seq = ResonanceSequence(((20, 0.5), (120, 0.5)), 0.4)
    c = seq.growth_constant
    assert c > 0
    assert 120 >= c * math.exp(c * 20) * (1 - 1e-9)


# -- x0 / eta ------------------------------------------------------------

def test_x0_integer_hit(golden):
    theta = Fraction(-20, 2) * golden.value
    x0, eta, hit = locate_x0_eta(golden, theta, 30)
    assert (x0, eta, hit) == (20, 0.0, True)


def test_x0_eta_nonresonant(golden, flat_phase):
    _, eta, hit = locate_x0_eta(golden, flat_phase.value, 100)
    assert not hit and eta <= 0.1


def test_x0_eta_at_resonance(golden, resonant_phase):
    x0, eta, hit = locate_x0_eta(golden, resonant_phase.value, 20)
    assert x0 == 20 and not hit
    # |sin pi t| = e^{-eta |l|} with ||2theta + 20 alpha|| = e^{-10}
    s = math.sin(math.pi * float(torus_norm(2 * resonant_phase.value + 20 * golden.value)))
    assert eta == pytest.approx(-math.log(s) / 20, rel=1e-10)
    assert eta == pytest.approx(0.5 - math.log(math.pi) / 20, abs=1e-6)


def test_x0_eta_zero_ell(golden):
    with pytest.raises(InvalidArgument):
        locate_x0_eta(golden, Fraction(1, 3), 0)


# -- ln-sin sums ----------------------------------------------------------

def test_ln_sin_sum_two_terms(golden):
    x = Fraction(1, 3)
    S, k0 = ln_sin_sum(x, golden, 2)
    k1 = 1 - k0
    assert S == pytest.approx(log_sin_pi(x + k1 * golden.value) + math.log(2), abs=1e-12)


@pytest.mark.parametrize("q", [233, 1597])
def test_ln_sin_sum_bound(golden, q):
    import numpy as np
    rng = np.random.default_rng(q)
    xs = [Fraction(int(rng.integers(0, 2**40)), 2**40) for _ in range(100 if q == 233 else 5)]
    xs.append(Fraction(123456, 10**6))
    for x in xs:
        S, _ = ln_sin_sum(x, golden, q)
        assert abs(S) <= 10 * math.log(q)
