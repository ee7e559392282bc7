"""Exact arithmetic of the frequency and the phase.

Frequencies and phases are exact rationals (``fractions.Fraction``).  Every
torus norm ``||x||`` is computed exactly; only its logarithm is rounded.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import mpmath
import numpy as np
from scipy.special import lambertw

from .errors import (
    ConstructionFailed,
    DegenerateArgumentError,
    DegeneratePhaseError,
    InvalidArgument,
)

LN2 = math.log(2.0)
LNPI = math.log(math.pi)

# partial quotients of the named quadratic irrationals (purely periodic tails)
_TARGETS = {
    "golden": (1,),  # (sqrt5 - 1)/2
    "silver": (2,),  # sqrt2 - 1
    "sqrt3": (1, 2),  # sqrt3 - 1
}


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, float):
        return Fraction(x)
    raise InvalidArgument(f"cannot interpret {x!r} as an exact rational")


# --------------------------------------------------------------------------
# logs of exact rationals


def log_ratio(n: int, d: int) -> float:
    """``ln(n/d)`` for positive integers, to ~1e-16 relative error.

    The quotient is formed with a 64-bit integer mantissa so huge
    numerators and denominators never pass through a float.
    """
    if n <= 0 or d <= 0:
        raise InvalidArgument("log_ratio needs positive integers")
    shift = 64 - (n.bit_length() - d.bit_length())
    if shift >= 0:
        q = (n << shift) // d
    else:
        q = n // (d << -shift)
    return math.log(q) - shift * LN2


def log_fraction(x: Fraction) -> float:
    if x <= 0:
        raise InvalidArgument("log of a non-positive rational")
    return log_ratio(x.numerator, x.denominator)


def torus_norm(x) -> Fraction:
    """Distance from ``x`` to the nearest integer, exactly."""
    x = as_fraction(x)
    r = x - math.floor(x)
    return min(r, 1 - r)


def log_torus_norm(x) -> float:
    """``ln ||x||``; ``-inf`` when ``x`` is an integer."""
    t = torus_norm(x)
    if t == 0:
        return -math.inf
    return log_fraction(t)


def _log_sin_pi_from_norm(num: int, den: int) -> float:
    """``ln|sin(pi y)|`` for ``y = num/den`` in ``(0, 1/2]``."""
    z = math.pi * (num / den)
    if z < 1e-4:
        # sin z / z = 1 - z^2/6 + ...; the log of the prefactor is tiny
        return LNPI + log_ratio(num, den) + math.log1p(-z * z / 6.0)
    return math.log(math.sin(z))


def log_sin_pi(x) -> float:
    """``ln|sin(pi x)|`` with the argument reduced exactly mod 1."""
    t = torus_norm(x)
    if t == 0:
        return -math.inf
    return _log_sin_pi_from_norm(t.numerator, t.denominator)


def exp_neg_fraction(x: float, bits: int = 96) -> Fraction:
    """A dyadic rational within relative ``2**-bits`` of ``exp(-x)``."""
    with mpmath.workprec(bits + 16):
        v = mpmath.exp(-mpmath.mpf(x))
        man, exp = v.man, v.exp
    return Fraction(int(man)) * (Fraction(2) ** int(exp))


# --------------------------------------------------------------------------
# continued fractions


def continued_fraction(x, max_depth: int = 10_000):
    """Euclid expansion of ``x`` in (0, 1).

    Returns ``(coeffs, convergents)`` with ``x = 1/(a1 + 1/(a2 + ...))`` and
    convergents ``[(p1, q1), (p2, q2), ...]``.  Terminating expansions are in
    canonical form (last coefficient >= 2 unless the expansion is ``[1]``).
    """
    if max_depth < 1:
        raise InvalidArgument("max_depth must be >= 1")
    x = as_fraction(x)
    if not (0 < x < 1):
        raise InvalidArgument("continued_fraction needs 0 < x < 1")
    num, den = x.denominator, x.numerator  # expand 1/x
    coeffs = []
    while den and len(coeffs) < max_depth:
        a, r = divmod(num, den)
        coeffs.append(a)
        num, den = den, r
    return coeffs, convergents_from_coeffs(coeffs)


def convergents_from_coeffs(coeffs):
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    out = []
    for a in coeffs:
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        out.append((p, q))
    return out


def fraction_from_coeffs(coeffs) -> Fraction:
    x = Fraction(0)
    for a in reversed(coeffs):
        x = 1 / (a + x)
    return x


def _lambert_c(a: int, b: int) -> float:
    """Largest ``c`` with ``b >= c * exp(c * a)``."""
    return float(lambertw(a * b).real) / a


# --------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Frequency:
    value: Fraction
    cf_coeffs: tuple
    convergents: tuple
    dio_params: tuple | None = None

    @classmethod
    def from_fraction(cls, x, dio_params=None):
        x = as_fraction(x)
        if not (0 < x < 1):
            raise InvalidArgument("frequency must lie in (0, 1)")
        coeffs, convs = continued_fraction(x)
        return cls(x, tuple(coeffs), tuple(convs), dio_params)

    @classmethod
    def from_coeffs(cls, coeffs, dio_params=None):
        coeffs = tuple(int(a) for a in coeffs)
        if not coeffs or min(coeffs) < 1:
            raise InvalidArgument("partial quotients must be positive")
        convs = tuple(convergents_from_coeffs(coeffs))
        p, q = convs[-1]
        return cls(Fraction(p, q), coeffs, convs, dio_params)

    @classmethod
    def from_target(cls, name: str = "golden", depth: int | None = None, min_denominator: int = 1):
        """Convergent of a named quadratic irrational.

        The depth is either given or grown until the denominator reaches
        ``min_denominator``.
        """
        if name not in _TARGETS:
            raise InvalidArgument(f"unknown target irrational {name!r}; known: {sorted(_TARGETS)}")
        period = _TARGETS[name]
        coeffs = []
        i = 0
        while True:
            coeffs.append(period[i % len(period)])
            i += 1
            q = convergents_from_coeffs(coeffs)[-1][1]
            if depth is not None:
                if len(coeffs) >= depth:
                    break
            elif q >= min_denominator and len(coeffs) >= 2:
                break
        return cls.from_coeffs(coeffs)

    @classmethod
    def near_period(cls, q: int, log_norm: float, p: int | None = None, sign: int = -1):
        """``alpha = p/q + sign * exp(-log_norm)/q`` on a dyadic grid.

        Gives ``||q alpha|| = exp(-log_norm)``, i.e. a frequency whose
        potential is almost periodic with period ``q`` at that scale.  When
        ``p`` is omitted the numerator with the smallest partial quotients is
        used.
        """
        if q < 2:
            raise InvalidArgument("near period must be >= 2")
        if p is None:
            best = None
            for cand in range(1, q):
                if math.gcd(cand, q) != 1:
                    continue
                cf, _ = continued_fraction(Fraction(cand, q))
                key = (max(cf), sum(cf), cand)
                if best is None or key < best[0]:
                    best = (key, cand)
            p = best[1]
        x = Fraction(p, q) + sign * exp_neg_fraction(log_norm, bits=64) / q
        return cls.from_fraction(x)

    @property
    def num(self) -> int:
        return self.value.numerator

    @property
    def den(self) -> int:
        return self.value.denominator

    def __float__(self):
        return float(self.value)

    def convergent_denominators(self):
        return [q for _, q in self.convergents]

    def check_invariants(self):
        """Raise AssertionError if a structural invariant fails."""
        x = self.value
        assert math.gcd(self.num, self.den) == 1 and 0 < self.num < self.den
        assert tuple(convergents_from_coeffs(self.cf_coeffs)) == self.convergents
        convs = self.convergents
        for n, (p, q) in enumerate(convs):
            if n + 1 < len(convs):
                qn1 = convs[n + 1][1]
                err = abs(x - Fraction(p, q))
                if n + 2 < len(convs):
                    assert err < Fraction(1, q * qn1)
                else:
                    assert err <= Fraction(1, q * qn1)
            assert torus_norm(q * x) == abs(q * x - p) or q == 1
        return True

    def to_dict(self):
        return {
            "num": str(self.num),
            "den": str(self.den),
            "cf_coeffs": [str(a) for a in self.cf_coeffs],
            "resonances": [],
        }

    @classmethod
    def from_dict(cls, d):
        return cls.from_fraction(Fraction(int(d["num"]), int(d["den"])))


@dataclass(frozen=True)
class ResonanceSequence:
    entries: tuple  # ((k, strength), ...)
    threshold: float
    scan_range: int = 0

    @property
    def ks(self):
        return [k for k, _ in self.entries]

    @property
    def strengths(self):
        return [s for _, s in self.entries]

    def __len__(self):
        return len(self.entries)

    @cached_property
    def growth_constant(self):
        """Largest ``c`` with ``|K_i| >= c exp(c |K_{i-1}|)`` for all i."""
        ks = [abs(k) for k in self.ks]
        cs = [_lambert_c(a, b) for a, b in zip(ks, ks[1:]) if a > 0]
        return min(cs) if cs else None


@dataclass(frozen=True)
class Phase:
    value: Fraction
    resonances: ResonanceSequence | None = None
    delta_hat: float = 0.0
    excluded_flag: bool = False
    scan_range: int = 0
    delta_argmax: int = 0

    @classmethod
    def analyze(cls, theta, alpha: Frequency, K_max: int = 200, threshold: float | None = None, k_min: int = 10):
        """Scan ``theta`` and attach its resonance list.

        ``delta_hat`` is the larger of the dyadic-tail scan over
        ``K_max/2 <= |k| <= K_max`` and the strongest attached resonance, so
        it is a lower bound for the limsup over the scanned range.
        """
        theta = as_fraction(theta)
        theta = theta - math.floor(theta)
        scan = PhaseScan(alpha, theta, K_max)
        if scan.first_zero() is not None:
            return cls(theta, None, 0.0, True, K_max, 0)
        est, kmax = scan.delta_estimate(K_max, _tail_start(K_max))
        res = None
        if threshold is not None:
            res = scan.resonances(threshold, K_max, k_min)
            for k, s in res.entries:
                if s > est:
                    est, kmax = s, k
        return cls(theta, res, max(est, 0.0), False, K_max, kmax)

    def shifted(self, alpha: Frequency, k: int, K_max: int | None = None, threshold: float | None = None):
        """Phase ``theta + k alpha`` (mod 1), re-analyzed."""
        th = self.value + k * alpha.value
        thr = threshold if threshold is not None else (self.resonances.threshold if self.resonances else None)
        return Phase.analyze(th, alpha, K_max or self.scan_range or 200, thr)

    def __float__(self):
        return float(self.value)

    def to_dict(self):
        coeffs = continued_fraction(self.value)[0] if 0 < self.value < 1 else []
        res = self.resonances.entries if self.resonances else ()
        return {
            "num": str(self.value.numerator),
            "den": str(self.value.denominator),
            "cf_coeffs": [str(a) for a in coeffs],
            "resonances": [{"k": str(k), "strength": s} for k, s in res],
            "delta_hat": self.delta_hat,
            "delta_hat_is_lower_bound_over": self.scan_range,
            "excluded_flag": self.excluded_flag,
            "threshold": self.resonances.threshold if self.resonances else None,
        }

    @classmethod
    def from_dict(cls, d, alpha: Frequency | None = None):
        theta = Fraction(int(d["num"]), int(d["den"]))
        if alpha is not None:
            return cls.analyze(theta, alpha, int(d.get("delta_hat_is_lower_bound_over") or 200), d.get("threshold"))
        entries = tuple((int(r["k"]), float(r["strength"])) for r in d.get("resonances", []))
        res = ResonanceSequence(entries, d.get("threshold") or 0.0) if entries else None
        return cls(theta, res, float(d.get("delta_hat", 0.0)), bool(d.get("excluded_flag", False)))


def dumps(obj) -> str:
    return json.dumps(obj.to_dict(), indent=2)


# --------------------------------------------------------------------------
# exact scans of ||2 theta + x alpha||


class PhaseScan:
    """Exact numerators of ``||2 theta + x alpha||`` for ``|x| <= radius``.

    All norms share one denominator, so comparisons are integer comparisons.
    Also keeps the running minimizer ``x0(r)`` over ``|x| <= r`` (ties: smaller
    ``|x|``, then positive ``x``).
    """

    def __init__(self, alpha: Frequency, theta, radius: int, twice: bool = True):
        alpha_f = alpha.value if isinstance(alpha, Frequency) else as_fraction(alpha)
        theta_f = as_fraction(theta.value if isinstance(theta, Phase) else theta)
        base = 2 * theta_f if twice else theta_f
        self.radius = int(radius)
        self.den = math.lcm(base.denominator, alpha_f.denominator)
        b = base.numerator * (self.den // base.denominator)
        a = alpha_f.numerator * (self.den // alpha_f.denominator)
        D = self.den
        R = self.radius
        nums = []
        for x in range(-R, R + 1):
            r = (b + x * a) % D
            nums.append(min(r, D - r))
        self._nums = nums  # index x + R
        self._signed = None
        self._b, self._a = b, a

    def num(self, x: int) -> int:
        return self._nums[x + self.radius]

    def norm(self, x: int) -> Fraction:
        return Fraction(self.num(x), self.den)

    def log_norm(self, x: int) -> float:
        n = self.num(x)
        return -math.inf if n == 0 else log_ratio(n, self.den)

    def log_sin(self, x: int) -> float:
        n = self.num(x)
        return -math.inf if n == 0 else _log_sin_pi_from_norm(n, self.den)

    def signed_residue(self, x: int) -> Fraction:
        """Representative of ``2 theta + x alpha`` in ``(-1/2, 1/2]``."""
        D = self.den
        r = (self._b + x * self._a) % D
        if 2 * r > D:
            r -= D
        return Fraction(r, D)

    def first_zero(self, K_max: int | None = None):
        K = self.radius if K_max is None else K_max
        for m in range(0, K + 1):
            for x in ((m, -m) if m else (0,)):
                if self.num(x) == 0:
                    return x
        return None

    def strength(self, k: int) -> float:
        return -self.log_norm(k) / abs(k)

    def delta_estimate(self, K_max: int, k_min: int = 1):
        """max over k_min <= |k| <= K_max of ``-ln||2theta + k alpha|| / |k|``."""
        best, arg = -math.inf, 0
        for m in range(max(k_min, 1), K_max + 1):
            for k in (m, -m):
                if self.num(k) == 0:
                    raise DegeneratePhaseError(k)
                s = self.strength(k)
                if s > best:
                    best, arg = s, k
        return best, arg

    def resonances(self, threshold: float, K_max: int, k_min: int = 1) -> ResonanceSequence:
        entries = []
        for m in range(max(k_min, 1), K_max + 1):
            for k in (m, -m):
                if self.num(k) == 0:
                    raise DegeneratePhaseError(k)
                s = self.strength(k)
                if s >= threshold:
                    entries.append((k, s))
        return ResonanceSequence(tuple(entries), float(threshold), K_max)

    @cached_property
    def _running_min(self):
        """``best[r]`` = minimizer over ``|x| <= r``."""
        best = [0]
        cur = 0
        for r in range(1, self.radius + 1):
            for x in (r, -r):
                if self.num(x) < self.num(cur):
                    cur = x
            best.append(cur)
        return best

    def x0(self, ell: int) -> int:
        r = 2 * abs(ell)
        if r > self.radius:
            raise InvalidArgument(f"scan radius {self.radius} too small for ell={ell}")
        return self._running_min[r]

    def x0_eta(self, ell: int):
        if ell == 0:
            raise InvalidArgument("ell must be nonzero")
        x0 = self.x0(ell)
        if self.num(x0) == 0:
            return x0, 0.0, True
        return x0, -self.log_sin(x0) / abs(ell), False


# --------------------------------------------------------------------------
# public operations


def _frequency(alpha) -> Frequency:
    return alpha if isinstance(alpha, Frequency) else Frequency.from_fraction(alpha)


def _theta_value(theta):
    if theta is None:
        return None
    return theta.value if isinstance(theta, Phase) else as_fraction(theta)


def _tail_start(K_max: int) -> int:
    return (K_max + 1) // 2


def resonance_exponent(mode: str, alpha, theta=None, K_max: int = 100, k_min: int | None = None):
    """Finite-scan estimate of ``beta(alpha)`` or ``delta(alpha, theta)``.

    Returns ``(estimate, argmax_k)``, the max of ``-ln||k alpha||/|k|`` (beta)
    or ``-ln||2theta + k alpha||/|k|`` (delta) over ``k_min <= |k| <= K_max``.
    The default ``k_min = ceil(K_max/2)`` keeps only the dyadic tail, since
    small offsets always look resonant (``||x|| <= 1/2``).  Read the result
    as a lower bound on the limsup over the scanned range.
    """
    if K_max < 1:
        raise InvalidArgument("K_max must be >= 1")
    if k_min is None:
        k_min = _tail_start(K_max)
    alpha = _frequency(alpha)
    if mode == "delta":
        if theta is None:
            raise InvalidArgument("mode='delta' needs a phase")
        scan = PhaseScan(alpha, _theta_value(theta), K_max)
        return scan.delta_estimate(K_max, k_min)
    if mode != "beta":
        raise InvalidArgument(f"unknown mode {mode!r}")
    p, q = alpha.num, alpha.den
    best, arg = -math.inf, 0
    for k in range(max(k_min, 1), K_max + 1):
        r = (k * p) % q
        n = min(r, q - r)
        if n == 0:
            raise InvalidArgument(f"K_max={K_max} reaches the denominator of alpha (k={k})")
        s = -log_ratio(n, q) / k
        if s > best:
            best, arg = s, k
    return best, arg


def find_resonances(alpha, theta, threshold: float, K_max: int, k_min: int = 10) -> ResonanceSequence:
    """All ``k`` with ``||2theta + k alpha|| <= exp(-threshold |k|)``, by ``|k|``.

    Offsets below ``k_min`` are skipped: there the bound ``||x|| <= 1/2``
    and short near-returns of the rotation make every phase look resonant.
    """
    if threshold <= 0:
        raise InvalidArgument("threshold must be > 0")
    scan = PhaseScan(_frequency(alpha), _theta_value(theta), K_max)
    return scan.resonances(threshold, K_max, k_min)


def locate_x0_eta(alpha, theta, ell: int):
    """Minimizer ``x0`` of ``|sin pi(2theta + x alpha)|`` over ``|x| <= 2|ell|``.

    Returns ``(x0, eta, integer_hit)`` where ``|sin pi(2theta + x0 alpha)| =
    exp(-eta |ell|)``; ``eta = 0`` and ``integer_hit = True`` when the
    argument is an integer.
    """
    if ell == 0:
        raise InvalidArgument("ell must be nonzero")
    scan = PhaseScan(_frequency(alpha), _theta_value(theta), 2 * abs(ell))
    return scan.x0_eta(ell)


def ln_sin_sum(x, alpha, q_n: int):
    """``sum_{k != k0} ln|sin pi(x + k alpha)| + (q_n - 1) ln 2`` over ``0 <= k < q_n``.

    ``k0`` is the minimizer of ``|sin pi(x + k alpha)|``.  Returns
    ``(sum_value, k0)``.
    """
    alpha = _frequency(alpha)
    if q_n not in alpha.convergent_denominators():
        raise InvalidArgument(f"{q_n} is not a stored convergent denominator")
    x = as_fraction(x)
    a, b = x.numerator, x.denominator
    p, q = alpha.num, alpha.den
    D = b * q
    base = a * q
    step = p * b
    nums = []
    for k in range(q_n):
        r = (base + k * step) % D
        n = min(r, D - r)
        if n == 0:
            raise DegenerateArgumentError(k)
        nums.append(n)
    k0 = min(range(q_n), key=nums.__getitem__)
    total = 0.0
    y = np.array([n / D for n in nums])
    logs = np.log(np.sin(np.pi * y))
    small = y < 1e-4
    if small.any():
        for i in np.nonzero(small)[0]:
            logs[i] = _log_sin_pi_from_norm(nums[i], D)
    logs[k0] = 0.0
    total = float(math.fsum(logs))
    return total + (q_n - 1) * LN2, k0


def _signed(fr: Fraction) -> Fraction:
    r = fr - math.floor(fr)
    return r - 1 if r > Fraction(1, 2) else r


def construct_phase(alpha, delta_target: float, K_list, K_max: int | None = None, threshold: float | None = None) -> Phase:
    """Phase with prescribed resonances ``||2theta + K_i alpha|| ~ exp(-delta K_i)``.

    Greedy nested construction, smallest ``K`` first: every new resonance is
    placed by a correction to ``2 theta`` that must leave the earlier
    strengths within 10 %.  An empty ``K_list`` yields a non-resonant phase.
    """
    alpha = _frequency(alpha)
    if not delta_target > 0:
        raise InvalidArgument("delta_target must be > 0")
    K_list = [int(k) for k in K_list]
    if any(k <= 0 for k in K_list) or any(b <= a for a, b in zip(K_list, K_list[1:])):
        raise InvalidArgument("K_list must be increasing positive integers")
    if K_max is None:
        K_max = max([200] + [2 * k for k in K_list])
    if threshold is None:
        threshold = 0.9 * delta_target
    if not K_list:
        return _nonresonant_phase(alpha, K_max, threshold)
    if alpha.den <= 20 * max(K_list):
        raise InvalidArgument("alpha's denominator must exceed 20*max(K_list)")
    for a, b in zip(K_list, K_list[1:]):
        if not math.exp(-delta_target * b) < 0.25 * math.exp(-delta_target * a) / b:
            raise InvalidArgument(f"gap between {a} and {b} too small for nesting")

    targets = [exp_neg_fraction(delta_target * k) for k in K_list]
    failure = None
    for sigma1 in (1, -1):
        twotheta = _signed(-K_list[0] * alpha.value + sigma1 * targets[0])
        ok = True
        for i in range(1, len(K_list)):
            r = _signed(twotheta + K_list[i] * alpha.value)
            c = min((s * targets[i] - r for s in (1, -1)), key=abs)
            for j in range(i):
                new = torus_norm(twotheta + c + K_list[j] * alpha.value)
                if new == 0 or abs(-log_fraction(new) / K_list[j] - delta_target) > 0.1 * delta_target:
                    ok = False
                    failure = (K_list[j], K_list[i])
                    break
            if not ok:
                break
            twotheta = _signed(twotheta + c)
        if ok:
            break
    else:
        raise ConstructionFailed(failure)

    theta = (twotheta - math.floor(twotheta)) / 2
    phase = Phase.analyze(theta, alpha, K_max, threshold, min(10, K_list[0]))
    found = dict(phase.resonances.entries) if phase.resonances else {}
    for k in K_list:
        if k not in found or abs(found[k] - delta_target) > 0.1 * delta_target:
            raise ConstructionFailed((k, k), f"resonance at {k} not realized at the requested strength")
    return phase


def _nonresonant_phase(alpha: Frequency, K_max: int, threshold: float) -> Phase:
    # phases spread by the plastic-number rotation; keep the flattest delta scan
    rho = 0.7548776662466927
    best = None
    for j in range(1, 257):
        frac = (j * rho) % 1.0
        theta = Fraction(round(frac * 2**40), 2**40)
        scan = PhaseScan(alpha, theta, K_max)
        if scan.first_zero(K_max) is not None:
            continue
        est, _ = scan.delta_estimate(K_max, _tail_start(K_max))
        # second key: the closest return over the whole range
        key = (round(est, 3), -min(scan.num(k) for k in range(-K_max, K_max + 1)) / scan.den)
        if best is None or key < best[0]:
            best = (key, theta)
    return Phase.analyze(best[1], alpha, K_max, threshold)
