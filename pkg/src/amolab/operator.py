"""The almost Mathieu operator: potential, transfer cocycle, determinants, Green's functions.

Conventions
-----------
Site term ``V(n) = 2 lambda cos 2 pi (theta + n alpha)`` (``potential_kind="cosine"``),
so the Lyapunov exponent on the spectrum is ``ln lambda``.  The one-step
matrix is ``A(n) = [[E - V(n), -1], [1, 0]]`` acting on ``U(n) = (phi(n), phi(n-1))``
and ``A_k(theta) = A(k-1) ... A(0)``, ``A_0 = I``,
``A_{-k}(theta) = A_k(theta - k alpha)^{-1}``.

``P_k(theta) = det(E - H)`` restricted to ``[0, k-1]``, so that
``A_k = [[P_k(theta), -P_{k-1}(theta+alpha)], [P_{k-1}(theta), -P_{k-2}(theta+alpha)]]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np

from . import kernels, precision
from .arithmetic import Frequency, Phase, as_fraction
from .errors import (
    BoxSingularError,
    DegenerateSetError,
    InvalidArgument,
    UnverifiedHypothesis,
)

POTENTIAL_KINDS = ("cosine", "double", "zero", "trig")


@dataclass(frozen=True)
class OperatorParams:
    """Parameters of ``H = Delta + V``.

    ``potential_kind``:
      ``cosine``  site term ``2 lambda cos 2 pi x`` (default);
      ``double``  site term ``4 lambda cos 2 pi x``;
      ``zero``    free Laplacian;
      ``trig``    ``2 lambda sum_j c_j cos 2 pi j x`` with ``harmonics = (c_1, c_2, ...)``.
    """

    ln_lambda: float
    alpha: Frequency
    theta: Fraction
    E: object = 0.0
    potential_kind: str = "cosine"
    harmonics: tuple = ()
    precision_bits: int = precision.DEFAULT_BITS

    def __post_init__(self):
        if self.potential_kind not in POTENTIAL_KINDS:
            raise InvalidArgument(f"potential_kind must be one of {POTENTIAL_KINDS}")
        if isinstance(self.theta, Phase):
            object.__setattr__(self, "theta", self.theta.value)
        elif not isinstance(self.theta, Fraction):
            object.__setattr__(self, "theta", as_fraction(self.theta))
        if not isinstance(self.alpha, Frequency):
            object.__setattr__(self, "alpha", Frequency.from_fraction(self.alpha))
        if self.potential_kind == "trig" and not self.harmonics:
            raise InvalidArgument("trig potential needs harmonics")
        object.__setattr__(self, "harmonics", tuple(float(c) for c in self.harmonics))

    @property
    def lam(self) -> float:
        return math.exp(self.ln_lambda)

    @property
    def E_float(self) -> float:
        return float(self.E)

    @property
    def E_mp(self):
        with mpmath.workprec(self.precision_bits):
            return mpmath.mpf(self.E) if not isinstance(self.E, Fraction) else precision.mpf_from_fraction(self.E, self.precision_bits)

    def with_energy(self, E):
        return replace(self, E=E)

    def shifted(self, k: int):
        """Same operator seen from site ``k`` (``theta -> theta + k alpha``)."""
        th = self.theta + k * self.alpha.value
        return replace(self, theta=th - math.floor(th))

    @property
    def _coeffs(self):
        if self.potential_kind == "zero":
            return ()
        if self.potential_kind == "trig":
            return self.harmonics
        return (1.0,)

    @property
    def _amplitude(self) -> float:
        if self.potential_kind == "double":
            return 4.0 * self.lam
        return 2.0 * self.lam


@lru_cache(maxsize=256)
def _phases(theta: Fraction, alpha: Fraction, n0: int, n: int) -> np.ndarray:
    # theta + m alpha reduced mod 1 exactly, as floats in [0, 1)
    D = math.lcm(theta.denominator, alpha.denominator)
    a = theta.numerator * (D // theta.denominator)
    p = alpha.numerator * (D // alpha.denominator)
    out = np.empty(n)
    r = (a + n0 * p) % D
    for i in range(n):
        out[i] = r / D
        r = (r + p) % D
    return out


def potential_array(params: OperatorParams, n0: int, n: int) -> np.ndarray:
    """Float64 site values ``V(n0), ..., V(n0 + n - 1)``."""
    if n <= 0:
        return np.empty(0)
    x = _phases(params.theta, params.alpha.value, int(n0), int(n))
    coeffs = params._coeffs
    if not coeffs:
        return np.zeros(n)
    v = np.zeros(n)
    for j, c in enumerate(coeffs, start=1):
        v += c * np.cos(2.0 * np.pi * ((j * x) % 1.0))
    return params._amplitude * v


def potential_value(params: OperatorParams, n: int) -> float:
    """Site term ``V(n)``."""
    return float(potential_array(params, n, 1)[0])


def potential_mp(params: OperatorParams, n0: int, n: int, prec: int | None = None):
    """Extended-precision site values (list of mpf)."""
    prec = prec or params.precision_bits
    if params.potential_kind == "zero":
        with mpmath.workprec(prec):
            return [mpmath.mpf(0)] * n
    harm = None if params.potential_kind in ("cosine", "double") else params.harmonics
    return precision.mp_potential(params._amplitude, params.theta, params.alpha.value, range(n0, n0 + n), prec, harm)


# --------------------------------------------------------------------------
# log-scaled 2x2 matrices and 2-vectors


@dataclass(frozen=True)
class LogMat2:
    """``exp(log_scale) * m`` with ``max|m_ij| = 1``."""

    m: np.ndarray
    log_scale: float

    @classmethod
    def identity(cls):
        return cls(np.eye(2), 0.0)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        mx = np.max(np.abs(a))
        return cls(a / mx, math.log(mx))

    def __matmul__(self, other: "LogMat2") -> "LogMat2":
        p = self.m @ other.m
        mx = np.max(np.abs(p))
        return LogMat2(p / mx, self.log_scale + other.log_scale + math.log(mx))

    def inverse(self) -> "LogMat2":
        """Inverse of a unimodular matrix: the adjugate, same scale."""
        a, b, c, d = self.m.ravel()
        return LogMat2(np.array([[d, -b], [-c, a]]), self.log_scale)

    def log_norm(self) -> float:
        a, b, c, d = self.m.ravel()
        return self.log_scale + math.log(kernels.norm2x2(a, b, c, d))

    def entry(self, i: int, j: int):
        """``(sign, log|entry|)``."""
        v = self.m[i, j]
        if v == 0:
            return 0, -math.inf
        return (1 if v > 0 else -1), self.log_scale + math.log(abs(v))

    def to_array(self) -> np.ndarray:
        return self.m * math.exp(self.log_scale)

    def det_defect(self) -> float:
        """``|2 log_scale + ln det(m)|``; meaningful only while ``log_scale`` is small."""
        det = float(np.linalg.det(self.m))
        if det <= 0:
            return math.inf
        return abs(2 * self.log_scale + math.log(det))

    def apply(self, v: "LogVec2") -> "LogVec2":
        w = self.m @ v.v
        return LogVec2.normalized(w, self.log_scale + v.log_scale)

    def close_to(self, other: "LogMat2", rtol: float = 1e-8) -> bool:
        """Agreement of the represented matrices relative to their size."""
        if abs(self.log_scale - other.log_scale) > 50:
            return False
        diff = self.m - other.m * math.exp(other.log_scale - self.log_scale)
        return float(np.max(np.abs(diff))) <= rtol * max(1.0, float(np.max(np.abs(self.m))))


@dataclass(frozen=True)
class LogVec2:
    """``exp(log_scale) * v`` with ``||v|| = 1``."""

    v: np.ndarray
    log_scale: float

    @classmethod
    def normalized(cls, w, log_scale: float = 0.0):
        w = np.asarray(w, dtype=float)
        nrm = float(np.hypot(w[0], w[1]))
        if nrm == 0:
            raise InvalidArgument("zero vector")
        return cls(w / nrm, log_scale + math.log(nrm))

    def log_norm(self) -> float:
        return self.log_scale


def _check_E(params):
    return params.E_float


def transfer_product(params: OperatorParams, k: int, m: int = 0) -> LogMat2:
    """``A_k(theta + m alpha)`` as a LogMat2 (negative ``k`` by inversion)."""
    k = int(k)
    m = int(m)
    if k == 0:
        return LogMat2.identity()
    if k < 0:
        return transfer_product(params, -k, m + k).inverse()
    V = potential_array(params, m, k)
    mat, s = kernels.transfer_log(V, _check_E(params))
    return LogMat2(mat, s)


def transfer_log_norms(params: OperatorParams, N: int):
    """``log||A_l||`` for ``l = -N..N`` (index ``l + N``)."""
    E = _check_E(params)
    out = np.zeros(2 * N + 1)
    out[N + 1:] = kernels.cumulative_log_norms(potential_array(params, 0, N), E, False)
    # A_{-l}(theta) = (A(-1) A(-2) ... A(-l))^{-1}, same norm as the product
    Vl = potential_array(params, -N, N)[::-1].copy()
    out[:N][::-1] = kernels.cumulative_log_norms(Vl, E, True)
    return out


def transfer_product_mp(params: OperatorParams, k: int, m: int = 0, prec: int | None = None):
    """``A_k(theta + m alpha)`` as a 2x2 ``mpmath.matrix`` at ``prec`` bits.

    Use for compositions whose factors cancel (mixed-sign indices): the
    float path cannot resolve a product much smaller than its factors.
    """
    k, m = int(k), int(m)
    prec = prec or params.precision_bits
    with mpmath.workprec(prec):
        if k == 0:
            return mpmath.eye(2)
        if k < 0:
            a, b, c, d = _mp_entries(params, -k, m + k, prec)
            return mpmath.matrix([[d, -b], [-c, a]])
        a, b, c, d = _mp_entries(params, k, m, prec)
        return mpmath.matrix([[a, b], [c, d]])


def _mp_entries(params, k, m, prec):
    V = potential_mp(params, m, k, prec)
    with mpmath.workprec(prec):
        E = mpmath.mpf(params.E_mp)
    return precision.mp_transfer(V, E, prec)


def logmat_from_mp(M) -> LogMat2:
    mx = max(abs(M[i, j]) for i in range(2) for j in range(2))
    ls = float(mpmath.log(mx))
    return LogMat2(np.array([[float(M[i, j] / mx) for j in range(2)] for i in range(2)]), ls)


def det_check_exact(params: OperatorParams, k: int, m: int = 0) -> float:
    """``|ln det A_k|`` evaluated in exact-enough arithmetic."""
    V = potential_mp(params, m, k)
    mat = transfer_product(params, k, m)
    return precision.mp_log_det_defect(V, params.E_mp, mat.log_scale)


# --------------------------------------------------------------------------
# determinants and Green's functions


def determinant_logs(params: OperatorParams, k_max: int, theta_shift: int = 0):
    """``(sign, log|P_k(theta + shift alpha)|)`` for ``k = 0..k_max``."""
    if k_max < 1:
        raise InvalidArgument("k_max must be >= 1")
    V = potential_array(params, theta_shift, k_max)
    return kernels.determinant_log_recursion(V, _check_E(params))


def _P(params, start: int, length: int):
    """Sign/log of ``P_length(theta + start alpha)``."""
    if length == 0:
        return 1, 0.0
    if length < 0:
        return 0, -math.inf
    s, l = kernels.determinant_log_recursion(potential_array(params, start, length), _check_E(params))
    return int(s[-1]), float(l[-1])


def green_entry(params: OperatorParams, x1: int, x2: int, y: int, side: str = "left"):
    """Entry of ``(H_[x1,x2] - E)^{-1}`` in ``(sign, log|G|)`` form.

    ``side="left"`` gives ``G(x1, y)``, ``side="right"`` gives ``G(y, x2)``.
    """
    if not (x1 <= y <= x2):
        raise InvalidArgument("need x1 <= y <= x2")
    k = x2 - x1 + 1
    sd, ld = _P(params, x1, k)
    if sd == 0:
        raise BoxSingularError(f"E is an eigenvalue of the box [{x1}, {x2}]")
    if side == "left":
        sn, ln_ = _P(params, y + 1, x2 - y)
    elif side == "right":
        sn, ln_ = _P(params, x1, y - x1)
    else:
        raise InvalidArgument("side must be 'left' or 'right'")
    if sn == 0:
        return 0, -math.inf
    return -sn * sd, ln_ - ld


def green_matrix_dense(params: OperatorParams, x1: int, x2: int) -> np.ndarray:
    """Dense ``(H_[x1,x2] - E)^{-1}`` (small boxes only)."""
    n = x2 - x1 + 1
    H = np.diag(potential_array(params, x1, n)) + np.eye(n, k=1) + np.eye(n, k=-1)
    return np.linalg.inv(H - params.E_float * np.eye(n))


def regularity_check(params: OperatorParams, y: int, tau: float, k: int):
    """Is ``y`` ``(tau, k)``-regular?

    Sweeps ``x1`` left to right over intervals ``[x1, x1 + k - 1]`` with
    both ends at least ``k/40`` from ``y`` and returns
    ``(True, (x1, x2))`` for the first one with
    ``|G(y, x_i)| < exp(-tau |y - x_i|)`` at both ends, else ``(False, None)``.
    """
    if not tau > 0:
        raise InvalidArgument("tau must be > 0")
    if k < 40:
        raise InvalidArgument("k must be >= 40")
    E = _check_E(params)
    gap = -(-k // 40)
    lo = y - k + 1 + gap
    hi = y - gap
    V = potential_array(params, lo, hi - lo + k)
    for x1 in range(lo, hi + 1):
        x2 = x1 + k - 1
        off = x1 - lo
        s, logs = kernels.determinant_log_recursion(V[off:off + k], E)
        if s[k] == 0:
            continue
        ld = logs[k]
        # G(y, x2) = -P_{y-x1}(x1) / P_k ; G(y, x1) = -P_{x2-y}(y+1) / P_k
        lr = logs[y - x1] - ld
        if not lr < -tau * (x2 - y):
            continue
        s2, logs2 = kernels.determinant_log_recursion(V[off + (y + 1 - x1):off + k], E)
        ll = logs2[x2 - y] - ld
        if ll < -tau * (y - x1):
            return True, (x1, x2)
    return False, None


# --------------------------------------------------------------------------
# uniformity of sampled phases


@dataclass(frozen=True)
class UniformityResult:
    epsilon: float  # max over x, i of (1/k) log Lagrange ratio
    index: int  # maximizing sample i
    x: float  # maximizing x
    grid_epsilon: float  # same max restricted to the Chebyshev grid (<= epsilon)

    def __iter__(self):
        return iter((self.epsilon, (self.index, self.x)))


def _cos_distinct(thetas):
    # cos 2 pi a = cos 2 pi b  iff  a = +-b mod 1
    seen = {}
    for i, t in enumerate(thetas):
        r = t - math.floor(t)
        key = min(r, (1 - r) % 1)
        if key in seen:
            raise DegenerateSetError((seen[key], i))
        seen[key] = i


def uniformity_product(theta_samples, x_grid_size: int = 1000) -> UniformityResult:
    """Smallest ``eps`` for which the sampled phases are ``eps``-uniform.

    Evaluates ``max_x max_i (1/k) sum_{j != i} [ln|x - c_j| - ln|c_i - c_j|]``
    over ``x`` in ``[-1, 1]`` with ``c_j = cos 2 pi theta_j`` and
    ``k = len(theta_samples) - 1``.  The maximum over ``x`` is exact (one
    concave piece between consecutive nodes); a Chebyshev grid of
    ``x_grid_size`` points is evaluated as a cross-check.
    """
    thetas = [as_fraction(t) for t in theta_samples]
    if len(thetas) < 2:
        raise InvalidArgument("need at least two samples")
    if x_grid_size < 1000:
        raise InvalidArgument("x_grid_size must be >= 1000")
    _cos_distinct(thetas)
    c = np.array([math.cos(2 * math.pi * float(t - math.floor(t))) for t in thetas])
    order = np.argsort(c)
    cs = c[order]
    k = len(cs) - 1
    grid = np.cos(np.pi * (np.arange(x_grid_size) + 0.5) / x_grid_size)
    grid = np.concatenate(([-1.0], grid, [1.0]))
    best = (-math.inf, 0, 0.0)
    grid_best = -math.inf
    for ii in range(len(cs)):
        others = np.delete(cs, ii)
        denom = float(np.sum(np.log(np.abs(cs[ii] - others))))
        val, x = kernels.lagrange_log_max(cs, ii, -1.0, 1.0)
        val = (val - denom) / k
        if val > best[0]:
            best = (val, int(order[ii]), float(x))
        with np.errstate(divide="ignore"):
            g = np.sum(np.log(np.abs(grid[:, None] - others[None, :])), axis=1)
        grid_best = max(grid_best, (float(np.max(g)) - denom) / k)
    return UniformityResult(best[0], best[1], best[2], grid_best)


# --------------------------------------------------------------------------
# block expansion bound


@dataclass
class BlockBoundResult:
    holds: bool
    margin: float
    checked: tuple  # (first, last) site checked
    worst_site: int

    def __iter__(self):
        return iter((self.holds, self.margin))


def block_bound_check(profile, y1: int, y2: int, tau: float, gamma: float, params: OperatorParams | None = None, assume_regular: bool = False):
    """Check ``r_y <= max_i r_{y_i} exp(-tau (|y - y_i| - 3 gamma k))`` on the block interior.

    ``r_y = max_{|s| <= 10 gamma k} |phi(y + s)|`` and ``k = y2 - y1``.  The
    regularity hypothesis on ``[y1 + gamma k, y2 - gamma k]`` is verified
    with ``params`` unless ``assume_regular`` is set.
    """
    k = y2 - y1
    if k < 100:
        raise InvalidArgument("block length y2 - y1 must be >= 100")
    if not (0 < gamma < 0.05):
        raise InvalidArgument("gamma must lie in (0, 0.05)")
    if not assume_regular:
        if params is None:
            raise UnverifiedHypothesis("regularity of the block interior not established (no operator given)")
        gk = gamma * k
        for y in range(int(math.ceil(y1 + gk)), int(math.floor(y2 - gk)) + 1):
            half = min(y - y1, y2 - y) // 2
            ok = False
            for k1 in sorted({40, max(40, half)}):
                if k1 <= gk / 20:
                    continue
                ok, _ = regularity_check(params, y, tau, k1)
                if ok:
                    break
            if not ok:
                raise UnverifiedHypothesis(f"site {y} is not ({tau}, k1)-regular")
    w = int(round(10 * gamma * k))
    logphi = profile.log_phi_at

    def r(y):
        return max(logphi(y + s) for s in range(-w, w + 1))

    r1, r2 = r(y1), r(y2)
    lo, hi = int(math.ceil(y1 + 10 * gamma * k)), int(math.floor(y2 - 10 * gamma * k))
    margin = math.inf
    worst = lo
    for y in range(lo, hi + 1):
        bound = max(r1 - tau * (abs(y - y1) - 3 * gamma * k), r2 - tau * (abs(y - y2) - 3 * gamma * k))
        slack = bound - r(y)
        if slack < margin:
            margin, worst = slack, y
    return BlockBoundResult(margin >= 0, margin, (lo, hi), worst)
