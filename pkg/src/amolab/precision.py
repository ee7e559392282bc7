"""Extended-precision scalars (mpmath) for energies, potentials and products."""
import math
from fractions import Fraction

import mpmath

DEFAULT_BITS = 256


def mpf_from_fraction(x: Fraction, prec: int = DEFAULT_BITS):
    with mpmath.workprec(prec):
        return mpmath.mpf(x.numerator) / x.denominator


def mp_potential(two_lambda, theta: Fraction, alpha: Fraction, sites, prec: int = DEFAULT_BITS, harmonics=None):
    """Site values ``two_lambda * v(theta + n alpha)`` at ``prec`` bits.

    ``v`` is ``cos 2 pi x`` unless ``harmonics`` (cosine coefficients
    ``c_1, c_2, ...``) is given.  Phases are reduced mod 1 exactly first.
    """
    out = []
    with mpmath.workprec(prec + 16):
        tl = mpmath.mpf(two_lambda) if not isinstance(two_lambda, Fraction) else mpf_from_fraction(two_lambda, prec + 16)
        two_pi = 2 * mpmath.pi
        for n in sites:
            x = theta + n * alpha
            x = x - math.floor(x)
            xm = mpmath.mpf(x.numerator) / x.denominator
            if harmonics is None:
                v = mpmath.cos(two_pi * xm)
            else:
                v = mpmath.fsum(c * mpmath.cos(two_pi * (j + 1) * xm) for j, c in enumerate(harmonics))
            out.append(+(tl * v))
    return out


def mp_sturm_count(V, E, prec: int = DEFAULT_BITS) -> int:
    """Eigenvalues of ``tridiag(1, V, 1)`` strictly below ``E``."""
    count = 0
    with mpmath.workprec(prec):
        E = mpmath.mpf(E)
        tiny = mpmath.mpf(2) ** (-prec - 64)
        q = None
        for v in V:
            q = (v - E) if q is None else (v - E) - 1 / q
            if q == 0:
                q = -tiny
            if q < 0:
                count += 1
    return count


def mp_bisect_eigenvalue(V, index: int, lo, hi, tol, prec: int = DEFAULT_BITS):
    """Shrink ``[lo, hi]`` around eigenvalue number ``index`` (0-based).

    Requires ``count(lo) <= index < count(hi)``.  Returns ``(lo, hi)``.
    """
    with mpmath.workprec(prec):
        lo = mpmath.mpf(lo)
        hi = mpmath.mpf(hi)
        tol = mpmath.mpf(tol)
        while hi - lo > tol:
            mid = (lo + hi) / 2
            if mid == lo or mid == hi:
                break
            if mp_sturm_count(V, mid, prec) > index:
                hi = mid
            else:
                lo = mid
    return lo, hi


def mp_transfer(V, E, prec: int):
    """Unnormalized product ``A(V[n-1]) ... A(V[0])`` at ``prec`` bits."""
    with mpmath.workprec(prec):
        E = mpmath.mpf(E)
        a, b, c, d = mpmath.mpf(1), mpmath.mpf(0), mpmath.mpf(0), mpmath.mpf(1)
        for v in V:
            t = E - v
            a, b, c, d = t * a - c, t * b - d, a, b
        return a, b, c, d


def bits_for_scale(log_scale: float, base_bits: int = 64) -> int:
    """Working precision that keeps ``det`` of a product with that growth exact.

    The determinant cancels two terms of size ``e^{2 s}`` down to 1, so we
    need about ``2 s / ln 2`` extra bits plus headroom.
    """
    return int(base_bits + 3 * max(log_scale, 0.0) / math.log(2)) + 32


def mp_log_det_defect(V, E, log_scale: float, prec: int | None = None) -> float:
    """``|ln det|`` of the exact-arithmetic product (0 for a unimodular cocycle)."""
    if prec is None:
        prec = bits_for_scale(log_scale)
    with mpmath.workprec(prec):
        a, b, c, d = mp_transfer(V, E, prec)
        det = a * d - b * c
        return float(abs(mpmath.log(abs(det))))


def mp_tridiag_solve(V, E, b, prec: int = DEFAULT_BITS):
    """Solve ``(tridiag(1, V, 1) - E) x = b`` by unpivoted elimination.

    Zero pivots are nudged to a tiny value, which is harmless for inverse
    iteration (it only rescales the dominant direction).
    """
    n = len(V)
    with mpmath.workprec(prec):
        tiny = mpmath.mpf(2) ** (-prec - 64)
        q = [None] * n
        y = [None] * n
        for i in range(n):
            d = V[i] - E
            if i == 0:
                q[i], y[i] = d, mpmath.mpf(b[i])
            else:
                q[i] = d - 1 / q[i - 1]
                y[i] = b[i] - y[i - 1] / q[i - 1]
            if q[i] == 0:
                q[i] = tiny
        x = [None] * n
        x[-1] = y[-1] / q[-1]
        for i in range(n - 2, -1, -1):
            x[i] = (y[i] - x[i + 1]) / q[i]
        return x


def mp_inverse_iteration(V, E, prec: int = DEFAULT_BITS, steps: int = 3):
    """Eigenvector of ``tridiag(1, V, 1)`` nearest ``E`` with Rayleigh updates.

    Returns ``(x, E)`` with ``x`` max-normalized (list of mpf).
    """
    n = len(V)
    with mpmath.workprec(prec):
        E = mpmath.mpf(E)
        # deterministic, non-symmetric start vector
        x = [mpmath.mpf(1) + mpmath.mpf(i % 7) / 11 for i in range(n)]
        for s in range(steps):
            x = mp_tridiag_solve(V, E, x, prec)
            m = max(abs(t) for t in x)
            x = [t / m for t in x]
            if s >= 1:
                Hx = [V[i] * x[i] + (x[i - 1] if i > 0 else 0) + (x[i + 1] if i < n - 1 else 0) for i in range(n)]
                E = mpmath.fsum(a * c for a, c in zip(x, Hx)) / mpmath.fsum(t * t for t in x)
        return x, E


def mp_shoot_logs(V, E, prec: int = DEFAULT_BITS):
    """Solve ``phi(n+1) = (E - V[n]) phi(n) - phi(n-1)`` from ``phi(-1)=0, phi(0)=1``.

    Returns float arrays ``(sign, log|phi|)`` for ``phi(0) .. phi(len(V))``;
    the running value is rescaled so only the log leaves mp.
    """
    n = len(V)
    sign = [0] * (n + 1)
    logs = [0.0] * (n + 1)
    with mpmath.workprec(prec):
        E = mpmath.mpf(E)
        prev, cur = mpmath.mpf(0), mpmath.mpf(1)
        scale = 0.0
        big = mpmath.mpf(2) ** 64
        for k in range(n + 1):
            if cur == 0:
                sign[k], logs[k] = 0, -math.inf
            else:
                sign[k] = 1 if cur > 0 else -1
                logs[k] = float(mpmath.log(abs(cur))) + scale
            if k == n:
                break
            prev, cur = cur, (E - V[k]) * cur - prev
            m = max(abs(prev), abs(cur))
            if m > big or m < 1 / big:
                prev, cur = prev / m, cur / m
                scale += float(mpmath.log(m))
    return sign, logs
