"""Hot loops: transfer products, Sturm counts, determinant and solution recursions.

Every kernel works on a precomputed float64 potential array ``V`` and
renormalizes at every step, so magnitudes are carried as
``(sign, log|.|)`` with no overflow.  Compiled with numba when available.
"""
import math

import numpy as np

from ._accel import jit

# rescale thresholds for the scalar recursions
_BIG = 1e150
_SMALL = 1e-150


@jit
def transfer_log(V, E):
    """Product ``A(V[n-1]) ... A(V[0])`` as ``(m, log_scale)``.

    ``A(v) = [[E - v, -1], [1, 0]]``; ``m`` has max-abs entry 1.
    """
    a, b, c, d = 1.0, 0.0, 0.0, 1.0
    s = 0.0
    for i in range(V.shape[0]):
        t = E - V[i]
        # [[t, -1], [1, 0]] @ [[a, b], [c, d]]
        a, b, c, d = t * a - c, t * b - d, a, b
        mx = max(abs(a), abs(b), abs(c), abs(d))
        a /= mx
        b /= mx
        c /= mx
        d /= mx
        s += math.log(mx)
    m = np.empty((2, 2))
    m[0, 0] = a
    m[0, 1] = b
    m[1, 0] = c
    m[1, 1] = d
    return m, s


@jit
def norm2x2(a, b, c, d):
    """Spectral norm of a real 2x2 matrix (cancellation-free form)."""
    return 0.5 * (math.hypot(a + d, b - c) + math.hypot(a - d, b + c))


@jit
def cumulative_log_norms(V, E, leftward):
    """``log||A_k||`` for k = 1..n.

    ``leftward=False``: ``A_k = A(V[k-1]) ... A(V[0])`` (left multiplication).
    ``leftward=True``: ``A_k = A(V[0]) ... A(V[k-1])`` (right multiplication),
    which is the matrix whose inverse is the negative-index product.
    """
    n = V.shape[0]
    out = np.empty(n)
    a, b, c, d = 1.0, 0.0, 0.0, 1.0
    s = 0.0
    for i in range(n):
        t = E - V[i]
        if leftward:
            # [[a, b], [c, d]] @ [[t, -1], [1, 0]]
            a, b, c, d = a * t + b, -a, c * t + d, -c
        else:
            a, b, c, d = t * a - c, t * b - d, a, b
        mx = max(abs(a), abs(b), abs(c), abs(d))
        a /= mx
        b /= mx
        c /= mx
        d /= mx
        s += math.log(mx)
        out[i] = s + math.log(norm2x2(a, b, c, d))
    return out


@jit
def sturm_count(V, E):
    """Number of eigenvalues of the Dirichlet box ``tridiag(1, V, 1)`` below ``E``."""
    count = 0
    q = 1.0
    for i in range(V.shape[0]):
        if i == 0:
            q = V[0] - E
        else:
            q = (V[i] - E) - 1.0 / q
        if q == 0.0:
            q = -1e-300
        if q < 0.0:
            count += 1
    return count


@jit
def determinant_log_recursion(V, E):
    """``P_k = det(E - H_[0,k-1])`` for k = 0..n in sign/log form.

    Recursion ``P_k = (E - V[k-1]) P_{k-1} - P_{k-2}``, ``P_0 = 1``,
    ``P_{-1} = 0``.  Returns ``(sign, logabs)`` of length n + 1; an exact
    zero has sign 0 and log ``-inf``.
    """
    n = V.shape[0]
    sign = np.empty(n + 1, dtype=np.int8)
    logs = np.empty(n + 1)
    sign[0] = 1
    logs[0] = 0.0
    prev, cur = 0.0, 1.0
    scale = 0.0
    for k in range(1, n + 1):
        nxt = (E - V[k - 1]) * cur - prev
        prev, cur = cur, nxt
        if cur == 0.0:
            sign[k] = 0
            logs[k] = -np.inf
        else:
            sign[k] = 1 if cur > 0 else -1
            logs[k] = math.log(abs(cur)) + scale
        mx = max(abs(prev), abs(cur))
        if mx > _BIG or (mx < _SMALL and mx > 0.0):
            prev /= mx
            cur /= mx
            scale += math.log(mx)
    return sign, logs


@jit
def propagate(V, E, p_prev, p_cur, log0):
    """Solve ``phi(n+1) = (E - V[n]) phi(n) - phi(n-1)`` forward.

    Sites are the array positions; ``phi(-1) = p_prev e^log0`` and
    ``phi(0) = p_cur e^log0``.  Returns ``(sign, logabs)`` for
    ``phi(0) .. phi(n)`` (length n + 1).
    """
    n = V.shape[0]
    sign = np.empty(n + 1, dtype=np.int8)
    logs = np.empty(n + 1)
    mx = max(abs(p_prev), abs(p_cur))
    prev = p_prev / mx
    cur = p_cur / mx
    scale = log0 + math.log(mx)
    for k in range(n + 1):
        if cur == 0.0:
            sign[k] = 0
            logs[k] = -np.inf
        else:
            sign[k] = 1 if cur > 0 else -1
            logs[k] = math.log(abs(cur)) + scale
        if k == n:
            break
        nxt = (E - V[k]) * cur - prev
        prev, cur = cur, nxt
        m = max(abs(prev), abs(cur))
        if m > 1e8 or m < 1e-8:
            prev /= m
            cur /= m
            scale += math.log(m)
    return sign, logs


@jit
def lagrange_log_max(c, i, lo, hi):
    """Max over ``x`` in ``[lo, hi]`` of ``sum_{j != i} ln|x - c_j|``.

    ``c`` must be sorted.  Between consecutive nodes the function is
    concave, so each piece has a single critical point, located by
    bisection on the (monotone) derivative.  Returns ``(value, x)``.
    """
    n = c.shape[0]
    # breakpoints: lo, nodes (j != i) inside (lo, hi), hi
    pts = np.empty(n + 2)
    m = 0
    pts[m] = lo
    m += 1
    for j in range(n):
        if j != i and c[j] > lo and c[j] < hi:
            pts[m] = c[j]
            m += 1
    pts[m] = hi
    m += 1
    best = -np.inf
    bestx = lo
    for s in range(m - 1):
        a = pts[s]
        b = pts[s + 1]
        if b <= a:
            continue
        # derivative: sum 1/(x - c_j); decreasing on (a, b)
        # endpoints that are nodes are excluded (value -inf there)
        xa = a
        xb = b
        for _ in range(200):
            mid = 0.5 * (xa + xb)
            if mid <= xa or mid >= xb:
                break
            g = 0.0
            for j in range(n):
                if j != i:
                    g += 1.0 / (mid - c[j])
            if g > 0.0:
                xa = mid
            else:
                xb = mid
        cands = (a, 0.5 * (xa + xb), b)
        for x in cands:
            v = 0.0
            for j in range(n):
                if j != i:
                    dx = abs(x - c[j])
                    if dx == 0.0:
                        v = -np.inf
                        break
                    v += math.log(dx)
            if v > best:
                best = v
                bestx = x
    return best, bestx


def all_kernels():
    return {
        "transfer_log": transfer_log,
        "cumulative_log_norms": cumulative_log_norms,
        "sturm_count": sturm_count,
        "determinant_log_recursion": determinant_log_recursion,
        "propagate": propagate,
        "lagrange_log_max": lagrange_log_max,
    }
