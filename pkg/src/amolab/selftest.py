"""Quick structural checks on small randomized instances (used by ``amolab selftest``)."""
from __future__ import annotations

import math
from fractions import Fraction

import mpmath
import numpy as np
from scipy.linalg import eigh_tridiagonal

from .arithmetic import Frequency, continued_fraction, torus_norm
from .eigensolve import BoxSpec, eigenvector_profile
from .operator import (OperatorParams, det_check_exact, determinant_logs, green_entry, green_matrix_dense, potential_array,
                       transfer_product, transfer_product_mp)
from .precision import bits_for_scale
from .sctest import wronskian_profile


def random_params(rng, E=None, ln_lambda=None) -> OperatorParams:
    alpha = Frequency.from_fraction(Fraction(int(rng.integers(1, 10**6)), 10**6 + 3))
    theta = Fraction(int(rng.integers(0, 2**30)), 2**30)
    L = float(rng.uniform(0.1, 1.5)) if ln_lambda is None else ln_lambda
    E = float(rng.uniform(-3, 3)) if E is None else E
    return OperatorParams(L, alpha, theta, E=E)


def _mp_rel_diff(A, B):
    num = max(abs(A[i, j] - B[i, j]) for i in range(2) for j in range(2))
    den = max(abs(A[i, j]) for i in range(2) for j in range(2))
    return float(num / den)


def check_cocycle(rng, n=20):
    worst = 0.0
    for _ in range(n):
        p = random_params(rng)
        k, m = (int(x) for x in rng.integers(-60, 61, size=2))
        s = transfer_product(p, k, m).log_scale + transfer_product(p, m, 0).log_scale
        prec = bits_for_scale(s)
        with mpmath.workprec(prec):
            lhs = transfer_product_mp(p, k + m, 0, prec)
            rhs = transfer_product_mp(p, k, m, prec) * transfer_product_mp(p, m, 0, prec)
            worst = max(worst, _mp_rel_diff(lhs, rhs))
    return worst <= 1e-8, f"max relative deviation {worst:.2e}"


def check_det(rng, n=20):
    worst = 0.0
    for _ in range(n):
        p = random_params(rng)
        k = int(rng.integers(1, 200))
        m = int(rng.integers(-50, 50))
        worst = max(worst, det_check_exact(p, k, m))
    return worst <= 1e-8, f"max |ln det| {worst:.2e}"


def check_entry_identity(rng, n=20):
    worst = 0.0
    for _ in range(n):
        p = random_params(rng)
        k = int(rng.integers(3, 80))
        A = transfer_product(p, k).to_array()
        s0, l0 = determinant_logs(p, k, 0)
        s1, l1 = determinant_logs(p, k, 1)
        with np.errstate(under="ignore"):
            P = lambda s, l, j: float(s[j]) * math.exp(l[j]) if j >= 0 else 0.0
            B = np.array([[P(s0, l0, k), -P(s1, l1, k - 1)], [P(s0, l0, k - 1), -P(s1, l1, k - 2)]])
        worst = max(worst, float(np.max(np.abs(A - B)) / np.max(np.abs(A))))
    return worst <= 1e-8, f"max relative deviation {worst:.2e}"


def check_wronskian(rng, n=10):
    worst = 0.0
    for _ in range(n):
        # short chain: the sign/log round trip costs ~|log| ulps, so keep products near O(e^10)
        p = random_params(rng, E=float(rng.uniform(-1.5, 1.5)), ln_lambda=float(rng.uniform(0.05, 0.3)))
        V = potential_array(p, 0, 8)
        E = p.E_float
        sols = []
        for a, b in ((0.0, 1.0), (1.0, 0.3)):
            u = [a, b]
            for j in range(1, 8):
                u.append((E - V[j]) * u[-1] - u[-2])
            sols.append(np.array(u))
        W = wronskian_profile(sols[0], sols[1]).linear()
        worst = max(worst, float(np.max(np.abs(W - W[0])) / abs(W[0])))
    return worst <= 1e-6, f"max relative drift {worst:.2e}"


def check_torus_norm(rng, n=200):
    for _ in range(n):
        x = Fraction(int(rng.integers(-10**9, 10**9)), int(rng.integers(1, 10**6)))
        t = torus_norm(x)
        r = x - math.floor(x)
        if t != min(r, 1 - r) or not (0 <= t <= Fraction(1, 2)):
            return False, f"mismatch at {x}"
    return True, f"{n} exact values"


def check_best_approximation(rng, n=20):
    for _ in range(n):
        x = Fraction(int(rng.integers(1, 10**6)), int(rng.integers(10**6 + 1, 2 * 10**6)))
        _, convs = continued_fraction(x)
        for (p, q), nxt in zip(convs, convs[1:]):
            if q < 2:
                continue
            best = min(torus_norm(j * x) for j in range(1, q))
            if torus_norm(q * x) >= best:
                return False, f"convergent {p}/{q} of {x} is not a best approximation"
            if nxt[1] > 2000:
                break
    return True, f"{n} expansions"


def check_green(rng, n=10):
    worst = 0.0
    for _ in range(n):
        p = random_params(rng)
        k = int(rng.integers(2, 13))
        x1 = int(rng.integers(-20, 20))
        G = green_matrix_dense(p, x1, x1 + k - 1)
        for y in range(x1, x1 + k):
            for side, ref in (("left", G[0, y - x1]), ("right", G[y - x1, k - 1])):
                s, l = green_entry(p, x1, x1 + k - 1, y, side)
                if abs(ref) < 1e-300:
                    continue
                worst = max(worst, abs(l - math.log(abs(ref))) + (0 if s == np.sign(ref) else 10))
    return worst <= 1e-8, f"max log deviation {worst:.2e}"


def check_eigenvector(rng, n=5):
    worst = 0.0
    for _ in range(n):
        p = random_params(rng, ln_lambda=float(rng.uniform(0.5, 1.2)))
        box = BoxSpec(-15, 15)
        V = potential_array(p, box.a, box.size)
        E, W = eigh_tridiagonal(V, np.ones(box.size - 1))
        i = int(rng.integers(0, box.size))
        prof = eigenvector_profile(p, box, E[i])
        v = prof.phi_linear()
        cs = abs(float(v @ W[:, i])) / float(np.linalg.norm(v))
        worst = max(worst, 1 - cs)
    return worst <= 1e-8, f"max 1 - cosine {worst:.2e}"


CHECKS = [("cocycle", check_cocycle), ("det_one", check_det), ("entry_identity", check_entry_identity),
          ("wronskian_constancy", check_wronskian), ("torus_norm", check_torus_norm),
          ("best_approximation", check_best_approximation), ("green_vs_dense", check_green),
          ("eigenvector_vs_dense", check_eigenvector)]


def run_all(seed: int = 0):
    out = []
    for name, fn in CHECKS:
        rng = np.random.default_rng([seed, len(name)])
        ok, detail = fn(rng)
        out.append({"name": name, "pass": bool(ok), "detail": detail})
    return out
