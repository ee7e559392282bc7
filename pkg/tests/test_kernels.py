"""Compiled kernels against their pure-Python bodies and against numpy references."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import eigh_tridiagonal

from amolab import kernels
from amolab._accel import HAVE_NUMBA


def py(k):
    return getattr(k, "py_func", k)


def potentials(n, seed, amp=3.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-amp, amp, n)


energies = st.floats(-4, 4, allow_nan=False)
seeds = st.integers(0, 2**31)


def test_all_kernels_compiled_when_numba_present():
    for name, k in kernels.all_kernels().items():
        assert hasattr(k, "py_func") == HAVE_NUMBA, name


@given(st.integers(1, 300), seeds, energies)
def test_transfer_log_matches_py(n, seed, E):
    V = potentials(n, seed)
    m1, s1 = kernels.transfer_log(V, E)
    m2, s2 = py(kernels.transfer_log)(V, E)
    assert np.allclose(m1, m2, rtol=1e-12, atol=1e-14)
    assert math.isclose(s1, s2, rel_tol=1e-12, abs_tol=1e-12)


@given(st.integers(1, 30), seeds, energies)
def test_transfer_log_matches_numpy_product(n, seed, E):
    V = potentials(n, seed)
    M = np.eye(2)
    for v in V:
        M = np.array([[E - v, -1.0], [1.0, 0.0]]) @ M
    m, s = kernels.transfer_log(V, E)
    assert np.allclose(m * math.exp(s), M, rtol=1e-10, atol=1e-10 * np.max(np.abs(M)))


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_norm2x2_is_spectral_norm(a, b, c, d):
    ref = np.linalg.norm(np.array([[a, b], [c, d]]), 2)
    assert math.isclose(kernels.norm2x2(a, b, c, d), ref, rel_tol=1e-12, abs_tol=1e-12)
    assert kernels.norm2x2(a, b, c, d) == py(kernels.norm2x2)(a, b, c, d)


@given(st.integers(1, 200), seeds, energies, st.booleans())
def test_cumulative_log_norms_matches_py(n, seed, E, leftward):
    V = potentials(n, seed)
    a = kernels.cumulative_log_norms(V, E, leftward)
    b = py(kernels.cumulative_log_norms)(V, E, leftward)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_cumulative_log_norms_last_equals_transfer_log():
    V = potentials(150, 3)
    m, s = kernels.transfer_log(V, 0.7)
    last = kernels.cumulative_log_norms(V, 0.7, False)[-1]
    assert math.isclose(last, s + math.log(np.linalg.norm(m, 2)), rel_tol=1e-12)


@given(st.integers(1, 80), seeds, energies)
def test_sturm_count_matches_py_and_dense(n, seed, E):
    V = potentials(n, seed)
    c = kernels.sturm_count(V, E)
    assert c == py(kernels.sturm_count)(V, E)
    ev = np.linalg.eigvalsh(np.diag(V) + np.eye(n, k=1) + np.eye(n, k=-1))
    if np.min(np.abs(ev - E)) > 1e-9:
        assert c == int(np.sum(ev < E))


@given(st.integers(1, 25), seeds, energies)
def test_determinant_recursion_matches_py_and_dense(n, seed, E):
    V = potentials(n, seed)
    s1, l1 = kernels.determinant_log_recursion(V, E)
    s2, l2 = py(kernels.determinant_log_recursion)(V, E)
    assert np.array_equal(s1, s2)
    assert np.allclose(l1, l2, rtol=1e-12, atol=1e-12)
    H = np.diag(V) + np.eye(n, k=1) + np.eye(n, k=-1)
    ref = np.linalg.det(E * np.eye(n) - H)
    if abs(ref) > 1e-8:
        assert s1[n] == np.sign(ref)
        assert math.isclose(l1[n], math.log(abs(ref)), abs_tol=1e-8)


@given(st.integers(1, 400), seeds, energies, st.floats(-1, 1), st.floats(0.1, 1))
def test_propagate_matches_py(n, seed, E, a, b):
    V = potentials(n, seed)
    s1, l1 = kernels.propagate(V, E, a, b, 0.5)
    s2, l2 = py(kernels.propagate)(V, E, a, b, 0.5)
    assert np.array_equal(s1, s2)
    assert np.allclose(l1, l2, rtol=1e-12, atol=1e-12)


def test_propagate_matches_linear_recursion():
    V = potentials(20, 11)
    E = 0.3
    phi = [0.2, 1.0]
    for v in V:
        phi.append((E - v) * phi[-1] - phi[-2])
    s, l = kernels.propagate(V, E, 0.2, 1.0, 0.0)
    ref = np.array(phi[1:])
    assert np.allclose(s * np.exp(l), ref, rtol=1e-10)


@given(st.integers(2, 12), seeds)
def test_lagrange_log_max_matches_py_and_grid(n, seed):
    rng = np.random.default_rng(seed)
    c = np.sort(rng.uniform(-1, 1, n))
    if np.min(np.diff(c)) < 1e-6:
        return
    i = int(rng.integers(0, n))
    v1, x1 = kernels.lagrange_log_max(c, i, -1.0, 1.0)
    v2, x2 = py(kernels.lagrange_log_max)(c, i, -1.0, 1.0)
    assert math.isclose(v1, v2, rel_tol=1e-12, abs_tol=1e-12)
    grid = np.linspace(-1, 1, 20001)
    others = np.delete(c, i)
    with np.errstate(divide="ignore"):
        g = np.sum(np.log(np.abs(grid[:, None] - others[None, :])), axis=1)
    assert v1 >= np.max(g) - 1e-9
    assert v1 <= np.max(g) + 1e-3


def test_free_laplacian_sturm():
    n = 17
    ev = 2 * np.cos(np.pi * np.arange(1, n + 1) / (n + 1))
    V = np.zeros(n)
    for e in np.sort(ev):
        assert kernels.sturm_count(V, e + 1e-9) - kernels.sturm_count(V, e - 1e-9) == 1
    assert np.allclose(np.sort(ev), eigh_tridiagonal(V, np.ones(n - 1), eigvals_only=True))


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
def test_fallback_subprocess_agrees():
    import subprocess
    import sys

    code = ("import numpy as np; from amolab import kernels; from amolab._accel import backend;"
            "V=np.linspace(-2,2,97); m,s=kernels.transfer_log(V,0.3);"
            "print(backend(), repr(s), kernels.sturm_count(V,0.1))")
    import os
    env = dict(os.environ, AMOLAB_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout.split()
    V = np.linspace(-2, 2, 97)
    _, s = kernels.transfer_log(V, 0.3)
    assert out[0] == "numpy"
    assert math.isclose(float(out[1]), s, rel_tol=1e-12)
    assert int(out[2]) == kernels.sturm_count(V, 0.1)
