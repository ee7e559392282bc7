"""Acceptance checks A1-A8 at their stated tolerances.

Each check records one PASS/FAIL line, listed in the "acceptance"
section of the pytest summary, before asserting.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

from amolab.arithmetic import Frequency, ln_sin_sum
from amolab.eigensolve import BoxSpec, box_eigenvalues, eigenvector_profile
from amolab.experiments import PIPELINES, ExperimentConfig
from amolab.operator import OperatorParams, green_entry, green_matrix_dense, potential_array
from amolab.selftest import run_all

pytestmark = pytest.mark.acceptance


def timed(fn, *a):
    t0 = time.perf_counter()
    out = fn(*a)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def transfer_run():
    return timed(PIPELINES["transfer"], ExperimentConfig(kind="transfer"))


def test_A1_ln_sin_sums(report_line):
    alpha = Frequency.from_fraction(Fraction(4181, 6765))
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    n = 0
    for q in (89, 233, 610, 1597):
        for _ in range(100):
            x = Fraction(int(rng.integers(0, 2**40)), 2**40)
            val, _ = ln_sin_sum(x, alpha, q)
            worst = max(worst, abs(val) / math.log(q))
            n += 1
    dt = time.perf_counter() - t0
    ok = worst <= 10 and dt < 10
    report_line("A1", ok, f"max |sum + (q-1)ln2| / ln q = {worst:.3f} (<= 10) over {n} samples, {dt:.1f}s")
    assert worst <= 10
    assert dt < 10


def test_A2_eigenfunction_envelope(report_line):
    out, dt = timed(PIPELINES["eigen"], ExperimentConfig(kind="eigen"))
    b = out.report["bounds"]
    ok = out.verdict and dt < 120
    report_line("A2", ok, f"E={out.report['energy']:.4f} k0={out.report['anchor']} "
                          f"lower slack {b['worst_lower_slack']:.3f}, upper slack {b['worst_upper_slack']:.3f}; "
                          f"candidates passing {out.report['candidate_pass_fraction']:.2f}, {dt:.1f}s")
    assert dt < 120
    assert out.verdict


def test_A3_transfer_envelope(report_line, transfer_run):
    out, dt = transfer_run
    g = out.report["g_bounds"]
    gap = out.report["last_simon_max_gap"]
    ok = g["verdict"] == "pass" and gap <= 3 and dt < 60
    report_line("A3", ok, f"g lower slack {g['worst_lower_slack']:.3f}, upper slack {g['worst_upper_slack']:.3f}; "
                          f"sandwich max gap {gap:.3f} nats (<= 3), {dt:.1f}s")
    assert dt < 60
    assert gap <= 3
    assert g["verdict"] == "pass"


def test_A4_reflective_hierarchy(report_line):
    cfg = ExperimentConfig(kind="hierarchy", frequency="near:100:10", K_list=(20, 120))
    out, dt = timed(PIPELINES["hierarchy"], cfg)
    h = out.report["hierarchy"]
    c = out.report["checks"]
    strengths = [s for _, s in h["resonances"]]
    ok = out.verdict and dt < 180
    report_line("A4", ok, f"K_hat={h['K_hat_est']} depths {c['depths']} deviations_ok={c['deviations_ok']} "
                          f"similarity_ok={c['similarity_ok']} sign_ok={c['sign_ok']} "
                          f"tested {c['tested_nodes']}/{c['found_nodes']}, {dt:.1f}s")
    assert min(strengths) >= 0.4
    assert dt < 180
    assert c["deviations_ok"] and 2 in c["depths"]
    assert c["similarity_ok"]
    assert c["sign_ok"]


def test_A5_density(report_line, transfer_run):
    out, dt = transfer_run
    d = out.report["density"]
    L, dh = 1.0, out.report["delta_hat"]
    sup_ok = abs(d["limsup_slope"] - L) <= 0.05
    inf_ok = abs(d["liminf_slope_at_resonances"] - (L - dh)) <= 0.07
    exc_ok = d["transfer_exceptional_density"] <= 0.1
    report_line("A5", sup_ok and inf_ok and exc_ok,
                f"limsup {d['limsup_slope']:.4f} (target {L}), liminf at resonances "
                f"{d['liminf_slope_at_resonances']:.4f} (target {L - dh:.3f}), "
                f"exceptional density {d['transfer_exceptional_density']:.3f}")
    assert sup_ok
    assert exc_ok
    assert inf_ok


def test_A6_singular_continuous(report_line):
    cfg = ExperimentConfig(kind="regime", ln_lambda=0.3, delta=0.6, K_list=(20,), box=800, window=400)
    out, dt = timed(PIPELINES["regime"], cfg)
    r = out.report
    assert r["classification"] == "singular-continuous"
    ok = out.verdict and dt < 120
    report_line("A6", ok, f"tested {r['tested']}: transport fraction {r['transport_fraction']:.3f} (>= 0.8), "
                          f"wronskian fraction {r['wronskian_fraction']:.3f} (>= 0.8), "
                          f"decay passes {r['decay_pass_count']} (== 0), {dt:.1f}s")
    assert dt < 120
    assert r["transport_fraction"] >= 0.8
    assert r["wronskian_fraction"] >= 0.8
    assert r["decay_pass_count"] == 0


def test_A7_dense_oracles(report_line):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    green_worst = 0.0
    for _ in range(30):
        alpha = Fraction(int(rng.integers(1, 10**6)), 10**6 + 3)
        p = OperatorParams(float(rng.uniform(0.1, 1.5)), Frequency.from_fraction(alpha),
                           Fraction(int(rng.integers(0, 2**30)), 2**30), E=float(rng.uniform(-3, 3)))
        k = int(rng.integers(2, 13))
        G = green_matrix_dense(p, 0, k - 1)
        for y in range(k):
            for side, ref in (("left", G[0, y]), ("right", G[y, k - 1])):
                s, lg = green_entry(p, 0, k - 1, y, side)
                green_worst = max(green_worst, abs(lg - math.log(abs(ref))) / max(1.0, abs(math.log(abs(ref)))))
                assert s == np.sign(ref)
    eig_worst = 0.0
    for _ in range(30):
        p = OperatorParams(float(rng.uniform(0.1, 1.5)), Frequency.from_fraction(Fraction(int(rng.integers(1, 999)), 1009)),
                           Fraction(int(rng.integers(0, 2**20)), 2**20))
        V = potential_array(p, 0, 3)
        roots = np.sort(np.roots(np.poly(np.diag(V) + np.eye(3, k=1) + np.eye(3, k=-1))).real)
        ev = [float(e) for e in box_eigenvalues(p, BoxSpec(0, 2), (-12, 12))]
        eig_worst = max(eig_worst, float(np.max(np.abs(np.array(ev) - roots))))
    cos_worst = 0.0
    for _ in range(10):
        p = OperatorParams(float(rng.uniform(0.5, 1.2)), Frequency.from_fraction(Fraction(int(rng.integers(1, 10**6)), 10**6 + 3)),
                           Fraction(int(rng.integers(0, 2**30)), 2**30))
        box = BoxSpec(-15, 15)
        E, W = eigh_tridiagonal(potential_array(p, box.a, box.size), np.ones(box.size - 1))
        i = int(rng.integers(0, box.size))
        v = eigenvector_profile(p, box, E[i]).phi_linear()
        cos_worst = max(cos_worst, 1 - abs(float(v @ W[:, i])) / float(np.linalg.norm(v)))
    dt = time.perf_counter() - t0
    ok = green_worst <= 1e-8 and eig_worst <= 1e-10 and cos_worst <= 1e-8 and dt < 5
    report_line("A7", ok, f"green rel log dev {green_worst:.1e}, 3x3 eigenvalue dev {eig_worst:.1e}, "
                          f"1 - cosine {cos_worst:.1e}, {dt:.1f}s")
    assert green_worst <= 1e-8
    assert eig_worst <= 1e-10
    assert cos_worst <= 1e-8
    assert dt < 5


def test_A8_structural_invariants(report_line):
    results, dt = timed(run_all, 0)
    failed = [r["name"] for r in results if not r["pass"]]
    report_line("A8", not failed and dt < 30, f"{len(results) - len(failed)}/{len(results)} invariant families pass, "
                                              f"{dt:.1f}s" + (f"; failed: {failed}" if failed else ""))
    assert not failed
    assert dt < 30
