"""Decay and growth envelopes ``f``, ``g`` and the checks built on them.

All envelopes are returned as natural logs and combined with log-sum-exp.
``eta`` enters only through ``eta*|l| = -ln|sin pi(2 theta + x0 alpha)|``,
so that product is carried directly.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .arithmetic import Frequency, PhaseScan, _frequency, _theta_value
from .errors import InvalidArgument


def f_log(x0: int, eta: float, ln_lambda: float, ell: int) -> float:
    """``log f(l)`` for given ``x0`` and ``eta``."""
    if ell == 0:
        raise InvalidArgument("ell must be nonzero")
    L = ln_lambda
    a = abs(ell)
    if x0 * ell <= 0:
        return -a * L
    return float(np.logaddexp(-(abs(x0) + abs(ell - x0)) * L + eta * a, -a * L))


def g_log(x0: int, eta: float, ln_lambda: float, ell: int) -> float:
    """``log g(l)`` for given ``x0`` and ``eta``."""
    if ell == 0:
        raise InvalidArgument("ell must be nonzero")
    L = ln_lambda
    a = abs(ell)
    if x0 * ell <= 0 or abs(x0) > a:
        return a * L
    if a <= 2 * abs(x0):
        return float(np.logaddexp((L - eta) * a, abs(2 * x0 - ell) * L))
    return (L - eta) * a


def _x0_eta(alpha, theta, ell, scan=None):
    if scan is None:
        scan = PhaseScan(_frequency(alpha), _theta_value(theta), 2 * abs(ell))
    return scan.x0_eta(ell)


def f_model(alpha, theta, ln_lambda: float, ell: int) -> float:
    """``log f(l)`` with ``x0``, ``eta`` located for this ``l``."""
    x0, eta, _ = _x0_eta(alpha, theta, ell)
    return f_log(x0, eta, ln_lambda, ell)


def g_model(alpha, theta, ln_lambda: float, ell: int) -> float:
    """``log g(l)`` with ``x0``, ``eta`` located for this ``l``."""
    x0, eta, _ = _x0_eta(alpha, theta, ell)
    return g_log(x0, eta, ln_lambda, ell)


@dataclass
class EnvelopeModel:
    """Envelope tabulated on ``l = -N..N`` (``values[N] = 0`` at ``l = 0``)."""

    kind: str
    ln_lambda: float
    ells: np.ndarray
    x0: np.ndarray
    eta: np.ndarray
    integer_hit: np.ndarray
    values: np.ndarray
    source: dict = field(default_factory=dict)

    @classmethod
    def build(cls, kind: str, alpha, theta, ln_lambda: float, N: int):
        if kind not in ("f", "g"):
            raise InvalidArgument("kind must be 'f' or 'g'")
        alpha = _frequency(alpha)
        th = _theta_value(theta)
        scan = PhaseScan(alpha, th, 2 * N)
        ells = np.arange(-N, N + 1)
        x0 = np.zeros(2 * N + 1, dtype=np.int64)
        eta = np.zeros(2 * N + 1)
        hit = np.zeros(2 * N + 1, dtype=bool)
        vals = np.zeros(2 * N + 1)
        fn = f_log if kind == "f" else g_log
        for i, l in enumerate(ells):
            if l == 0:
                continue
            x, e, h = scan.x0_eta(int(l))
            x0[i], eta[i], hit[i] = x, e, h
            vals[i] = fn(x, e, ln_lambda, int(l))
        src = {"alpha": f"{alpha.num}/{alpha.den}", "theta": f"{th.numerator}/{th.denominator}", "N": N}
        return cls(kind, ln_lambda, ells, x0, eta, hit, vals, src)

    @property
    def N(self) -> int:
        return int(self.ells[-1])

    def at(self, ell: int) -> float:
        return float(self.values[int(ell) + self.N])

    def default_onset(self) -> int:
        """``max(30, 2|x0|/10)`` with the largest ``|x0|`` seen."""
        return int(max(30, math.ceil(2 * int(np.max(np.abs(self.x0))) / 10)))


@dataclass
class BoundReport:
    ells: np.ndarray
    upper: np.ndarray  # model + eps|l| - measured
    lower: np.ndarray  # measured - (model - eps|l|)
    window: tuple
    epsilon: float
    verdict: bool

    @property
    def worst_upper_slack(self) -> float:
        return float(np.min(self.upper))

    @property
    def worst_lower_slack(self) -> float:
        return float(np.min(self.lower))

    def to_dict(self):
        return {"verdict": "pass" if self.verdict else "fail", "epsilon": self.epsilon,
                "window": list(self.window), "worst_upper_slack": self.worst_upper_slack,
                "worst_lower_slack": self.worst_lower_slack}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ell", "upper_slack", "lower_slack"])
            for l, u, lo in zip(self.ells, self.upper, self.lower):
                w.writerow([int(l), "%.17g" % u, "%.17g" % lo])


def _measured_values(measured, ells):
    if hasattr(measured, "logU_at"):
        lo, hi = measured.window
        if ells[0] < lo or ells[-1] > hi:
            raise InvalidArgument("profile window does not cover the model range")
        return np.array([measured.logU_at(int(l)) for l in ells])
    arr = np.asarray(measured, dtype=float)
    if arr.shape != ells.shape:
        raise InvalidArgument("measured array must be indexed like the model (l = -N..N)")
    return arr


def verify_bounds(measured, model: EnvelopeModel, epsilon: float = 0.15, K: int | None = None,
                  N: int | None = None) -> BoundReport:
    """Check ``model - eps|l| <= measured <= model + eps|l|`` for ``K <= |l| <= N``.

    ``measured`` is a SolutionProfile (its ``logU`` at site ``l``) or an
    array of logs on the model grid.  Pass iff both slack arrays are >= 0.
    """
    if K is None:
        K = model.default_onset()
    if K < 1:
        raise InvalidArgument("onset K must be >= 1")
    N = model.N if N is None else N
    if N > model.N or N < K:
        raise InvalidArgument("window [K, N] not covered by the model")
    sel = (np.abs(model.ells) >= K) & (np.abs(model.ells) <= N)
    meas = _measured_values(measured, model.ells)
    ells = model.ells[sel]
    mv = model.values[sel]
    me = meas[sel]
    upper = mv + epsilon * np.abs(ells) - me
    lower = me - (mv - epsilon * np.abs(ells))
    ok = bool(np.all(upper >= 0) and np.all(lower >= 0))
    return BoundReport(ells, upper, lower, (int(K), int(N)), float(epsilon), ok)


@dataclass
class DensityStats:
    limsup_slope: float
    liminf_slope: float
    exceptional_density: float
    window: tuple
    tail_window: tuple
    predicted_density: float
    kind: str

    def __iter__(self):
        return iter((self.limsup_slope, self.liminf_slope, self.exceptional_density))

    def to_dict(self):
        return dict(self.__dict__)


def density_stats(values, ks, ln_lambda: float, epsilon: float, kind: str = "U", resonance_sites=None) -> DensityStats:
    """Slopes and exceptional density of ``-logU(k)/k`` (``kind='U'``) or ``logA(k)/k``.

    ``limsup``/``liminf`` are taken over the last dyadic window
    ``[N/2, N]``; if ``resonance_sites`` are given, the liminf is the
    minimum slope over those sites instead (the resonant subsequence).
    ``exceptional_density`` is the fraction of ``k`` in ``[K, N]`` with
    ``|slope_k - ln lambda| > epsilon``.
    """
    ks = np.asarray(ks, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(ks <= 0):
        raise InvalidArgument("ks must be positive")
    K, N = float(ks.min()), float(ks.max())
    if N < 10 * K:
        raise InvalidArgument("need N >= 10 K")
    if kind == "U":
        slope = -values / ks
        pred = 0.5
    elif kind == "A":
        slope = values / ks
        pred = 0.0
    else:
        raise InvalidArgument("kind must be 'U' or 'A'")
    tail = ks >= N / 2
    limsup = float(np.max(slope[tail]))
    liminf = float(np.min(slope[tail]))
    if resonance_sites is not None and len(resonance_sites):
        pos = {int(k): i for i, k in enumerate(ks)}
        picks = [slope[pos[int(abs(k))]] for k in resonance_sites if int(abs(k)) in pos]
        if picks:
            liminf = float(min(picks))
    exc = float(np.mean(np.abs(slope - ln_lambda) > epsilon))
    return DensityStats(limsup, liminf, exc, (int(K), int(N)), (int(math.ceil(N / 2)), int(N)), pred, kind)


def last_simon_gap(params, profile, N: int):
    """``log||A_l|| - log||A_l U~(0)||`` on ``l = -N..N``.

    ``U~(0)`` is the unit vector orthogonal to the eigenvector data
    ``(phi(0), phi(-1))``, i.e. the start of an independent solution.
    Returns ``(gap, logA, logUt)``.
    """
    from .eigensolve import solution_profile
    from .operator import LogVec2, transfer_log_norms

    s0, l0 = int(profile.sign[profile.idx(0)]), profile.log_phi_at(0)
    if profile.idx(0) > 0:
        s1, l1 = int(profile.sign[profile.idx(-1)]), profile.log_phi_at(-1)
    else:
        s1, l1 = profile.phi_before
    m = max(l0, l1)
    u = np.array([s0 * math.exp(l0 - m), s1 * math.exp(l1 - m)])
    u /= np.hypot(u[0], u[1])
    ut = LogVec2.normalized([-u[1], u[0]])  # unit norm, log_scale 0
    E = profile.energy
    sol = solution_profile(params.with_energy(E), ut, N)
    logA = transfer_log_norms(params.with_energy(E), N)
    logUt = np.array([sol.logU_at(l) for l in range(-N, N + 1)])
    return logA - logUt, logA, logUt
