"""Palindromic reflections, Wronskians and transport in the singular-continuous regime.

A solution ``u`` is compared with its reflection ``u_i(n) = u(k_i - n)``
about a phase resonance ``k_i``.  The Wronskian ``W(u, u_i)`` changes only
by ``(V_i - V) u u_i`` per step, so near-symmetry of the potential forces
it to be nearly constant and, for a normalized eigenvector, nearly zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .arithmetic import Phase, log_torus_norm
from .eigensolve import BoxSpec, dense_eigenpairs, eigenvector_profile
from .errors import IllConditionedEigenpair, InvalidArgument, InvalidRegime, NotAResonance
from .operator import OperatorParams, potential_array


@dataclass
class SignedLog:
    """Real sequence on consecutive sites stored as ``sign * exp(log)``."""

    sites: np.ndarray
    sign: np.ndarray
    log: np.ndarray

    def linear(self, shift: float = 0.0) -> np.ndarray:
        with np.errstate(under="ignore"):
            return self.sign * np.exp(self.log - shift)

    def at(self, n: int) -> tuple:
        i = int(n) - int(self.sites[0])
        if not 0 <= i < len(self.sites):
            raise InvalidArgument(f"site {n} outside window")
        return int(self.sign[i]), float(self.log[i])

    def max_log(self) -> float:
        return float(np.max(self.log))


def as_signed_log(u, sites=None) -> SignedLog:
    """Accept a SolutionProfile, a SignedLog, or a float array (with ``sites``)."""
    if isinstance(u, SignedLog):
        return u
    if hasattr(u, "logmag_phi"):
        return SignedLog(np.asarray(u.sites), np.asarray(u.sign, dtype=np.int8), np.asarray(u.logmag_phi, dtype=float))
    a = np.asarray(u, dtype=float)
    if sites is None:
        sites = np.arange(len(a))
    with np.errstate(divide="ignore"):
        return SignedLog(np.asarray(sites), np.sign(a).astype(np.int8), np.log(np.abs(a)))


def reflect(u, k: int) -> SignedLog:
    """``u_k(n) = u(k - n)``; applying it twice returns ``u`` exactly."""
    u = as_signed_log(u)
    return SignedLog(k - u.sites[::-1], u.sign[::-1].copy(), u.log[::-1].copy())


def l2_normalized(u) -> SignedLog:
    u = as_signed_log(u)
    ln = 0.5 * float(logsumexp(2 * u.log[u.sign != 0]))
    return SignedLog(u.sites, u.sign, u.log - ln)


def _signed_diff(s1, l1, s2, l2):
    """``s1 e^{l1} - s2 e^{l2}`` in sign/log form, subtracting at a common scale."""
    m = np.maximum(l1, l2)
    finite = np.isfinite(m)
    mm = np.where(finite, m, 0.0)
    with np.errstate(under="ignore", invalid="ignore"):
        d = s1 * np.exp(l1 - mm) - s2 * np.exp(l2 - mm)
    sign = np.sign(d).astype(np.int8)
    with np.errstate(divide="ignore"):
        log = np.where(finite & (d != 0), np.log(np.abs(d)) + mm, -np.inf)
    sign[~finite] = 0
    return sign, log


def wronskian_profile(u, v) -> SignedLog:
    """``W(n) = u(n+1) v(n) - u(n) v(n+1)`` on the common window (minus its last site)."""
    u, v = as_signed_log(u), as_signed_log(v)
    lo = max(int(u.sites[0]), int(v.sites[0]))
    hi = min(int(u.sites[-1]), int(v.sites[-1]))
    if hi - lo < 1:
        raise InvalidArgument("windows do not overlap on two consecutive sites")
    iu = lo - int(u.sites[0])
    iv = lo - int(v.sites[0])
    n = hi - lo
    su, lu = u.sign[iu:iu + n + 1].astype(np.int64), u.log[iu:iu + n + 1]
    sv, lv = v.sign[iv:iv + n + 1].astype(np.int64), v.log[iv:iv + n + 1]
    s1, l1 = su[1:] * sv[:-1], lu[1:] + lv[:-1]
    s2, l2 = su[:-1] * sv[1:], lu[:-1] + lv[1:]
    sign, log = _signed_diff(s1, l1, s2, l2)
    return SignedLog(np.arange(lo, hi), sign, log)


def _norm2(pairs, shift):
    with np.errstate(under="ignore"):
        return math.hypot(*[s * math.exp(l - shift) if s else 0.0 for s, l in pairs])


@dataclass
class PalindromeVerdict:
    k: int
    wronskian_sup: float
    log_wronskian_sup: float
    predicted_bound: float
    C_fit: float
    potential_mismatch: float
    potential_bound: float
    telescoping_residual: float
    parity: str
    midpoint: int
    branch: str
    iota: int
    midpoint_sum: float
    midpoint_diff: float
    transport_gap: float
    transport_ratio: float
    transport_defect: float
    phi0_norm: float
    log_scale: float
    energy: float | None = None
    anchor: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _lipschitz(params: OperatorParams) -> float:
    """Lipschitz constant of ``n -> V`` as a function of the phase (per unit of torus)."""
    coeffs = params._coeffs
    return 2 * math.pi * abs(params._amplitude) * sum((j + 1) * abs(c) for j, c in enumerate(coeffs))


def potential_symmetry_bound(params: OperatorParams, k: int) -> float:
    """``Lip * ||2 theta + k alpha||`` bounding ``|V(n) - V(k - n)|`` for every ``n``."""
    return _lipschitz(params) * math.exp(log_torus_norm(2 * params.theta + k * params.alpha.value))


def palindrome_test(eigvec, k: int, delta: float, epsilon: float = 0.1, params: OperatorParams | None = None,
                    potential=None, C: float | None = None) -> PalindromeVerdict:
    """Compare an eigenvector with its reflection about the resonance ``k``.

    The potential comes from ``params`` or an explicit callable
    ``potential(n)``.  ``C`` (default: the Lipschitz constant of the
    potential) scales both ``e^{-(delta - eps)|k|}`` bounds.  Raises
    NotAResonance when ``max |V - V_i|`` over the window exceeds
    ``C e^{-(delta - eps)|k|}``.
    """
    u = l2_normalized(eigvec)
    lo, hi = int(u.sites[0]), int(u.sites[-1])
    if lo > min(0, k) - 10 or hi < max(0, k) + 10:
        raise InvalidArgument("eigenvector window must cover [min(0,k)-10, max(0,k)+10]")
    ui = reflect(u, k)
    W = wronskian_profile(u, ui)
    # common sites of u and u_i
    c_lo, c_hi = int(W.sites[0]), int(W.sites[-1]) + 1
    ns = np.arange(c_lo, c_hi + 1)
    if params is not None:
        V = potential_array(params, c_lo, len(ns))
        Vi = potential_array(params, k - c_hi, len(ns))[::-1]
        bound_exact = potential_symmetry_bound(params, k)
        if C is None:
            C = _lipschitz(params)
    elif potential is not None:
        V = np.array([potential(int(n)) for n in ns], dtype=float)
        Vi = np.array([potential(int(k - n)) for n in ns], dtype=float)
        bound_exact = math.nan
        if C is None:
            C = 2 * math.pi * max(1e-300, float(np.max(np.abs(V))))
    else:
        raise InvalidArgument("need params or potential")
    dV = np.abs(V - Vi)
    mismatch = float(np.max(dV))
    bound = C * math.exp(-(delta - epsilon) * abs(k))
    if mismatch > bound * (1 + 1e-9) + 1e-300:
        raise NotAResonance(f"max|V - V_i| = {mismatch:.3e} exceeds {bound:.3e} at k = {k}")

    ws = W.max_log()
    wsup = math.exp(ws) if np.isfinite(ws) else 0.0
    C_fit = wsup * math.exp((delta - epsilon) * abs(k))

    # exact identity W(n) - W(n-1) = (V_i(n) - V(n)) u(n) u_i(n), checked at a common scale
    iu = c_lo - lo
    iui = c_lo - int(ui.sites[0])
    d = Vi - V
    with np.errstate(divide="ignore"):
        st_log = np.log(np.abs(d)) + u.log[iu:iu + len(ns)] + ui.log[iui:iui + len(ns)]
    st_sign = np.sign(d) * u.sign[iu:iu + len(ns)] * ui.sign[iui:iui + len(ns)]
    ref = max(ws, float(np.max(st_log)))
    if not np.isfinite(ref):
        ref = 0.0
    Wl = W.linear(ref)
    with np.errstate(under="ignore"):
        step = st_sign * np.exp(st_log - ref)
    tel = Wl[1:] - Wl[:-1] - step[1:-1]
    scale_ = max(float(np.max(np.abs(Wl))), float(np.max(np.abs(step))), 1e-300)
    telescoping = float(np.max(np.abs(tel))) / scale_ if len(tel) else 0.0

    # midpoint branch
    if k % 2 == 0:
        m = k // 2
        a, b = u.at(m), u.at(m - 1)
        ai, bi = u.at(m), u.at(m + 1)  # Phi_i(m) = (u(m), u(m+1))
        parity = "even"
    else:
        m = (k - 1) // 2 + 1
        a, b = u.at(m), u.at(m - 1)
        ai, bi = u.at(m - 1), u.at(m)  # Phi_i(m~+1) = (u(m~), u(m~+1))
        parity = "odd"
    sh = max(a[1], b[1], ai[1], bi[1])
    if not np.isfinite(sh):
        sh = 0.0
    with np.errstate(under="ignore"):
        P = np.array([a[0] * math.exp(a[1] - sh), b[0] * math.exp(b[1] - sh)])
        Pi = np.array([ai[0] * math.exp(ai[1] - sh), bi[0] * math.exp(bi[1] - sh)])
    s_sum = float(np.hypot(*(P + Pi)))
    s_diff = float(np.hypot(*(P - Pi)))
    iota = 1 if s_sum <= s_diff else -1
    branch = "sum small" if iota == 1 else "difference small"

    # transport: Phi(0) = (u(0), u(-1)) versus Phi_i(0) = (u(k), u(k+1))
    p0 = [u.at(0), u.at(-1)]
    pk = [u.at(k), u.at(k + 1)]
    sh0 = max(l for _, l in p0 + pk)
    sh0 = sh0 if np.isfinite(sh0) else 0.0
    n0 = _norm2(p0, sh0)
    nk = _norm2(pk, sh0)
    with np.errstate(under="ignore"):
        F0 = np.array([s * math.exp(l - sh0) if s else 0.0 for s, l in p0])
        Fk = np.array([s * math.exp(l - sh0) if s else 0.0 for s, l in pk])
    defect = float(np.hypot(*(F0 + iota * Fk)))
    gap = abs(n0 - nk)
    ratio = gap / n0 if n0 > 0 else math.inf
    return PalindromeVerdict(
        k=int(k), wronskian_sup=wsup, log_wronskian_sup=ws, predicted_bound=bound, C_fit=C_fit,
        potential_mismatch=mismatch, potential_bound=bound_exact, telescoping_residual=telescoping,
        parity=parity, midpoint=int(m), branch=branch, iota=iota,
        midpoint_sum=s_sum, midpoint_diff=s_diff,
        transport_gap=gap * math.exp(sh0) if sh0 > -700 else 0.0, transport_ratio=ratio,
        transport_defect=defect / n0 if n0 > 0 else math.inf, phi0_norm=n0 * math.exp(sh0) if sh0 > -700 else 0.0,
        log_scale=sh0,
        energy=float(getattr(eigvec, "energy", math.nan)) if getattr(eigvec, "energy", None) is not None else None,
        anchor=getattr(eigvec, "anchor", None))


def decay_slope(profile, lo: int, hi: int) -> float:
    """Least-squares slope of ``logU`` against distance from the window center, outer half only.

    Sites with ``|n - c| >= h/2`` (``c`` the center, ``h`` the half-width)
    are used on both sides; the larger (less decaying) side is returned.
    """
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)
    out = []
    for side in (-1, 1):
        ns = np.array([n for n in range(lo, hi + 1) if (n - c) * side >= h / 2])
        if len(ns) < 2:
            continue
        y = np.array([profile.logU_at(int(n)) for n in ns])
        x = np.abs(ns - c)
        out.append(float(np.polyfit(x, y, 1)[0]))
    return max(out)


@dataclass
class SCReport:
    ln_lambda: float
    delta_hat: float
    box: tuple
    resonances: list
    verdicts: list
    decay_slopes: list
    energies: list
    transport_fraction: float
    wronskian_fraction: float
    decay_pass_count: int
    thresholds: dict

    def to_dict(self):
        d = dict(self.__dict__)
        d["verdicts"] = [v.to_dict() for v in self.verdicts]
        return d

    def to_jsonl(self) -> str:
        return "".join(json.dumps(v.to_dict()) + "\n" for v in self.verdicts)


def _bulk(E, frac):
    lo, hi = float(np.min(E)), float(np.max(E))
    pad = 0.5 * (1 - frac) * (hi - lo)
    return lo + pad, hi - pad


def sc_transport_check(params: OperatorParams, resonances, N: int, delta_hat: float | None = None,
                       epsilon: float = 0.1, transport_threshold: float = 0.2, C_max: float = 10.0,
                       decay_threshold: float = -0.2, bulk_fraction: float = 0.8, near: int = 0,
                       K_max: int = 200) -> SCReport:
    """Palindrome tests for near-resonance bulk eigenvectors of the box ``[-N, N]``.

    ``resonances``: a ResonanceSequence or a list of signed sites.  An
    eigenvector is near resonance ``k`` when its global maximum lies within
    ``near`` sites of the segment between 0 and ``k``; bulk
    means the central ``bulk_fraction`` of the box spectrum.
    """
    ks = list(resonances.ks) if hasattr(resonances, "ks") else [int(k) for k in resonances]
    if delta_hat is None:
        delta_hat = Phase.analyze(params.theta, params.alpha, K_max=K_max).delta_hat
        if hasattr(resonances, "strengths") and len(resonances):
            delta_hat = max(delta_hat, max(resonances.strengths))
    if not (0 < params.ln_lambda < delta_hat):
        raise InvalidRegime(f"ln lambda = {params.ln_lambda:.4g} is not in (0, delta_hat = {delta_hat:.4g})")
    box = BoxSpec(-N, N)
    E, Wd = dense_eigenpairs(params, box)
    e_lo, e_hi = _bulk(E, bulk_fraction)
    peaks = np.argmax(np.abs(Wd), axis=0) + box.a
    verdicts, slopes, energies = [], [], []
    for k in ks:
        if not (box.a + 10 <= min(0, k) and max(0, k) + 10 <= box.b):
            continue
        a, b = min(0, k) - near, max(0, k) + near
        for i in np.nonzero((peaks >= a) & (peaks <= b) & (E >= e_lo) & (E <= e_hi))[0]:
            try:
                prof = eigenvector_profile(params, box, float(E[i]))
            except IllConditionedEigenpair:
                continue
            try:
                v = palindrome_test(prof, k, delta_hat, epsilon, params)
            except NotAResonance:
                continue
            v.extra["decay_slope"] = decay_slope(prof, box.a, box.b)
            verdicts.append(v)
            slopes.append(v.extra["decay_slope"])
            energies.append(float(E[i]))
    n = len(verdicts)
    tf = sum(v.transport_ratio <= transport_threshold for v in verdicts) / n if n else math.nan
    wf = sum(v.C_fit <= C_max for v in verdicts) / n if n else math.nan
    decay = sum(s <= decay_threshold for s in slopes)
    return SCReport(params.ln_lambda, float(delta_hat), (box.a, box.b), ks, verdicts, slopes, energies, tf, wf,
                    int(decay), {"transport": transport_threshold, "C_max": C_max, "decay": decay_threshold,
                                 "epsilon": epsilon, "bulk_fraction": bulk_fraction})
