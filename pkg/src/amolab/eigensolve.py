"""Box spectra, eigenvectors by two-sided shooting, and solution profiles.

Magnitudes are kept as ``(sign, log|phi|)`` throughout so that tails
hundreds of nats below the maximum stay resolved.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import logsumexp

from . import kernels, precision
from .errors import IllConditionedEigenpair, InvalidArgument
from .operator import LogVec2, OperatorParams, potential_array, potential_mp


@dataclass(frozen=True)
class BoxSpec:
    a: int
    b: int

    def __post_init__(self):
        if self.b < self.a:
            raise InvalidArgument("box needs b >= a")

    @property
    def size(self) -> int:
        return self.b - self.a + 1

    @classmethod
    def centered(cls, half: int):
        return cls(-half, half)


@dataclass(frozen=True)
class BoxEigenvalue:
    """Eigenvalue bracketed by Sturm counts: ``lo <= E < hi``."""

    value: object  # mpf midpoint
    lo: object
    hi: object
    index: int  # 0-based position in the box spectrum
    near_degenerate: bool = False

    def __float__(self):
        return float(self.value)

    @property
    def width(self):
        return self.hi - self.lo


def sturm_count(params: OperatorParams, box: BoxSpec, E) -> int:
    """Eigenvalues of the box strictly below ``E`` (float64)."""
    return int(kernels.sturm_count(potential_array(params, box.a, box.size), float(E)))


def sign_changes(signs) -> int:
    """Sign changes along a sequence, zeros taking the sign opposite to the predecessor."""
    changes = 0
    prev = 1
    for s in signs:
        s = int(s)
        if s == 0:
            s = -prev
        if s != prev:
            changes += 1
        prev = s
    return changes


def box_eigenvalues(params: OperatorParams, box: BoxSpec, window, tol=None):
    """All Dirichlet eigenvalues of the box in ``[E_lo, E_hi)``.

    A float64 tridiagonal solve seeds each eigenvalue; Sturm counts then
    bracket it, refined in extended precision to width ``tol`` (default
    ``2**-200``).
    """
    E_lo, E_hi = float(window[0]), float(window[1])
    if not E_lo < E_hi:
        raise InvalidArgument("degenerate energy window")
    bits = params.precision_bits
    if tol is None:
        tol = mpmath.mpf(2) ** -200
    with mpmath.workprec(bits):
        tol = mpmath.mpf(tol)
        if tol < mpmath.mpf(2) ** (-bits + 8):
            raise InvalidArgument(f"tol below what {bits}-bit arithmetic can resolve")
    V = potential_array(params, box.a, box.size)
    n = box.size
    c_lo = int(kernels.sturm_count(V, E_lo))
    c_hi = int(kernels.sturm_count(V, E_hi))
    if c_hi == c_lo:
        return []
    if n == 1:
        seeds = np.array([V[0]])
    else:
        seeds = eigh_tridiagonal(V, np.ones(n - 1), eigvals_only=True, select="i", select_range=(c_lo, c_hi - 1))
    Vmp = None
    out = []
    fine = tol < mpmath.mpf(1e-11)
    for j, e in enumerate(seeds):
        idx = c_lo + j
        pad = 1e-10 * max(1.0, abs(e))
        lo, hi = e - pad, e + pad
        # widen until the bracket holds eigenvalue idx
        for _ in range(60):
            cl = kernels.sturm_count(V, lo)
            ch = kernels.sturm_count(V, hi)
            if cl <= idx < ch:
                break
            if cl > idx:
                lo -= pad
            if ch <= idx:
                hi += pad
            pad *= 2
        near_deg = (kernels.sturm_count(V, hi) - kernels.sturm_count(V, lo)) > 1
        if fine:
            if Vmp is None:
                Vmp = potential_mp(params, box.a, n, bits)
            lo_m, hi_m = precision.mp_bisect_eigenvalue(Vmp, idx, lo, hi, tol, bits)
        else:
            with mpmath.workprec(bits):
                lo_m, hi_m = mpmath.mpf(lo), mpmath.mpf(hi)
            while hi_m - lo_m > tol:
                mid = (lo_m + hi_m) / 2
                if kernels.sturm_count(V, float(mid)) > idx:
                    hi_m = mid
                else:
                    lo_m = mid
                if float(hi_m) == float(lo_m):
                    break
        with mpmath.workprec(bits):
            mid = (lo_m + hi_m) / 2
        out.append(BoxEigenvalue(mid, lo_m, hi_m, idx, near_deg))
    return out


# --------------------------------------------------------------------------
# solution profiles


def _log_norm2(la, lb):
    """``log sqrt(e^{2 la} + e^{2 lb})``."""
    return 0.5 * np.logaddexp(2 * la, 2 * lb)


@dataclass
class SolutionProfile:
    """Sign and log-magnitude of a solution on consecutive sites.

    ``logU[i] = log||(phi(s_i), phi(s_i - 1))||``; ``phi_before`` holds
    ``(sign, log|phi|)`` at ``s_0 - 1`` (zero for a Dirichlet box).
    """

    sites: np.ndarray
    sign: np.ndarray
    logmag_phi: np.ndarray
    logU: np.ndarray
    anchor: int
    energy: object
    residual: float = math.nan
    phi_before: tuple = (0, -math.inf)
    ln_lambda: float | None = None
    flags: dict = field(default_factory=dict)

    @property
    def window(self):
        return int(self.sites[0]), int(self.sites[-1])

    def idx(self, site: int) -> int:
        i = int(site) - int(self.sites[0])
        if not 0 <= i < len(self.sites):
            raise InvalidArgument(f"site {site} outside profile window {self.window}")
        return i

    def log_phi_at(self, site: int) -> float:
        return float(self.logmag_phi[self.idx(site)])

    def logU_at(self, site: int) -> float:
        return float(self.logU[self.idx(site)])

    def phi_linear(self, shift: float | None = None) -> np.ndarray:
        """``phi`` as floats after subtracting ``shift`` (default: max log)."""
        if shift is None:
            shift = float(np.max(self.logmag_phi))
        with np.errstate(under="ignore"):
            return self.sign * np.exp(self.logmag_phi - shift)

    def restrict(self, lo: int, hi: int) -> "SolutionProfile":
        i, j = self.idx(lo), self.idx(hi) + 1
        before = (int(self.sign[i - 1]), float(self.logmag_phi[i - 1])) if i > 0 else self.phi_before
        return SolutionProfile(self.sites[i:j].copy(), self.sign[i:j].copy(), self.logmag_phi[i:j].copy(),
                               self.logU[i:j].copy(), self.anchor, self.energy, self.residual, before,
                               self.ln_lambda, dict(self.flags))

    def renormalized(self, site: int | None = None) -> "SolutionProfile":
        site = self.anchor if site is None else site
        sh = self.logU_at(site)
        return SolutionProfile(self.sites, self.sign, self.logmag_phi - sh, self.logU - sh, site, self.energy,
                               self.residual, (self.phi_before[0], self.phi_before[1] - sh), self.ln_lambda,
                               dict(self.flags))

    def recentered(self, site: int | None = None) -> "SolutionProfile":
        """Relabel sites so that ``site`` (default: the anchor) becomes 0."""
        site = self.anchor if site is None else int(site)
        return SolutionProfile(self.sites - site, self.sign, self.logmag_phi, self.logU, self.anchor - site,
                               self.energy, self.residual, self.phi_before, self.ln_lambda, dict(self.flags))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["site", "sign", "logmag_phi", "logU"])
            for s, sg, lp, lu in zip(self.sites, self.sign, self.logmag_phi, self.logU):
                w.writerow([int(s), int(sg), "%.17g" % lp, "%.17g" % lu])

    def metadata(self) -> dict:
        E = self.energy
        if isinstance(E, mpmath.mpf):
            e_str, prec = mpmath.nstr(E, 70, strip_zeros=False), "mpf"
        else:
            e_str, prec = repr(float(E)), "float64"
        return {"energy": e_str, "energy_precision": prec, "residual": self.residual,
                "anchor": int(self.anchor), "window": list(self.window), "flags": self.flags}

    def to_json(self) -> str:
        return json.dumps(self.metadata(), indent=2, default=str)


def _profile_from_logs(sites, sign, logs, before, anchor=None, **kw):
    prev_logs = np.concatenate(([before[1]], logs[:-1]))
    logU = _log_norm2(logs, prev_logs)
    if anchor is None:
        anchor = int(sites[int(np.argmax(logU))])
    sh = logU[anchor - int(sites[0])]
    return SolutionProfile(np.asarray(sites), np.asarray(sign, dtype=np.int8), logs - sh, logU - sh, anchor,
                           phi_before=(before[0], before[1] - sh), **kw)


def residual_of(V, E, sign, logs, before=(0, -math.inf), after=(0, -math.inf)) -> float:
    """Max relative defect of ``phi(n+1) + phi(n-1) + (V(n) - E) phi(n)``.

    Measured against the largest of the three magnitudes at each site.
    """
    s_prev = np.concatenate(([before[0]], sign[:-1]))
    l_prev = np.concatenate(([before[1]], logs[:-1]))
    s_next = np.concatenate((sign[1:], [after[0]]))
    l_next = np.concatenate((logs[1:], [after[1]]))
    ref = np.maximum(np.maximum(l_prev, logs), l_next)
    with np.errstate(under="ignore", invalid="ignore"):
        t = (s_next * np.exp(l_next - ref) + s_prev * np.exp(l_prev - ref)
             + (V - E) * sign * np.exp(logs - ref))
    t = np.where(np.isfinite(ref), t, 0.0)
    return float(np.max(np.abs(t)))


def _shoot(V, E):
    fs, fl = kernels.propagate(V, E, 0.0, 1.0, 0.0)
    bs, bl = kernels.propagate(V[::-1].copy(), E, 0.0, 1.0, 0.0)
    # fs[i]: phi(a+i), i = 0..n;  bs reversed: index i -> phi(a+i-1), i = 0..n
    return fs, fl, bs[::-1], bl[::-1]


def _glue_angle(V, E, c):
    """Signed sine of the angle between forward and backward data at ``c``."""
    fs, fl, bs, bl = _shoot(V, E)
    # forward: phi(a+c) = fs[c], phi(a+c+1) = fs[c+1]; backward: phi(a+c) = bs[c+1]
    f0, f1 = fl[c], fl[c + 1]
    b0, b1 = bl[c + 1], bl[c + 2]
    m = max(f0, f1)
    n = max(b0, b1)
    with np.errstate(under="ignore"):
        F = np.array([fs[c] * math.exp(f0 - m), fs[c + 1] * math.exp(f1 - m)])
        B = np.array([bs[c + 1] * math.exp(b0 - n), bs[c + 2] * math.exp(b1 - n)])
    w = F[0] * B[1] - F[1] * B[0]
    return w / (np.hypot(*F) * np.hypot(*B)), (fs, fl, bs, bl)


def _splice(fs, fl, bs, bl, c):
    """Forward data on ``[0, c]``, backward data on ``[c+1, n-1]`` rescaled to match."""
    n = len(fs) - 1
    # match on U(c+1) = (phi(c+1), phi(c))
    lf = _log_norm2(fl[c + 1], fl[c])
    lb = _log_norm2(bl[c + 2], bl[c + 1])
    dom = c + 1 if fl[c + 1] >= fl[c] else c
    rel = int(fs[dom]) * int(bs[dom + 1])
    sign = np.empty(n, dtype=np.int8)
    logs = np.empty(n)
    sign[:c + 1] = fs[:c + 1]
    logs[:c + 1] = fl[:c + 1]
    sign[c + 1:] = rel * bs[c + 2:n + 1]
    logs[c + 1:] = bl[c + 2:n + 1] + (lf - lb)
    return sign, logs


def eigenvector_profile(params: OperatorParams, box: BoxSpec, E=None, glue_site: int | None = None,
                        mismatch_tol: float = 1e-8):
    """Box eigenvector at (approximately) ``E`` by two-sided shooting.

    The glue site is the maximum of the dense eigenvector (re-chosen if the
    shot profile peaks elsewhere); ``E`` is refined by bisection on the sign
    of the glue Wronskian until the forward and backward data are parallel.
    """
    E_in = params.E if E is None else E
    E0 = float(E_in)
    V = potential_array(params, box.a, box.size)
    n = box.size
    if n < 3:
        raise InvalidArgument("box too small for shooting")
    if glue_site is None:
        w = eigh_tridiagonal(V, np.ones(n - 1), select="v",
                             select_range=(E0 - 1e-7 * max(1, abs(E0)), E0 + 1e-7 * max(1, abs(E0))))[1]
        if w.shape[1] == 0:
            raise InvalidArgument("E is not close to a box eigenvalue")
        c = int(np.argmax(np.abs(w[:, 0])))
    else:
        c = glue_site - box.a
    c = min(max(c, 1), n - 3)

    # bracket around E0 with a sign change of the glue Wronskian
    idx = int(kernels.sturm_count(V, E0 - 1e-9 * max(1, abs(E0))))
    pad = 1e-12 * max(1.0, abs(E0))
    lo, hi = E0 - pad, E0 + pad
    for _ in range(80):
        g_lo, _ = _glue_angle(V, lo, c)
        g_hi, _ = _glue_angle(V, hi, c)
        if g_lo * g_hi <= 0:
            break
        lo -= pad
        hi += pad
        pad *= 2
    else:
        raise IllConditionedEigenpair(math.inf)
    history = []
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g, _ = _glue_angle(V, mid, c)
        history.append(abs(g))
        if g == 0:
            lo = hi = mid
            break
        if (g > 0) == (g_lo > 0):
            lo, g_lo = mid, g
        else:
            hi = mid
    cands = [lo, hi]
    best = min(cands, key=lambda e: abs(_glue_angle(V, e, c)[0]))
    for _ in range(3):
        g, data = _glue_angle(V, best, c)
        sign, logs = _splice(*data, c)
        prev = np.concatenate(([-np.inf], logs[:-1]))
        c_new = int(np.argmax(_log_norm2(logs, prev))) - 1
        c_new = min(max(c_new, 1), n - 3)
        if abs(c_new - c) <= 1:
            break
        c = c_new
    mismatch = abs(g)
    if mismatch > 1e-6:
        raise IllConditionedEigenpair(mismatch)
    res = residual_of(V, best, sign, logs)
    energy = E_in if isinstance(E_in, mpmath.mpf) and lo <= float(E_in) <= hi else best
    neighbours = kernels.sturm_count(V, best + 1e-9) - kernels.sturm_count(V, best - 1e-9)
    prof = _profile_from_logs(np.arange(box.a, box.b + 1), sign, logs, (0, -math.inf), energy=energy,
                              residual=res, ln_lambda=params.ln_lambda)
    prof.flags.update({"glue_site": int(box.a + c), "mismatch": float(mismatch), "index": idx,
                       "near_degenerate": bool(neighbours > 1), "mismatch_history": history[-8:]})
    return prof


def eigenvector_profile_mp(params: OperatorParams, box: BoxSpec, index: int, prec: int | None = None):
    """Box eigenvector number ``index`` (0-based, ascending) in extended precision.

    For eigenvalues closer than float64 can separate (strongly resonant
    phases put two localized states within ``e^{-50}`` of each other).
    ``E`` is isolated by Sturm bisection and polished by inverse iteration
    with Rayleigh updates; the profile is spliced from two inward shots.
    """
    prec = prec or params.precision_bits
    n = box.size
    if not 0 <= index < n:
        raise InvalidArgument("eigenvalue index out of range")
    V = potential_array(params, box.a, n)
    Vmp = potential_mp(params, box.a, n, prec)
    e = eigh_tridiagonal(V, np.ones(n - 1), eigvals_only=True, select="i", select_range=(index, index))[0]
    pad = 1e-9 * max(1.0, abs(e))
    lo, hi = e - pad, e + pad
    for _ in range(60):
        if precision.mp_sturm_count(Vmp, lo, prec) <= index < precision.mp_sturm_count(Vmp, hi, prec):
            break
        lo, hi, pad = lo - pad, hi + pad, 2 * pad
    with mpmath.workprec(prec):
        tol = mpmath.mpf(2) ** -100 * max(1, abs(e))
    lo, hi = precision.mp_bisect_eigenvalue(Vmp, index, lo, hi, tol, prec)
    with mpmath.workprec(prec):
        x, E = precision.mp_inverse_iteration(Vmp, (lo + hi) / 2, prec)
        if not lo - tol <= E <= hi + tol:
            raise IllConditionedEigenpair(float(abs(E - (lo + hi) / 2)))
        c = int(np.argmax([abs(t) for t in x]))
    # the inverse-iteration vector only resolves ~prec bits below its peak;
    # tails come from inward shots (stable direction) glued at the peak
    c = min(max(c, 1), n - 2)
    fs, fl = precision.mp_shoot_logs(Vmp[:c + 1], E, prec)
    bs, bl = precision.mp_shoot_logs(Vmp[c:][::-1], E, prec)
    # fs[i] = phi_L(a+i) for i <= c+1;  bs[j] = phi_R(b-j) for j <= n-c
    sign = np.empty(n, dtype=np.int8)
    logs = np.empty(n)
    sign[:c + 1] = fs[:c + 1]
    logs[:c + 1] = fl[:c + 1]
    jc = n - 1 - c
    rel = int(fs[c]) * int(bs[jc])
    shift = fl[c] - bl[jc]
    right_s = np.array(bs[:jc][::-1], dtype=np.int8)
    right_l = np.array(bl[:jc][::-1])
    sign[c + 1:] = rel * right_s
    logs[c + 1:] = right_l + shift
    # mismatch: normalized Wronskian of the two shots across (c, c+1)
    with np.errstate(under="ignore"):
        m1 = max(fl[c], fl[c + 1])
        F = np.array([fs[c] * math.exp(fl[c] - m1), fs[c + 1] * math.exp(fl[c + 1] - m1)])
        m2 = max(bl[jc], bl[jc - 1])
        B = np.array([bs[jc] * math.exp(bl[jc] - m2), bs[jc - 1] * math.exp(bl[jc - 1] - m2)])
    mismatch = abs(F[0] * B[1] - F[1] * B[0]) / (np.hypot(*F) * np.hypot(*B))
    if mismatch > 1e-6:
        raise IllConditionedEigenpair(mismatch)
    res = residual_of(V, float(E), sign, logs)
    prof = _profile_from_logs(np.arange(box.a, box.b + 1), sign, logs, (0, -math.inf), energy=E,
                              residual=res, ln_lambda=params.ln_lambda)
    prof.flags.update({"index": int(index), "method": "mp-shoot", "precision_bits": int(prec),
                       "glue_site": int(box.a + c), "mismatch": float(mismatch)})
    return prof


def profiles_peaking_near(params: OperatorParams, box: BoxSpec, site: int, radius: int, method: str = "auto"):
    """Eigenvector profiles whose global ``||U||`` maximum is within ``radius`` of ``site``.

    Candidates are dense eigenvectors with weight at least 1e-3 of their
    maximum inside the radius (dense vectors of nearly degenerate pairs
    are mixtures, so their argmax is not trusted).  ``method``: ``'shoot'``,
    ``'mp'``, or ``'auto'`` (shooting, extended precision when the pair is
    near-degenerate or shooting fails).  Sorted by energy.
    """
    E, W = dense_eigenpairs(params, box)
    lo, hi = site - radius - box.a, site + radius - box.a
    lo, hi = max(lo, 0), min(hi, box.size - 1)
    A = np.abs(W)
    near = A[lo:hi + 1].max(axis=0) >= 1e-3 * A.max(axis=0)
    out = []
    for i in np.nonzero(near)[0]:
        i = int(i)
        gap = min(abs(E[i] - E[i - 1]) if i > 0 else np.inf, abs(E[i + 1] - E[i]) if i + 1 < len(E) else np.inf)
        prof = None
        if method == "shoot" or (method == "auto" and gap > 1e-9 * max(1.0, abs(E[i]))):
            try:
                prof = eigenvector_profile(params, box, float(E[i]))
            except IllConditionedEigenpair:
                if method == "shoot":
                    raise
        if prof is None:
            prof = eigenvector_profile_mp(params, box, i)
        prof.flags["dense_index"] = i
        if abs(prof.anchor - site) <= radius:
            out.append(prof)
    return sorted(out, key=lambda p: float(p.energy))


def dense_eigenpairs(params: OperatorParams, box: BoxSpec, window=None):
    """Dense float64 eigenpairs ``(E, vectors)`` of the box (vectors in columns)."""
    V = potential_array(params, box.a, box.size)
    if box.size == 1:
        return np.array([V[0]]), np.ones((1, 1))
    if window is None:
        return eigh_tridiagonal(V, np.ones(box.size - 1))
    return eigh_tridiagonal(V, np.ones(box.size - 1), select="v", select_range=tuple(window))


def eigenvalues_centered_near(params: OperatorParams, box: BoxSpec, site: int, radius: int):
    """Dense eigenvalues whose eigenvector peaks within ``radius`` of ``site``."""
    E, W = dense_eigenpairs(params, box)
    peaks = np.argmax(np.abs(W), axis=0) + box.a
    sel = np.nonzero(np.abs(peaks - site) <= radius)[0]
    return [(float(E[i]), int(peaks[i])) for i in sel]


def solution_profile(params: OperatorParams, U0: LogVec2, N: int, E=None) -> SolutionProfile:
    """Propagate ``U(0) = (phi(0), phi(-1))`` to all ``|l| <= N``.

    Gives a generally growing solution; ``logU`` keeps the scale of ``U0``.
    """
    E = float(params.E if E is None else E)
    p0, pm1 = float(U0.v[0]), float(U0.v[1])
    fs, fl = kernels.propagate(potential_array(params, 0, N), E, pm1, p0, U0.log_scale)
    # fs/fl: phi(0..N)
    Vb = potential_array(params, -N, N)[::-1].copy()  # V(-1), ..., V(-N)
    bs, bl = kernels.propagate(Vb, E, p0, pm1, U0.log_scale)
    # bs/bl: phi(-1), ..., phi(-N-1)
    sign = np.concatenate((bs[::-1], fs[:N]))  # sites -N-1 .. N-1
    logs = np.concatenate((bl[::-1], fl[:N]))
    sign = np.concatenate((sign, fs[N:N + 1]))  # ... N
    logs = np.concatenate((logs, fl[N:N + 1]))
    sites = np.arange(-N - 1, N + 1)
    prev = np.concatenate(([-np.inf], logs[:-1]))
    logU = _log_norm2(logs, prev)
    Vfull = potential_array(params, -N - 1, 2 * N + 2)
    res = residual_of(Vfull[1:-1], E, sign[1:-1], logs[1:-1], (int(sign[0]), logs[0]), (int(sign[-1]), logs[-1]))
    return SolutionProfile(sites[1:], sign[1:], logs[1:], logU[1:], 0, E, res, (int(sign[0]), float(logs[0])),
                           params.ln_lambda)
