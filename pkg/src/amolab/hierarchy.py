"""Local maxima and the reflective hierarchy of an eigenfunction profile.

Positions are predicted at ``k0 + K_{j0} - K_{j1} + K_{j2} - ...`` with
``K`` the resonances of the phase seen from the global maximum ``k0``;
around each node the profile should follow ``f`` with the argument
reflected at every other level.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter1d

from .arithmetic import PhaseScan, ResonanceSequence, _frequency, _theta_value
from .asymptotics import f_log
from .eigensolve import SolutionProfile
from .errors import CoverageError, InvalidArgument

DEFAULT_C = 3.0
DEFAULT_C0 = 3.0


def profile_from_logU(sites, logU, anchor: int | None = None) -> SolutionProfile:
    """Wrap a bare ``logU`` array (e.g. a synthetic envelope) as a profile."""
    sites = np.asarray(sites, dtype=np.int64)
    logU = np.asarray(logU, dtype=float)
    if anchor is None:
        anchor = int(sites[int(np.argmax(logU))])
    return SolutionProfile(sites, np.ones(len(sites), dtype=np.int8), logU.copy(), logU.copy(), anchor, None)


def local_k_maxima(profile, K: int, search=None) -> list:
    """Sites ``b`` in the search window with ``logU(b) >= logU(b + t)`` for ``|t| <= K``.

    The default search window is the profile window shrunk by ``K``. On a
    plateau of equal qualifying values only the leftmost site is returned.
    """
    if K < 1:
        raise InvalidArgument("K must be >= 1")
    lo, hi = profile.window
    if search is None:
        search = (lo + K, hi - K)
    a, b = int(search[0]), int(search[1])
    if a < lo + K or b > hi - K:
        raise InvalidArgument("search window must lie inside the profile window shrunk by K")
    if a > b:
        return []
    u = np.asarray(profile.logU, dtype=float)
    mx = maximum_filter1d(u, size=2 * K + 1, mode="nearest")
    i0, i1 = a - lo, b - lo
    out = []
    prev = None
    for i in range(i0, i1 + 1):
        if u[i] >= mx[i]:
            if prev is not None and prev == i - 1 and u[i] == u[prev]:
                prev = i
                continue
            out.append(int(profile.sites[i]))
            prev = i
        else:
            prev = None
    return out


def is_local_max(profile, b: int, K: int) -> bool:
    """Re-check the definition at a single site."""
    i = profile.idx(b)
    u = profile.logU
    lo, hi = max(0, i - K), min(len(u), i + K + 1)
    return bool(u[i] >= np.max(u[lo:hi]))


@dataclass
class LocalMaximum:
    position: int | None
    window: int
    depth: int
    index_path: tuple
    resonance_path: tuple
    predicted: int
    deviation: int | None
    search_radius: int
    status: str = "found"  # found | missing | untestable | inadmissible
    similarity: dict | None = None
    children: list = field(default_factory=list)

    @property
    def s(self) -> int:
        return self.depth - 1

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k != "children"}
        d["index_path"] = list(self.index_path)
        d["resonance_path"] = list(self.resonance_path)
        d["children"] = [c.to_dict() for c in self.children]
        return d


@dataclass
class HierarchyReport:
    root: int
    K_hat: int
    varsigma: float
    ln_lambda: float
    C: float
    resonances: tuple
    nodes: list
    untestable: list = field(default_factory=list)

    def iter_nodes(self):
        stack = list(reversed(self.nodes))
        while stack:
            n = stack.pop()
            yield n
            stack.extend(reversed(n.children))

    def found(self):
        return [n for n in self.iter_nodes() if n.status == "found"]

    def deviations_within_bound(self) -> bool:
        return all(n.deviation <= self.K_hat ** n.depth for n in self.found())

    def to_dict(self):
        return {"root": self.root, "K_hat_est": self.K_hat, "varsigma": self.varsigma,
                "ln_lambda": self.ln_lambda, "C": self.C,
                "resonances": [list(r) for r in self.resonances],
                "nodes": [n.to_dict() for n in self.nodes],
                "untestable": [list(p) for p in self.untestable]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["depth", "path", "predicted", "found", "deviation", "max_deviation", "status"])
            for n in self.iter_nodes():
                md = n.similarity.get("max_deviation") if n.similarity else None
                w.writerow([n.depth, " ".join(str(k) for k in n.resonance_path), n.predicted,
                            "" if n.position is None else n.position,
                            "" if n.deviation is None else n.deviation,
                            "" if md is None else "%.17g" % md, n.status])


def _best_max(profile, center: int, radius: int, K: int):
    """Largest local ``K``-maximum within ``radius`` of ``center`` (or None)."""
    lo, hi = profile.window
    a, b = max(center - radius, lo + K), min(center + radius, hi - K)
    if a > b:
        return None
    cands = local_k_maxima(profile, K, (a, b))
    if not cands:
        return None
    # highest value, then closest to the prediction, then leftmost
    return min(cands, key=lambda x: (-profile.logU_at(x), abs(x - center), x))


def _windows(K: int, varsigma: float, L: float):
    det = max(1, int(math.floor(varsigma / (2 * L) * abs(K))))
    sim = int(math.floor(varsigma / (4 * L) * abs(K)))
    return det, sim


def build_hierarchy(profile, resonances: ResonanceSequence, alpha, theta, ln_lambda: float,
                    max_depth: int = 2, varsigma: float | None = None, C: float = DEFAULT_C,
                    epsilon: float = 0.15, C0: float = DEFAULT_C0, K_hat: int | None = None,
                    strict: bool = False) -> HierarchyReport:
    """Locate the nodes ``b_{j0..js}`` and score reflected similarity around each.

    ``resonances`` are measured for ``(alpha, theta)`` from the origin; they
    are re-expressed from the anchor ``k0`` as ``K = k - 2 k0``.  Depth-1
    nodes are searched within their detection window; ``K_hat`` (if not
    given) is the smallest integer >= 2 bounding every depth-1 deviation and
    then fixes the search radius ``K_hat^depth`` of deeper levels.
    """
    if max_depth < 0:
        raise InvalidArgument("max_depth must be >= 0")
    k0 = int(profile.anchor)
    L = float(ln_lambda)
    if varsigma is None:
        varsigma = resonances.threshold
    lo, hi = profile.window
    shifted = sorted(((k - 2 * k0, s) for k, s in resonances.entries), key=lambda e: (abs(e[0]), -e[0]))
    Ks = [k for k, _ in shifted]
    th_prime = _theta_value(theta) + k0 * _frequency(alpha).value
    scan_radius = 2 * max(hi - lo, 1)
    scan = PhaseScan(_frequency(alpha), th_prime, scan_radius)

    nodes = {}
    untestable = []
    # depth 1
    dev1 = []
    for j in range(len(Ks)):
        det, _ = _windows(Ks[j], varsigma, L)
        pred = k0 + Ks[j]
        if not (lo + det <= pred <= hi - det):
            untestable.append((j,))
            continue
        b = _best_max(profile, pred, det, det)
        node = LocalMaximum(b, det, 1, (j,), (Ks[j],), pred, None if b is None else abs(b - pred), det)
        if b is None:
            node.status = "missing"
        else:
            dev1.append(abs(b - pred))
        nodes[(j,)] = node
    if K_hat is None:
        K_hat = 2
        while any(d > K_hat for d in dev1):
            K_hat += 1

    # deeper levels: paths j0 > j1 > ... > j_s
    for depth in range(2, max_depth + 1):
        for path in itertools.combinations(range(len(Ks) - 1, -1, -1), depth):
            parent = nodes.get(path[:-1])
            if parent is None or parent.status != "found":
                continue
            j = path[-1]
            if abs(Ks[j]) < K_hat ** depth:
                nodes[path] = LocalMaximum(None, 0, depth, path, tuple(Ks[i] for i in path), 0, None, 0, "inadmissible")
                continue
            det, _ = _windows(Ks[j], varsigma, L)
            pred = k0 + sum((-1) ** i * Ks[p] for i, p in enumerate(path))
            radius = K_hat ** depth
            if not (lo + det <= pred <= hi - det) or abs(pred - parent.position) > parent.window:
                untestable.append(path)
                continue
            b = _best_max(profile, pred, radius, det)
            node = LocalMaximum(b, det, depth, path, tuple(Ks[i] for i in path), pred,
                                None if b is None else abs(b - pred), radius)
            if b is None:
                node.status = "missing"
            nodes[path] = node

    if strict and untestable:
        raise CoverageError(untestable)

    for path, node in nodes.items():
        if node.status == "found":
            node.similarity = reflective_similarity(profile, node, scan, L, epsilon, varsigma, K_hat, C, C0)
    # assemble tree (sorted for deterministic output)
    roots = []
    for path in sorted(nodes, key=lambda p: (len(p), [-i for i in p])):
        node = nodes[path]
        if len(path) == 1:
            roots.append(node)
        elif path[:-1] in nodes:
            nodes[path[:-1]].children.append(node)
    return HierarchyReport(k0, int(K_hat), float(varsigma), L, float(C), tuple(shifted), roots, untestable)


def similarity_range(node: LocalMaximum, varsigma: float, ln_lambda: float, K_hat: int, C: float = DEFAULT_C):
    """Admissible ``(x_min, x_max)`` for the similarity test at a node."""
    _, sim = _windows(node.resonance_path[-1], varsigma, ln_lambda)
    return int(math.ceil(C * K_hat ** node.depth)), sim


def reflective_similarity(profile, node: LocalMaximum, f_source, ln_lambda: float, epsilon: float = 0.15,
                          varsigma: float = 0.4, K_hat: int = 2, C: float = DEFAULT_C, C0: float = DEFAULT_C0):
    """Score ``D(x) = [logU(b + x) - logU(b)] - log f(sign x)`` over the admissible range.

    ``f_source`` is a ``PhaseScan`` for the anchor-frame phase (used to get
    ``x0``, ``eta`` per argument) or any callable ``ell -> log f(ell)``.
    The predicted sign is ``(-1)^depth``; both signs are scored and the
    result records whether the predicted one fits at least as well.  Pass
    iff ``|D(x)| <= eps|x| + C0`` throughout.  An empty range returns
    ``status='empty-range'`` and ``pass`` None.
    """
    xmin, xmax = similarity_range(node, varsigma, ln_lambda, K_hat, C)
    if callable(f_source) and not isinstance(f_source, PhaseScan):
        flog = f_source
    else:
        def flog(ell):
            x0, eta, _ = f_source.x0_eta(int(ell))
            return f_log(x0, eta, ln_lambda, int(ell))
    out = {"x_range": [xmin, xmax], "epsilon": epsilon, "C0": C0}
    lo, hi = profile.window
    b = node.position
    xs = [x for x in range(-xmax, xmax + 1) if abs(x) >= xmin and lo <= b + x <= hi]
    if xmin > xmax or not xs:
        out.update(status="empty-range", max_deviation=None, excess=None, passed=None,
                   predicted_sign=(-1) ** node.depth, sign_wins=None)
        return out
    xs = np.array(xs)
    base = profile.logU_at(b)
    meas = np.array([profile.logU_at(b + int(x)) for x in xs]) - base
    sign = (-1) ** node.depth

    def score(sg):
        model = np.array([flog(sg * int(x)) for x in xs])
        d = meas - model
        return float(np.max(np.abs(d))), float(np.max(np.abs(d) - epsilon * np.abs(xs)))

    md, exc = score(sign)
    md_other, exc_other = score(-sign)
    out.update(status="tested", max_deviation=md, excess=exc, passed=bool(exc <= C0),
               predicted_sign=sign, other_sign_deviation=md_other,
               sign_wins=bool(md <= md_other), sign_discriminating=bool(abs(md - md_other) > 1e-9))
    return out
