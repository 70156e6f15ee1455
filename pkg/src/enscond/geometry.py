"""Volumes, vertices and barycenters of the two-slab polytopes.

For a point ``w = (u, v)`` of the cone the polytope lives in the coordinates
``s_i >= 0`` indexed by the free pairs ``i = 3..n`` and is cut out by

    l1(s) = sum (1 - 1/mu_i) s_i   <= u - v
    l2(s) = sum (1 - mu_2/mu_i) s_i >= u - mu_2 v.

Removing one free index gives the reduced polytope used for barycenters.
Both are instances of one *family*: a tuple of free eigenvalues (all larger
than ``mu_2``) together with ``mu_2``. Every evaluation works at the
normalized point ``(x, 1)`` with ``x = u/v`` and rescales by homogeneity.

Within each sector the vertex structure is fixed, so the vertex coordinates
are linear maps of ``(x, 1)``. The vertex-sum (Lawrence) formula is set up
once per sector and cached; evaluating it amounts to a few small matrix
products, vectorized over many ``x`` at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import streams
from .errors import DegenerateFunctional, NumericalDegeneracy, OutsideCone, WrongSector
from .spectrum import Spectrum

RAY_TOL = 1e-12
APEX_V = 1e-300
_F_REDRAWS = 64
_GAMMA_FLOOR = 1e-8


# ----------------------------------------------------------------------------
# public value types


@dataclass(frozen=True)
class ConePoint:
    u: float
    v: float

    @property
    def ratio(self) -> float:
        return self.u / self.v


@dataclass(frozen=True)
class SectorLocation:
    """``kind`` is ``"interior"`` (index m), ``"ray"`` (index i) or ``"apex"``."""

    kind: str
    index: int = 0

    def label(self) -> str:
        if self.kind == "interior":
            return f"D{self.index}"
        if self.kind == "ray":
            return f"R{self.index}"
        return "apex"


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    method: str
    hits: int | None = None


@dataclass(frozen=True)
class Vertex:
    point: np.ndarray
    kind: str  # "t1", "t2" or "sigma"
    indices: tuple[int, ...]  # pair indices (j,) or (i, j)
    active: tuple[str, ...]  # saturated constraints: "l1", "l2", "s<k>"


@dataclass(frozen=True)
class PolytopeVertexSet:
    free: tuple[int, ...]
    vertices: tuple[Vertex, ...]
    t1: dict
    t2: dict
    alpha: dict
    beta: dict


def as_point(w) -> ConePoint:
    if isinstance(w, ConePoint):
        return w
    u, v = w
    return ConePoint(float(u), float(v))


# ----------------------------------------------------------------------------
# sector classification


def locate_sector(s: Spectrum, w, tol: float = RAY_TOL) -> SectorLocation:
    w = as_point(w)
    u, v = w.u, w.v
    scale = max(abs(u), abs(v))
    if u == 0.0 and v == 0.0:
        return SectorLocation("apex")
    if v < -tol * scale or u < v - tol * scale or u > s.lam_max * v + tol * scale:
        raise OutsideCone(f"({u}, {v}) is outside the cone")
    for i, m in enumerate(s.mu, start=1):
        if abs(u - m * v) <= tol * u:
            return SectorLocation("ray", i)
    x = u / v
    m = int(np.searchsorted(s.mu_arr, x))  # mu[m-1] < x < mu[m] (0-based)
    return SectorLocation("interior", m + 1)


def in_cone(s: Spectrum, w, tol: float = 0.0) -> bool:
    w = as_point(w)
    scale = max(abs(w.u), abs(w.v))
    return w.v >= -tol * scale and w.v - tol * scale <= w.u <= s.lam_max * w.v + tol * scale


# ----------------------------------------------------------------------------
# the slab family and its vertex-sum structures


def _family(s: Spectrum, drop: int | None = None) -> tuple[tuple[float, ...], float, tuple[int, ...]]:
    labels = tuple(i for i in range(3, s.n + 1) if i != drop)
    return tuple(s.mu[i - 1] for i in labels), s.mu[1], labels


class _VertexSum:
    """Cached vertex-sum formula for one sector of one family.

    ``P`` maps ``(x, 1)`` to vertex coordinates (shape ``(V, d, 2)``) and
    ``coef`` holds ``1 / (|det A| * prod(A^{-1} f))`` per vertex.
    """

    def __init__(self, P, coef, f, tags, active):
        self.P = P
        self.coef = coef
        self.f = f
        self.tags = tags
        self.active = active
        self.d = P.shape[1]
        self._norm = 1.0 / math.factorial(self.d)

    def vertices(self, x: np.ndarray) -> np.ndarray:
        W = np.stack([x, np.ones_like(x)], axis=-1)
        return np.einsum("vdk,mk->mvd", self.P, W)

    def volume(self, x: np.ndarray) -> np.ndarray:
        verts = self.vertices(x)
        centred = verts - verts.mean(axis=1, keepdims=True)
        proj = centred @ self.f
        return (proj**self.d) @ self.coef * self._norm


def _vertex_structure(mf: np.ndarray, mu2: float, n_low: int | None):
    """Vertices (as linear maps), tags and active constraint columns.

    ``n_low is None`` is the low sector ``1 <= x <= mu_2`` (a simplex with a
    vertex at the origin). Otherwise the first ``n_low`` free indices lie below
    the ratio and the rest above it.
    """
    d = len(mf)
    c1 = 1.0 - 1.0 / mf
    c2 = 1.0 - mu2 / mf
    pos = lambda skip: [2 + k for k in range(d) if k not in skip]  # noqa: E731
    maps, tags, active = [], [], []
    if n_low is None:
        maps.append(np.zeros((d, 2)))
        tags.append(("origin", ()))
        active.append(pos(()))
        for j in range(d):
            P = np.zeros((d, 2))
            P[j] = (1.0 / c1[j], -1.0 / c1[j])
            maps.append(P)
            tags.append(("t1", (j,)))
            active.append([0] + pos((j,)))
    else:
        high = range(n_low, d)
        for j in high:
            P = np.zeros((d, 2))
            P[j] = (1.0 / c1[j], -1.0 / c1[j])
            maps.append(P)
            tags.append(("t1", (j,)))
            active.append([0] + pos((j,)))
        for j in high:
            P = np.zeros((d, 2))
            P[j] = (1.0 / c2[j], -mu2 / c2[j])
            maps.append(P)
            tags.append(("t2", (j,)))
            active.append([1] + pos((j,)))
        for i in range(n_low):
            for j in high:
                P = np.zeros((d, 2))
                gap = 1.0 / mf[i] - 1.0 / mf[j]
                P[i] = (-1.0 / mf[j] / gap, 1.0 / gap)
                P[j] = (1.0 / mf[i] / gap, -1.0 / gap)
                maps.append(P)
                tags.append(("sigma", (i, j)))
                active.append([0, 1] + pos((i, j)))
    cols = np.zeros((d, d + 2))
    cols[:, 0] = c1
    cols[:, 1] = -c2
    cols[np.arange(d), 2 + np.arange(d)] = -1.0
    return np.array(maps), tags, [cols[:, a] for a in active]


@lru_cache(maxsize=4096)
def _vertex_sum(mf: tuple[float, ...], mu2: float, n_low: int | None, f_seed: int) -> _VertexSum:
    mfa = np.asarray(mf, dtype=float)
    d = len(mf)
    P, tags, mats = _vertex_structure(mfa, mu2, n_low)
    dets = np.array([abs(np.linalg.det(A)) for A in mats])
    key = -1 if n_low is None else n_low
    # conditioning probe at the sector midpoint
    lo = 1.0 if n_low is None else (mu2 if n_low == 0 else mfa[n_low - 1])
    hi = mu2 if n_low is None else mfa[n_low]
    probe = np.einsum("vdk,k->vd", P, np.array([0.5 * (lo + hi), 1.0]))
    probe -= probe.mean(axis=0)
    rng = streams.generator(f_seed, f"lawrence-functional/{d}/{key}")
    best, best_score = None, np.inf
    for _ in range(_F_REDRAWS):
        f = rng.standard_normal(d)
        f /= np.linalg.norm(f)
        gammas = np.array([np.linalg.solve(A, f) for A in mats])
        if np.min(np.abs(gammas)) < _GAMMA_FLOOR:
            continue
        coef = 1.0 / (dets * np.prod(gammas, axis=1))
        terms = coef * (probe @ f) ** d
        score = np.abs(terms).sum() / abs(terms.sum())
        if score < best_score:
            best, best_score = (f, coef), score
    if best is not None:
        return _VertexSum(P, best[1], best[0], tags, mats)
    raise DegenerateFunctional(f"no generic functional after {_F_REDRAWS} draws (d={d})")


# ----------------------------------------------------------------------------
# family volume at normalized points (x, 1)


def _closed_form(mfa: np.ndarray, mu2: float, x: np.ndarray) -> np.ndarray:
    """Exact volume for ``1 <= x <= min(free)``."""
    d = len(mfa)
    c1 = np.prod(1.0 - 1.0 / mfa)
    A = x - 1.0
    val = A**d / c1
    upper = x > mu2
    if np.any(upper):
        c2 = np.prod(1.0 - mu2 / mfa)
        B = np.where(upper, x - mu2, 0.0)
        val = val - np.where(upper, B**d / c2, 0.0)
    return val / math.factorial(d)


def family_volume(mf: tuple[float, ...], mu2: float, x, *, dispatch: bool = True, f_seed: int = 0) -> np.ndarray:
    """Volume of the family polytope at ``(x, 1)``, vectorized over ``x``.

    With ``dispatch`` the low sectors use the closed forms; otherwise the
    vertex-sum formula is used everywhere (for cross-checking).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    d = len(mf)
    mfa = np.asarray(mf, dtype=float)
    if d == 0:
        out[(x >= 1.0) & (x <= mu2)] = 1.0
        return out
    live = (x >= 1.0) & (x <= mfa[-1])
    if not np.any(live):
        return out
    n_low = np.searchsorted(mfa, x, side="left")
    code = np.where(x <= mu2, -1, n_low)
    code[~live] = -2
    if dispatch:
        easy = live & (x <= mfa[0])
        out[easy] = _closed_form(mfa, mu2, x[easy])
        code[easy] = -2
    for c in np.unique(code):
        if c == -2:
            continue
        sel = code == c
        vs = _vertex_sum(tuple(mf), float(mu2), None if c == -1 else int(c), f_seed)
        out[sel] = vs.volume(x[sel])
    return np.maximum(out, 0.0)


def _scaled_volume(mf, mu2, u: float, v: float, **kw) -> float:
    d = len(mf)
    if v < APEX_V:
        return 0.0
    return float(family_volume(mf, mu2, u / v, **kw)[0]) * v**d


def _check_cone(s: Spectrum, w: ConePoint) -> None:
    if not in_cone(s, w, RAY_TOL):
        raise OutsideCone(f"({w.u}, {w.v}) is outside the cone")


# ----------------------------------------------------------------------------
# public volume operations


def t_values(s: Spectrum, w) -> tuple[dict, dict]:
    """Axis intercepts of the two slab planes, keyed by pair index."""
    w = as_point(w)
    t1, t2 = {}, {}
    for i in range(3, s.n + 1):
        m = s.mu[i - 1]
        t1[i] = (w.u - w.v) / (1.0 - 1.0 / m)
        t2[i] = (w.u - s.mu[1] * w.v) / (1.0 - s.mu[1] / m)
    return t1, t2


def vertex_set(s: Spectrum, w) -> PolytopeVertexSet:
    w = as_point(w)
    loc = locate_sector(s, w)
    if loc.kind != "interior":
        raise WrongSector(f"vertex_set needs an open sector, got {loc.label()}")
    m = loc.index
    if m <= 3:
        raise WrongSector(f"vertex classes differ in sector D{m}; use the closed forms")
    mf, mu2, labels = _family(s)
    P, tags, _ = _vertex_structure(np.asarray(mf), mu2, m - 3)
    uv = np.array([w.u, w.v])
    t1, t2 = t_values(s, w)
    alpha, beta, verts = {}, {}, []
    for Pk, (kind, idx) in zip(P, tags):
        pt = Pk @ uv
        lab = tuple(labels[k] for k in idx)
        if kind == "t1":
            act = ("l1",) + tuple(f"s{labels[k]}" for k in range(len(mf)) if k not in idx)
        elif kind == "t2":
            act = ("l2",) + tuple(f"s{labels[k]}" for k in range(len(mf)) if k not in idx)
        else:
            i, j = lab
            alpha[(i, j)] = float(pt[idx[0]])
            beta[(j, i)] = float(pt[idx[1]])
            act = ("l1", "l2") + tuple(f"s{labels[k]}" for k in range(len(mf)) if k not in idx)
        verts.append(Vertex(pt, kind, lab, act))
    high = [i for i in labels if s.mu[i - 1] > w.ratio]
    return PolytopeVertexSet(
        free=labels,
        vertices=tuple(verts),
        t1={j: t1[j] for j in high},
        t2={j: t2[j] for j in high},
        alpha=alpha,
        beta=beta,
    )


def volume_closed_form(s: Spectrum, w) -> VolumeEstimate:
    w = as_point(w)
    _check_cone(s, w)
    if w.v >= APEX_V and w.u > s.mu[2] * w.v * (1.0 + RAY_TOL):
        raise WrongSector("closed forms apply only on the closures of D2 and D3")
    mf, mu2, _ = _family(s)
    if w.v < APEX_V:
        return VolumeEstimate(0.0, 0.0, "closed-form")
    x = np.array([min(w.ratio, s.mu[2])])
    val = float(np.maximum(_closed_form(np.asarray(mf), mu2, np.maximum(x, 1.0)), 0.0)[0])
    return VolumeEstimate(val * w.v ** len(mf), 0.0, "closed-form")


def volume_lawrence(s: Spectrum, w, *, f_seed: int = 0, dispatch: bool = True) -> VolumeEstimate:
    """Exact volume via the vertex-sum formula.

    In the two lowest sectors this defers to the closed forms unless
    ``dispatch=False``, which forces the vertex sum (useful as a check).
    """
    w = as_point(w)
    _check_cone(s, w)
    mf, mu2, _ = _family(s)
    val = _scaled_volume(mf, mu2, w.u, w.v, dispatch=dispatch, f_seed=f_seed)
    closed = dispatch and w.v >= APEX_V and w.ratio <= s.mu[2]
    return VolumeEstimate(val, 0.0, "closed-form" if closed else "lawrence")


def volume(s: Spectrum, w) -> float:
    return volume_lawrence(s, w).value


def reduced_volume(s: Spectrum, i0: int, w, *, f_seed: int = 0) -> VolumeEstimate:
    """Volume of the polytope with free index ``i0`` removed."""
    if not 3 <= i0 <= s.n:
        raise WrongSector(f"reduced index must be in 3..{s.n}, got {i0}")
    w = as_point(w)
    if not in_cone(s, w):
        return VolumeEstimate(0.0, 0.0, "closed-form")
    mf, mu2, _ = _family(s, drop=i0)
    val = _scaled_volume(mf, mu2, w.u, w.v, f_seed=f_seed)
    method = "interval" if len(mf) == 1 else "lawrence"
    return VolumeEstimate(val, 0.0, method)


# ----------------------------------------------------------------------------
# Monte Carlo oracles


def _box_samples(s: Spectrum, w: ConePoint, samples: int, seed: int, purpose: str, chunk: int):
    mf, mu2, _ = _family(s)
    mfa = np.asarray(mf)
    c1 = 1.0 - 1.0 / mfa
    c2 = 1.0 - mu2 / mfa
    box = (w.u - w.v) / c1
    rng = streams.generator(seed, purpose)
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        pts = rng.random((k, len(mf))) * box
        inside = (pts @ c1 <= w.u - w.v) & (pts @ c2 >= w.u - mu2 * w.v)
        yield pts, inside, box
        done += k


def volume_mc(s: Spectrum, w, samples: int, seed: int = 0, chunk: int = 1 << 18) -> VolumeEstimate:
    """Rejection-sampling estimate from uniform draws in the bounding box."""
    w = as_point(w)
    _check_cone(s, w)
    if w.u - w.v <= 0.0:
        return VolumeEstimate(0.0, 0.0, "rejection-MC")
    hits, box_vol = 0, 0.0
    for _, inside, box in _box_samples(s, w, samples, seed, "volume-mc", chunk):
        hits += int(inside.sum())
        box_vol = float(np.prod(box))
    p = hits / samples
    # Laplace estimate of the hit rate keeps the stderr nonzero at zero hits
    pt = (hits + 1.0) / (samples + 2.0)
    return VolumeEstimate(box_vol * p, box_vol * math.sqrt(pt * (1.0 - pt) / samples), "rejection-MC", hits)


def barycenter_mc(s: Spectrum, w, samples: int, seed: int = 0, chunk: int = 1 << 18):
    """Mean and standard error of uniform rejection samples in the polytope."""
    w = as_point(w)
    total, total_sq, hits = 0.0, 0.0, 0
    for pts, inside, _ in _box_samples(s, w, samples, seed, "barycenter-mc", chunk):
        kept = pts[inside]
        total = total + kept.sum(axis=0)
        total_sq = total_sq + (kept**2).sum(axis=0)
        hits += len(kept)
    if hits < 2:
        raise NumericalDegeneracy("too few accepted samples for a barycenter estimate")
    mean = total / hits
    var = total_sq / hits - mean**2
    return mean, np.sqrt(np.maximum(var, 0.0) / hits), hits


# ----------------------------------------------------------------------------
# barycenter by piecewise-exact quadrature


@lru_cache(maxsize=64)
def _gauss(k: int):
    return np.polynomial.legendre.leggauss(k)


def _moments_along(mf_red, mu2, mu_i0: float, x: float, order: int):
    """Integrals of ``V_red`` and ``t * V_red`` along the moving point.

    The point ``(x - t, 1 - t/mu_i0)`` crosses a sector boundary of the
    reduced family at finitely many ``t``; on each piece the integrand is a
    polynomial, integrated exactly by ``order``-node Gauss-Legendre.
    """
    t_end = min(x, mu_i0)
    cuts = [0.0, t_end]
    for r in (1.0, mu2, *mf_red):
        if r == mu_i0:
            continue
        t = (x - r) / (1.0 - r / mu_i0)
        # crossings that coincide with an end point (up to rounding) are dropped
        if 1e-12 * t_end < t < t_end * (1.0 - 1e-12):
            cuts.append(t)
    cuts = np.unique(cuts)
    nodes, weights = _gauss(order)
    lo, hi = cuts[:-1, None], cuts[1:, None]
    half = 0.5 * (hi - lo)
    t = (lo + half * (nodes + 1.0)).ravel()
    wts = (half * weights).ravel()
    vp = 1.0 - t / mu_i0
    up = x - t
    ok = vp > 0.0
    ratio = np.where(ok, up / np.where(ok, vp, 1.0), 0.0)
    vol = np.where(ok, family_volume(mf_red, mu2, ratio) * vp ** len(mf_red), 0.0)
    return float(wts @ vol), float(wts @ (t * vol))


def quadrature_order(n: int) -> int:
    return (n - 1) // 2 + 1  # ceil((n-2)/2) + 1


def barycenter(s: Spectrum, w) -> np.ndarray:
    """Barycenter coordinates for the free pairs ``3..n`` (array of length n-2)."""
    w = as_point(w)
    _check_cone(s, w)
    if w.v < APEX_V or not (w.v < w.u < s.lam_max * w.v):
        raise OutsideCone("barycenter needs a strictly interior point")
    x = w.ratio
    mf, mu2, labels = _family(s)
    vol = float(family_volume(mf, mu2, x)[0])
    if not vol > 1e-280:
        raise NumericalDegeneracy(f"volume underflow at ratio {x!r}")
    order = quadrature_order(s.n)
    out = np.empty(len(labels))
    for k, i0 in enumerate(labels):
        mf_red, _, _ = _family(s, drop=i0)
        _, first = _moments_along(mf_red, mu2, s.mu[i0 - 1], x, order)
        out[k] = first / vol
    return out * w.v


def slice_integral(s: Spectrum, i0: int, w) -> float:
    """Integral of the reduced volume along the moving point (consistency check)."""
    w = as_point(w)
    mf_red, mu2, _ = _family(s, drop=i0)
    zero, _ = _moments_along(mf_red, mu2, s.mu[i0 - 1], w.ratio, quadrature_order(s.n))
    return zero * w.v ** (s.n - 2)


def simplex_barycenter(s: Spectrum, w) -> np.ndarray:
    """Exact barycenter on the top sector, where the polytope is a simplex.

    There the vertices are ``t1_n e_n``, ``t2_n e_n`` and the two-plane
    vertices joining each lower free index with ``n``; the barycenter is their
    mean. Evaluated from ``g = mu_n v - u`` directly to keep full relative
    precision as the simplex shrinks.
    """
    w = as_point(w)
    mu = s.mu_arr
    mun, mu2 = mu[-1], mu[1]
    g = mun * w.v - w.u
    out = np.zeros(s.n - 2)
    if g <= 0.0:
        out[-1] = w.u
        return out
    lower = mu[2:-1]
    # two-plane vertex joining i with n: alpha e_i + beta e_n
    alpha = (g / mun) / (1.0 / lower - 1.0 / mun)
    beta = (w.v - w.u / lower) / (1.0 / mun - 1.0 / lower)
    t1 = (w.u - w.v) / (1.0 - 1.0 / mun)
    t2 = (w.u - mu2 * w.v) / (1.0 - mu2 / mun)
    count = s.n - 1
    out[:-1] = alpha / count
    out[-1] = (t1 + t2 + beta.sum()) / count
    return out
