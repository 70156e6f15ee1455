"""Conditional mode energies on the cone.

``qhat_eval`` returns, for every eigenvalue pair ``i = 1..n``, the expected
pair energy ``S_i = x_{2i-1}^2 + x_{2i}^2`` of a centred Gaussian conditioned
on ``(|x|^2, |x|^2_{-1}) = (u, v)``. The free pairs ``3..n`` come from the
barycenter of the slab polytope and the first two pairs from the two linear
identities. Closed forms serve the lowest and highest sectors and the two
boundary faces.

:class:`QTable` is a fast vectorized evaluator for bulk use (simulation,
Monte Carlo averages). On each middle sector the numerator ``qhat * V`` and
the volume ``V`` are polynomials in ``u/v``; the table stores their
interpolants, and the two extreme sectors keep their exact linear forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C

from . import geometry, streams
from .errors import IndexOutOfRange, InsufficientEffectiveSamples, OutsideCone
from .geometry import APEX_V, ConePoint, as_point
from .spectrum import Spectrum

BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class QVector:
    qhat: np.ndarray

    def q(self, ell: int) -> float:
        """Single-mode value ``q_ell`` for ``ell`` in ``1..N``."""
        if not 1 <= ell <= 2 * len(self.qhat):
            raise IndexOutOfRange(f"mode index {ell} outside 1..{2 * len(self.qhat)}")
        return float(self.qhat[(ell - 1) // 2]) / 2.0

    @property
    def q_modes(self) -> np.ndarray:
        return np.repeat(self.qhat, 2) / 2.0


def _low_pairs(s: Spectrum, free: np.ndarray, u: float, v: float) -> tuple[float, float]:
    """First two pair values from the energy and enstrophy identities."""
    mu = s.mu_arr
    mu2, hi = mu[1], mu[2:]
    q1 = (-u + mu2 * v + np.dot(1.0 - mu2 / hi, free)) / (mu2 - 1.0)
    q2 = (u - v - np.dot(1.0 - 1.0 / hi, free)) / (1.0 - 1.0 / mu2)
    return q1, q2


def lowest_sector_qhat(s: Spectrum, u, v):
    """Exact values on the closure of the lowest sector (vectorized)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    mu = s.mu_arr
    d = u - v
    rest = d[..., None] / ((s.n - 1) * (1.0 - 1.0 / mu[1:]))
    first = v - d * np.sum(1.0 / (mu[1:] - 1.0)) / (s.n - 1)
    return np.concatenate([first[..., None], rest], axis=-1)


def qhat_eval(s: Spectrum, w) -> QVector:
    w = as_point(w)
    u, v = w.u, w.v
    scale = max(abs(u), abs(v))
    if v < -geometry.RAY_TOL * scale or u < v * (1.0 - BOUNDARY_TOL) - 1e-300 or u > s.lam_max * v * (1.0 + BOUNDARY_TOL):
        raise OutsideCone(f"({u}, {v}) is outside the cone")
    out = np.zeros(s.n)
    if u == 0.0 or v < APEX_V:
        return QVector(out)
    if u - v <= BOUNDARY_TOL * u:
        out[0] = u
        return QVector(out)
    if s.lam_max * v - u <= BOUNDARY_TOL * u:
        out[-1] = u
        return QVector(out)
    x = u / v
    if x <= s.mu[1]:
        return QVector(lowest_sector_qhat(s, u, v))
    if x >= s.mu[-2]:
        free = geometry.simplex_barycenter(s, w)
    else:
        free = geometry.barycenter(s, w)
    out[2:] = free
    out[0], out[1] = _low_pairs(s, free, u, v)
    return QVector(out)


def q_ell(s: Spectrum, w, ell: int) -> float:
    if not 1 <= ell <= s.N:
        raise IndexOutOfRange(f"mode index {ell} outside 1..{s.N}")
    return qhat_eval(s, w).q(ell)


def identity_residuals(s: Spectrum, q: QVector, w) -> tuple[float, float]:
    w = as_point(w)
    qh = np.asarray(q.qhat)
    return float(qh.sum() - w.u), float((qh / s.mu_arr).sum() - w.v)


def weighted_residual(s: Spectrum, q: QVector, w) -> float:
    """``sum_{i>=2} (1 - 1/mu_i) qhat_i - (u - v)``."""
    w = as_point(w)
    qh = np.asarray(q.qhat)
    return float(np.dot(1.0 - 1.0 / s.mu_arr[1:], qh[1:]) - (w.u - w.v))


def monotonicity_gaps(s: Spectrum, w, q: QVector | None = None) -> np.ndarray:
    """Successive differences of ``(1 - 1/mu_i) qhat_i`` for ``i = 2..n``."""
    qh = np.asarray((q or qhat_eval(s, w)).qhat)
    scaled = (1.0 - 1.0 / s.mu_arr[1:]) * qh[1:]
    return np.diff(scaled)


def upper_bound_slack(s: Spectrum, w, i: int, q: QVector | None = None) -> float:
    if not 2 <= i <= s.n:
        raise IndexOutOfRange(f"pair index {i} outside 2..{s.n}")
    w = as_point(w)
    qh = np.asarray((q or qhat_eval(s, w)).qhat)
    bound = (w.u - w.v) / ((s.n - i + 1) * (1.0 - 1.0 / s.mu[i - 1]))
    return float(bound - qh[i - 1])


# ----------------------------------------------------------------------------
# fast evaluator


class QTable:
    """Vectorized evaluator of ``qhat`` built from exact sector interpolants."""

    def __init__(self, s: Spectrum, nodes: int | None = None):
        self.s = s
        n = s.n
        mu = s.mu_arr
        self.mu = mu
        self.breaks = mu.copy()
        deg = n - 1
        nodes = nodes or 2 * n + 4
        self.deg = deg
        # sector k spans [mu[k], mu[k+1]], k = 0..n-2, in the variable y in [-1, 1]
        self.num = np.zeros((n - 1, n, deg + 1))
        self.den = np.zeros((n - 1, deg + 1))
        self.fit_error = 0.0
        self._linear_ends()
        mf, mu2, _ = geometry._family(s)
        cheb = np.cos((2 * np.arange(nodes) + 1) * np.pi / (2 * nodes))
        for k in range(1, n - 2):
            lo, hi = mu[k], mu[k + 1]
            xs = 0.5 * (lo + hi) + 0.5 * (hi - lo) * cheb
            vol = geometry.family_volume(mf, mu2, xs)
            vals = np.array([qhat_eval(s, ConePoint(x, 1.0)).qhat for x in xs])
            num = vals * vol[:, None]
            scale = np.abs(num).max()
            cden = C.chebfit(cheb, vol, n - 2)
            cnum = C.chebfit(cheb, num, deg)
            self.fit_error = max(
                self.fit_error,
                float(np.abs(C.chebval(cheb, cnum).T - num).max() / scale),
            )
            self.den[k, : n - 1] = C.cheb2poly(cden)
            for i in range(n):
                self.num[k, i] = C.cheb2poly(cnum[:, i])

    def _linear_ends(self):
        """Exact affine forms on the lowest and highest sectors."""
        s, mu, n = self.s, self.mu, self.s.n
        for k, (lo, hi) in ((0, (mu[0], mu[1])), (n - 2, (mu[-2], mu[-1]))):
            xs = np.array([lo, hi])
            vals = np.array([self._end_eval(k, x) for x in xs])
            # value = c0 + c1 * y, y = -1 at lo, +1 at hi
            self.num[k, :, 0] = 0.5 * (vals[0] + vals[1])
            self.num[k, :, 1] = 0.5 * (vals[1] - vals[0])
            self.den[k, 0] = 1.0

    def _end_eval(self, k, x):
        s = self.s
        if k == 0:
            return lowest_sector_qhat(s, x, 1.0)
        free = geometry.simplex_barycenter(s, ConePoint(x, 1.0))
        q1, q2 = _low_pairs(s, free, x, 1.0)
        return np.concatenate([[q1, q2], free])

    def qhat(self, u, v) -> np.ndarray:
        """Values at arrays of interior points; returns shape ``(..., n)``."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        shape = u.shape
        u, v = u.ravel(), v.ravel()
        x = u / v
        k = np.clip(np.searchsorted(self.breaks, x, side="right") - 1, 0, self.s.n - 2)
        lo, hi = self.breaks[k], self.breaks[k + 1]
        y = (2.0 * x - (lo + hi)) / (hi - lo)
        num = self.num[k]
        den = self.den[k]
        pn = num[:, :, -1].copy()
        pd = den[:, -1].copy()
        for j in range(self.deg - 1, -1, -1):
            pn = pn * y[:, None] + num[:, :, j]
            pd = pd * y + den[:, j]
        out = pn / pd[:, None] * v[:, None]
        return out.reshape(shape + (self.s.n,))


# ----------------------------------------------------------------------------
# Monte Carlo conditional-expectation oracle


@dataclass(frozen=True)
class OracleEstimate:
    qhat: np.ndarray
    stderr: np.ndarray
    ess: float
    point: ConePoint


def mc_conditional_oracle_many(
    s: Spectrum,
    points,
    bandwidth=None,
    samples: int = 10**7,
    seed: int = 0,
    chunk: int = 10**6,
    bootstrap: int = 200,
) -> list[OracleEstimate]:
    """Nadaraya-Watson estimates of ``E[S_i | U, V]`` at several points.

    All points share one Gaussian sample. ``bandwidth`` may be a scalar, a
    sequence (one per point) or ``None`` for ``0.02 u``.
    """
    pts = [as_point(p) for p in points]
    if bandwidth is None:
        hs = [0.02 * p.u for p in pts]
    elif np.ndim(bandwidth) == 0:
        hs = [float(bandwidth)] * len(pts)
    else:
        hs = [float(h) for h in bandwidth]
    if any(not h > 0 for h in hs):
        raise ValueError("bandwidth must be positive")
    sd = math.sqrt(s.a / 2.0)
    inv_mu = 1.0 / s.mu_arr
    rng = streams.generator(seed, "conditional-oracle")
    kept = [[] for _ in pts]
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        x = rng.standard_normal((m, s.N)) * sd
        pair = x[:, 0::2] ** 2 + x[:, 1::2] ** 2
        U = pair.sum(axis=1)
        V = pair @ inv_mu
        for k, (p, h) in enumerate(zip(pts, hs)):
            near = (np.abs(U - p.u) < 5 * h) & (np.abs(V - p.v) < 5 * h)
            if np.any(near):
                kw = np.exp(-0.5 * (((U[near] - p.u) / h) ** 2 + ((V[near] - p.v) / h) ** 2))
                kept[k].append((kw, pair[near]))
        done += m
    boot_rng = streams.generator(seed, "conditional-oracle-bootstrap")
    out = []
    for p, chunks in zip(pts, kept):
        if chunks:
            kw = np.concatenate([c[0] for c in chunks])
            S = np.concatenate([c[1] for c in chunks])
        else:
            kw, S = np.zeros(0), np.zeros((0, s.n))
        total = kw.sum()
        ess = total**2 / (kw**2).sum() if total > 0 else 0.0
        if ess < 100:
            raise InsufficientEffectiveSamples(f"effective sample size {ess:.1f} < 100 at ({p.u}, {p.v})")
        est = kw @ S / total
        reps = np.empty((bootstrap, s.n))
        for b in range(bootstrap):
            idx = boot_rng.integers(0, len(kw), len(kw))
            wb = kw[idx]
            reps[b] = wb @ S[idx] / wb.sum()
        out.append(OracleEstimate(est, reps.std(axis=0, ddof=1), float(ess), p))
    return out


def mc_conditional_oracle(s: Spectrum, w, bandwidth=None, samples: int = 10**7, seed: int = 0, **kw) -> OracleEstimate:
    return mc_conditional_oracle_many(s, [w], bandwidth, samples, seed, **kw)[0]


# ----------------------------------------------------------------------------
# Lipschitz probe


def lipschitz_probe(s: Spectrum, grid: int = 100, evaluator=None) -> float:
    """Largest gradient of the piecewise-linear interpolant of any ``qhat_i``.

    The region ``{u <= 1}`` of the cone is the triangle with corners
    ``(0,0)``, ``(1,1)`` and ``(1, 1/lambda_N)``; it is split into
    ``grid**2`` congruent triangles.
    """
    A = np.array([0.0, 0.0])
    B = np.array([1.0, 1.0])
    Cc = np.array([1.0, 1.0 / s.lam_max])
    idx = [(i, j) for i in range(grid + 1) for j in range(grid + 1 - i)]
    lookup = {ij: k for k, ij in enumerate(idx)}
    ij = np.array(idx, dtype=float)
    # barycentric lattice: point = A + (i/grid)(B-A) + (j/grid)(C-A)
    P = A + np.outer(ij[:, 0] / grid, B - A) + np.outer(ij[:, 1] / grid, Cc - A)
    if evaluator is None:
        evaluator = QTable(s).qhat
    vals = np.zeros((len(P), s.n))
    interior = P[:, 1] > 0
    vals[interior] = evaluator(P[interior, 0], P[interior, 1])
    # the boundary faces carry their exact values
    top = np.isclose(P[:, 0], s.lam_max * P[:, 1]) & interior
    low = np.isclose(P[:, 0], P[:, 1]) & interior
    vals[low] = 0.0
    vals[low, 0] = P[low, 0]
    vals[top] = 0.0
    vals[top, -1] = P[top, 0]
    tris = []
    for i in range(grid):
        for j in range(grid - i):
            tris.append((lookup[(i, j)], lookup[(i + 1, j)], lookup[(i, j + 1)]))
            if i + j + 1 < grid:
                tris.append((lookup[(i + 1, j)], lookup[(i + 1, j + 1)], lookup[(i, j + 1)]))
    T = np.array(tris)
    p0, p1, p2 = P[T[:, 0]], P[T[:, 1]], P[T[:, 2]]
    M = np.stack([p1 - p0, p2 - p0], axis=1)  # (t, 2, 2)
    dv = np.stack([vals[T[:, 1]] - vals[T[:, 0]], vals[T[:, 2]] - vals[T[:, 0]]], axis=1)  # (t, 2, n)
    grads = np.linalg.solve(M, dv)  # (t, 2, n)
    return float(np.sqrt((grads**2).sum(axis=1)).max())
