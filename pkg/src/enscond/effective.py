"""The effective two-dimensional diffusion on the cone.

The generator acting on a smooth ``psi(u, v)`` is

    A psi = 1/2 sum_ij a_ij d_ij psi + b . grad psi

with ``a`` and ``b`` assembled from the conditional mode energies. This
module builds the coefficients, checks ellipticity, constructs and verifies a
Lyapunov function for positive recurrence, and simulates the diffusion with
an Euler-Maruyama scheme guarded against exits from the cone.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .errors import DriftViolation, InfeasibleLyapunov, NotPositiveDefinite, OutsideCone, StepRejectedTooOften
from .geometry import as_point
from .qfun import QTable, qhat_eval
from .spectrum import Spectrum, forcing_constants

# ----------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class DiffusionCoeffs:
    amat: np.ndarray
    bvec: np.ndarray


def coefficient_arrays(s: Spectrum, qhat: np.ndarray):
    """Entries ``(a_uu, a_uv, a_vv, b_u, b_v)`` for rows of pair values.

    ``qhat`` has shape ``(..., n)``. Each pair carries two modes with half
    the pair energy, so sums over modes become sums over pairs.
    """
    mu = s.mu_arr
    w = 1.0 + s.delta_pair_arr
    fc = forcing_constants(s)
    four_a = 4.0 * s.a
    a_uu = four_a * qhat @ (mu * w)
    a_uv = four_a * qhat @ w
    a_vv = four_a * qhat @ (w / mu)
    b_u = fc.B1 - 2.0 * qhat @ mu
    b_v = fc.B0 - 2.0 * qhat.sum(axis=-1)
    return a_uu, a_uv, a_vv, b_u, b_v


def _interior(s: Spectrum, u: float, v: float) -> None:
    if not (v > 0.0 and v < u < s.lam_max * v):
        raise OutsideCone(f"({u}, {v}) is not an interior point of the cone")


def coeffs(s: Spectrum, w) -> DiffusionCoeffs:
    w = as_point(w)
    _interior(s, w.u, w.v)
    a_uu, a_uv, a_vv, b_u, b_v = coefficient_arrays(s, qhat_eval(s, w).qhat)
    return DiffusionCoeffs(
        amat=np.array([[a_uu, a_uv], [a_uv, a_vv]]),
        bvec=np.array([b_u, b_v]),
    )


@dataclass(frozen=True)
class Ellipticity:
    trace: float
    det: float
    lower_bound: float


def det_lower_bound(s: Spectrum, qhat: np.ndarray) -> float:
    """Explicit lower bound for ``det a`` in terms of the pair values."""
    mu = s.mu_arr
    ratio = mu[:, None] / mu[None, :]
    off = ~np.eye(s.n, dtype=bool)
    gap = (ratio + 1.0 / ratio - 2.0)[off].min()
    c = (1.0 + s.delta_pair_arr) * np.asarray(qhat) / 2.0
    pair_sum = np.outer(c, c)[off].sum()
    return float(32.0 * s.a**2 * gap * pair_sum)


def ellipticity(s: Spectrum, w, rel_slack: float = 1e-9) -> Ellipticity:
    w = as_point(w)
    q = qhat_eval(s, w).qhat
    c = coeffs(s, w)
    tr = float(np.trace(c.amat))
    det = float(np.linalg.det(c.amat))
    # the direct 2x2 determinant loses precision when it is tiny; use the
    # Lagrange-identity form, which is a sum of non-negative terms
    det = max(det, _det_sum_of_squares(s, q))
    bound = det_lower_bound(s, q)
    if not tr > 0.0 or not det > 0.0:
        raise NotPositiveDefinite(f"trace {tr}, det {det} at ({w.u}, {w.v})")
    if det < bound * (1.0 - rel_slack):
        raise NotPositiveDefinite(f"det {det} below lower bound {bound} at ({w.u}, {w.v})")
    return Ellipticity(tr, det, bound)


def _det_sum_of_squares(s: Spectrum, qhat: np.ndarray) -> float:
    """``det a`` written as ``16 a^2 sum_{l<m} c_l c_m (sqrt(lam_l/lam_m) - sqrt(lam_m/lam_l))^2``."""
    lam = s.lam
    c = (1.0 + s.delta) * np.repeat(np.asarray(qhat), 2) / 2.0
    r = np.sqrt(lam[:, None] / lam[None, :])
    terms = np.outer(c, c) * (r - 1.0 / r) ** 2
    return float(16.0 * s.a**2 * np.triu(terms, 1).sum())


def generator_from_derivatives(coef, grad, hess):
    """``A psi`` from coefficient arrays and derivatives of ``psi``.

    ``grad = (psi_u, psi_v)`` and ``hess = ((psi_uu, psi_uv), (psi_uv, psi_vv))``
    with any broadcastable shapes.
    """
    a_uu, a_uv, a_vv, b_u, b_v = coef
    (h_uu, h_uv), (_, h_vv) = hess
    return 0.5 * (a_uu * h_uu + 2.0 * a_uv * h_uv + a_vv * h_vv) + b_u * grad[0] + b_v * grad[1]


def apply_generator(s: Spectrum, psi, w) -> float:
    """Generator applied to ``psi``; ``psi(u, v)`` returns ``(value, grad, hess)``."""
    w = as_point(w)
    _interior(s, w.u, w.v)
    coef = coefficient_arrays(s, qhat_eval(s, w).qhat)
    _, grad, hess = psi(w.u, w.v)
    return float(generator_from_derivatives(coef, np.asarray(grad), np.asarray(hess)))


# ----------------------------------------------------------------------------
# Lyapunov function


@dataclass(frozen=True)
class LyapunovParams:
    alpha0: float
    beta0: float
    gamma0: float
    f0: float
    g0: float
    v0: float
    cPhi: float
    cF: float = 0.0
    cG: float = 0.0
    cV: float = 0.0


def lyapunov_exponents(s: Spectrum) -> tuple[float, float, float]:
    """Half of the largest admissible face exponents, and ``1/(2a)``."""
    lam, w = s.lam, 1.0 + s.delta
    low = (lam - 1.0) * w
    high = (s.lam_max - lam) * w
    alpha_sup = (low.sum() / (2.0 * low.max()) - 1.0) / 2.0
    beta_sup = (high.sum() / (2.0 * high.max()) - 1.0) / 2.0
    return float(0.5 * alpha_sup), float(0.5 * beta_sup), 1.0 / (2.0 * s.a)


def _face_constants(s: Spectrum, alpha: float, beta: float):
    lam, w = s.lam, 1.0 + s.delta
    KF = s.a * alpha / (2.0 * alpha + 1.0) * ((lam - 1.0) * w).sum()
    KG = s.a * beta / (2.0 * beta + 1.0) * ((s.lam_max - lam) * w).sum()
    return float(KF), float(KG)


def face_bound(expo: float, K: float, dist, lam_max: float):
    """Upper bound ``-(e/d^{e+1})(K - 2 lam_N d)`` for the face terms."""
    dist = np.asarray(dist, dtype=float)
    return -(expo / dist ** (expo + 1.0)) * (K - 2.0 * lam_max * dist)


def face_bound_sup(expo: float, K: float, lam_max: float) -> float:
    """Maximum of :func:`face_bound` over ``d > 0``."""
    d_star = (expo + 1.0) * K / (2.0 * expo * lam_max)
    return 2.0 * expo * lam_max * d_star ** (-expo) / (expo + 1.0)


def energy_bound(s: Spectrum, u, v, gamma: float):
    """Upper bound ``(-u + aN)/(2a) e^{v/(2a)}`` for the energy term."""
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore"):
        return (-u + s.a * s.N) * gamma * np.exp(gamma * np.asarray(v, dtype=float))


def lyapunov_terms(s: Spectrum, u, v, qhat, alpha: float, beta: float, gamma: float, f=None, g=None):
    """Generator applied to each of the three Lyapunov summands.

    ``f = u - v`` and ``g = lam_N v - u`` may be passed when known exactly;
    recomputing them from ``(u, v)`` cancels badly next to the faces.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    coef = coefficient_arrays(s, qhat)
    L = s.lam_max
    f = u - v if f is None else np.asarray(f, dtype=float)
    g = L * v - u if g is None else np.asarray(g, dtype=float)
    zero = np.zeros_like(u)
    # (u - v)^(-alpha)
    d1 = alpha * f ** (-alpha - 1.0)
    d2 = alpha * (alpha + 1.0) * f ** (-alpha - 2.0)
    TF = generator_from_derivatives(coef, (-d1, d1), ((d2, -d2), (-d2, d2)))
    # (lam_N v - u)^(-beta)
    e1 = beta * g ** (-beta - 1.0)
    e2 = beta * (beta + 1.0) * g ** (-beta - 2.0)
    TG = generator_from_derivatives(coef, (e1, -L * e1), ((e2, -L * e2), (-L * e2, L * L * e2)))
    # exp(gamma v)
    with np.errstate(over="ignore", invalid="ignore"):
        ev = np.exp(gamma * v)
        TV = generator_from_derivatives(coef, (zero, gamma * ev), ((zero, zero), (zero, gamma * gamma * ev)))
        TV = np.where(np.isnan(TV), -np.inf, TV)
    return TF, TG, TV


@dataclass
class LyapunovGrid:
    f: np.ndarray
    g: np.ndarray
    u: np.ndarray
    v: np.ndarray
    qhat: np.ndarray


def lyapunov_grid(
    s: Spectrum, resolution: int = 60, lo: float = 1e-6, hi: float = 1e3, v_max: float = 1e3, evaluator=None, rel_floor: float = 1e-10
) -> LyapunovGrid:
    """Log-spaced grid in the distances to the two faces.

    ``f = u - v`` and ``g = lam_N v - u`` each run over ``[lo, hi]``, so
    ``v = (f + g)/(lam_N - 1)``; points with ``v > v_max`` are dropped, and so
    are points with ``min(f, g) < rel_floor * v``, where the ratio ``u/v`` no
    longer resolves the face distance in double precision.
    """
    side = np.geomspace(lo, hi, resolution)
    F, G = np.meshgrid(side, side, indexing="ij")
    F, G = F.ravel(), G.ravel()
    V = (F + G) / (s.lam_max - 1.0)
    keep = (V <= v_max) & (np.minimum(F, G) >= rel_floor * V)
    F, G, V = F[keep], G[keep], V[keep]
    U = V + F
    if evaluator is None:
        Q = np.array([qhat_eval(s, (a, b)).qhat for a, b in zip(U, V)])
    else:
        Q = evaluator(U, V)
    return LyapunovGrid(F, G, U, V, Q)


def choose_lyapunov(s: Spectrum, grid: int | LyapunovGrid = 60) -> LyapunovParams:
    """Exponents, compact set and constant for the drift condition.

    The thresholds are powers of two: ``f0``, ``g0`` the largest and ``v0``
    the smallest for which every grid point outside the set has drift at
    most ``-1``, then widened by a factor two for safety.
    """
    alpha, beta, gamma = lyapunov_exponents(s)
    G = grid if isinstance(grid, LyapunovGrid) else lyapunov_grid(s, grid)
    total = sum(lyapunov_terms(s, G.u, G.v, G.qhat, alpha, beta, gamma, G.f, G.g))
    bad = total > -1.0
    L = s.lam_max
    if np.any(bad):
        f_min, g_min, v_max = G.f[bad].min(), G.g[bad].min(), G.v[bad].max()
        f0 = 2.0 ** math.floor(math.log2(f_min))
        g0 = 2.0 ** math.floor(math.log2(g_min))
        v0 = 2.0 ** math.ceil(math.log2(v_max))
    else:
        f0 = g0 = 1.0
        v0 = 2.0 ** math.ceil(math.log2(2.0 / (L - 1.0)))
    f0, g0, v0 = f0 / 2.0, g0 / 2.0, 2.0 * v0
    if not (f0 + g0) / (L - 1.0) <= v0:
        raise InfeasibleLyapunov("the compact set is empty on the search grid")
    KF, KG = _face_constants(s, alpha, beta)
    cF = face_bound_sup(alpha, KF, L)
    cG = face_bound_sup(beta, KG, L)
    # (N/2 - y) e^y peaks at y = N/2 - 1
    cV = math.exp(s.N / 2.0 - 1.0)
    return LyapunovParams(alpha, beta, gamma, f0, g0, v0, cF + cG + cV, cF, cG, cV)


@dataclass
class LyapunovReport:
    points: int
    outside: int
    max_outside: float
    max_inside: float
    cPhi: float
    face_f_violations: int
    face_g_violations: int
    energy_violations: int
    ratio_min: float
    shell_points: int
    passed: bool
    worst_point: tuple = field(default=())

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _log_ratio(s, G, TF, TG, alpha, beta, gamma):
    """Log of ``|A Phi| / (f^{-a-1} + g^{-b-1} + e^{gamma v})`` without overflow.

    Everything is scaled by the largest denominator term before summing, and
    the energy term enters through its finite prefactor.
    """
    _, _, a_vv, _, b_v = coefficient_arrays(s, G.qhat)
    kappa = gamma * b_v + 0.5 * gamma * gamma * a_vv
    logs = np.stack([(-alpha - 1.0) * np.log(G.f), (-beta - 1.0) * np.log(G.g), gamma * G.v])
    top = logs.max(axis=0)
    log_den = top + np.log(np.exp(logs - top).sum(axis=0))
    scaled = (TF + TG) * np.exp(-top) + kappa * np.exp(gamma * G.v - top)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(scaled)) + top - log_den


def verify_lyapunov(s: Spectrum, p: LyapunovParams, grid: int | LyapunovGrid = 60, *, raise_on_failure: bool = True, shell=(0.25, 0.25, 2.0)) -> LyapunovReport:
    G = grid if isinstance(grid, LyapunovGrid) else lyapunov_grid(s, grid)
    TF, TG, TV = lyapunov_terms(s, G.u, G.v, G.qhat, p.alpha0, p.beta0, p.gamma0, G.f, G.g)
    total = TF + TG + TV
    inside = (G.f >= p.f0) & (G.g >= p.g0) & (G.v <= p.v0)
    KF, KG = _face_constants(s, p.alpha0, p.beta0)
    L = s.lam_max
    tol = 1e-9
    rf = face_bound(p.alpha0, KF, G.f, L)
    rg = face_bound(p.beta0, KG, G.g, L)
    rv = energy_bound(s, G.u, G.v, p.gamma0)
    viol_f = TF > rf + tol * np.abs(rf)
    with np.errstate(invalid="ignore"):
        viol_g = TG > rg + tol * np.abs(rg)
        viol_v = TV > rv + tol * np.abs(rv)
    out_ok = total[~inside] <= -1.0
    in_ok = total[inside] <= p.cPhi
    shell_mask = (G.f <= p.f0 * shell[0]) | (G.g <= p.g0 * shell[1]) | (G.v >= p.v0 * shell[2])
    log_ratio = _log_ratio(s, G, TF, TG, p.alpha0, p.beta0, p.gamma0)
    ratio_min = float(np.exp(np.nanmin(log_ratio[shell_mask]))) if np.any(shell_mask) else float("nan")
    passed = bool(out_ok.all() and in_ok.all() and not viol_f.any() and not viol_g.any() and not viol_v.any() and ratio_min > 0)
    worst = ()
    if not passed:
        bad = np.flatnonzero((~inside & (total > -1.0)) | (inside & (total > p.cPhi)) | viol_f | viol_g | viol_v)
        if len(bad):
            k = bad[0]
            worst = (float(G.u[k]), float(G.v[k]))
    rep = LyapunovReport(
        points=len(G.u),
        outside=int((~inside).sum()),
        max_outside=float(total[~inside].max()) if np.any(~inside) else float("-inf"),
        max_inside=float(total[inside].max()) if np.any(inside) else float("-inf"),
        cPhi=p.cPhi,
        face_f_violations=int(viol_f.sum()),
        face_g_violations=int(viol_g.sum()),
        energy_violations=int(viol_v.sum()),
        ratio_min=ratio_min,
        shell_points=int(shell_mask.sum()),
        passed=passed,
        worst_point=worst,
    )
    if raise_on_failure and not passed:
        raise DriftViolation(f"drift condition fails at {worst}", point=worst)
    return rep


# ----------------------------------------------------------------------------
# one-dimensional reduction on the lowest sector


@dataclass(frozen=True)
class Sector2Coeffs:
    A: float
    C: float
    D: float


def sector2_coeffs(s: Spectrum) -> Sector2Coeffs:
    lam, w = s.lam, 1.0 + s.delta
    excess = ((lam - 1.0) * w).sum()
    N = s.N
    return Sector2Coeffs(
        A=float(2.0 * s.a / (N - 2) * excess),
        C=float(-2.0 / (N - 2) * lam[2:].sum()),
        D=float(s.a * excess),
    )


# ----------------------------------------------------------------------------
# simulation

OBSERVABLES = ("U", "V", "U_minus_V", "lam_q", "phi_F", "phi_G", "phi_V")


@dataclass
class StationaryStats:
    mean: dict
    stderr: dict
    half_first: dict
    half_second: dict
    steps: int
    chains: int
    dt: float
    burn_in: int
    seed: int
    batches: int
    halvings: int = 0
    projections: int = 0
    safeguard_steps: int = 0

    @property
    def total_steps(self) -> int:
        return self.steps * self.chains

    @property
    def safeguard_rate(self) -> float:
        return self.safeguard_steps / max(self.total_steps, 1)

    def half_drift(self, name: str) -> float:
        """Relative difference of the two half-trajectory averages."""
        a, b = self.half_first[name], self.half_second[name]
        return abs(a - b) / max(abs(0.5 * (a + b)), 1e-300)


def batch_summary(batch_means: np.ndarray):
    """Grand mean, batch-means stderr, and the two half averages.

    ``batch_means`` has shape ``(chains, batches, k)``; halves split the
    batches of each chain in time.
    """
    c, b, _ = batch_means.shape
    flat = batch_means.reshape(c * b, -1)
    mean = flat.mean(axis=0)
    stderr = flat.std(axis=0, ddof=1) / math.sqrt(c * b)
    h = b // 2
    first = batch_means[:, :h].reshape(-1, flat.shape[1]).mean(axis=0)
    second = batch_means[:, b - h :].reshape(-1, flat.shape[1]).mean(axis=0)
    return mean, stderr, first, second


def stats_from_samples(s: Spectrum, u, v, qhat=None, batches: int = 50, seed: int = 0) -> StationaryStats:
    """Stationary statistics from i.i.d. samples of ``(U, V)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if qhat is None:
        qhat = QTable(s).qhat(u, v)
    obs = _observables(s, u, v, qhat, *lyapunov_exponents(s))
    m = (len(u) // batches) * batches
    bm = obs[:m].reshape(1, batches, m // batches, -1).mean(axis=2)
    mean, se, h1, h2 = batch_summary(bm)
    d = lambda arr: dict(zip(OBSERVABLES, map(float, arr)))  # noqa: E731
    return StationaryStats(d(mean), d(se), d(h1), d(h2), m, 1, 0.0, 0, seed, batches)


def _observables(s, u, v, qhat, alpha, beta, gamma):
    with np.errstate(over="ignore"):
        return np.stack(
            [
                u,
                v,
                u - v,
                qhat @ s.mu_arr,
                (u - v) ** (-alpha),
                (s.lam_max * v - u) ** (-beta),
                np.exp(gamma * v),
            ],
            axis=-1,
        )


@dataclass
class _BlockResult:
    batch_means: np.ndarray
    halvings: int
    projections: int
    safeguard_steps: int
    trajectory: list | None


_DEPTH = 1e-8


def _run_block(s, table, w0, dt, steps, burn_in, batches, gens, noise_block, dump_every, max_rate, first_block):
    m = len(gens)
    fc = forcing_constants(s)
    mu = s.mu_arr
    wgt = 1.0 + s.delta_pair_arr
    four_a = 4.0 * s.a
    L = s.lam_max
    alpha, beta, gamma = lyapunov_exponents(s)
    u = np.full(m, float(w0[0]))
    v = np.full(m, float(w0[1]))
    sqdt = math.sqrt(dt)
    post = steps - burn_in
    blen = post // batches
    sums = np.zeros((m, batches, len(OBSERVABLES)))
    halvings = projections = guarded = 0
    traj = [] if (dump_every and first_block) else None
    if traj is not None:
        traj.append((0, 0.0, u[0], v[0]))
    noise = None
    q = table.qhat(u, v)
    for k in range(steps):
        j = k % noise_block
        if j == 0:
            todo = min(noise_block, steps - k)
            noise = np.stack([g.standard_normal((todo, 2)) for g in gens], axis=1)
        xi = noise[j]
        a_uu = four_a * q @ (mu * wgt)
        a_uv = four_a * q @ wgt
        a_vv = four_a * q @ (wgt / mu)
        b_u = fc.B1 - 2.0 * q @ mu
        b_v = fc.B0 - 2.0 * q.sum(axis=1)
        l11 = np.sqrt(a_uu)
        l21 = np.divide(a_uv, l11, out=np.zeros_like(a_uv), where=l11 > 0)
        l22 = np.sqrt(np.maximum(a_vv - l21 * l21, 0.0))
        n1 = l11 * xi[:, 0]
        n2 = l21 * xi[:, 0] + l22 * xi[:, 1]
        nu = u + b_u * dt + n1 * sqdt
        nv = v + b_v * dt + n2 * sqdt
        out = ~((nv > 0.0) & (nu > nv) & (nu < L * nv))
        if out.any():
            idx = np.flatnonzero(out)
            guarded += len(idx)
            h = dt
            for _ in range(20):
                h *= 0.5
                halvings += len(idx)
                su, sv = math.sqrt(h), h
                tu = u[idx] + b_u[idx] * sv + n1[idx] * su
                tv = v[idx] + b_v[idx] * sv + n2[idx] * su
                ok = (tv > 0.0) & (tu > tv) & (tu < L * tv)
                nu[idx[ok]] = tu[ok]
                nv[idx[ok]] = tv[ok]
                idx = idx[~ok]
                if len(idx) == 0:
                    break
            if len(idx):
                projections += len(idx)
                nu[idx], nv[idx] = _project(u[idx], v[idx], nu[idx], nv[idx], L)
            if k >= 1000 and guarded > max_rate * (k + 1) * m:
                raise StepRejectedTooOften(f"boundary safeguard fired on {guarded} of {(k + 1) * m} steps (dt = {dt})")
        u, v = nu, nv
        q = table.qhat(u, v)
        if traj is not None and (k + 1) % dump_every == 0:
            traj.append((k + 1, (k + 1) * dt, u[0], v[0]))
        r = k - burn_in
        if r >= 0 and r < blen * batches:
            sums[:, r // blen] += _observables(s, u, v, q, alpha, beta, gamma)
    if guarded > max_rate * steps * m:
        raise StepRejectedTooOften(f"boundary safeguard fired on {guarded} of {steps * m} steps (dt = {dt})")
    return _BlockResult(sums / blen, halvings, projections, guarded, traj)


def _project(u0, v0, u1, v1, L):
    """Pull rejected proposals back inside the cone by a small relative depth."""
    u1 = u1.copy()
    v1 = v1.copy()
    bad = v1 <= 0.0
    u1[bad], v1[bad] = u0[bad], v0[bad]
    low = u1 <= v1 * (1.0 + _DEPTH)
    u1[low] = v1[low] * (1.0 + _DEPTH)
    high = u1 >= L * v1 * (1.0 - _DEPTH)
    v1[high] = u1[high] / (L * (1.0 - _DEPTH))
    return u1, v1


def default_start(s: Spectrum) -> tuple[float, float]:
    """Gaussian moments of ``(U, V)``, always an interior point."""
    w = 1.0 + s.delta
    return float(s.a * w.sum() / 2.0), float((s.a * w / (2.0 * s.lam)).sum())


def simulate(
    s: Spectrum,
    w0=None,
    dt: float = 1e-3,
    steps: int = 100_000,
    burn_in: int | None = None,
    seed: int = 0,
    *,
    chains: int = 1,
    threads: int = 1,
    block_size: int = 64,
    batches: int | None = None,
    table: QTable | None = None,
    dump_every: int = 0,
    max_safeguard_rate: float = 0.1,
    noise_block: int = 1024,
    return_trajectory: bool = False,
):
    """Euler-Maruyama simulation of ``chains`` independent trajectories.

    ``steps`` counts steps per trajectory and ``burn_in`` (default 10 %) the
    discarded initial steps of each. Chains are split into fixed blocks of
    ``block_size`` that are advanced together; blocks may run on several
    threads without changing any result. Returns :class:`StationaryStats`,
    and with ``return_trajectory`` also the ``(step, t, u, v)`` rows of the
    first chain sampled every ``dump_every`` steps.
    """
    w0 = default_start(s) if w0 is None else tuple(as_point(w0).__dict__.values())
    _interior(s, *w0)
    if not dt > 0:
        raise ValueError("dt must be positive")
    burn_in = steps // 10 if burn_in is None else int(burn_in)
    if batches is None:
        batches = max(10, math.ceil(50 / chains))
    if steps - burn_in < batches:
        raise ValueError("too few post-burn-in steps for the batch count")
    table = table or QTable(s)
    gens = streams.generators(seed, chains, "cone-diffusion")
    blocks = [gens[i : i + block_size] for i in range(0, chains, block_size)]
    if return_trajectory and not dump_every:
        dump_every = 1

    def work(b):
        return _run_block(s, table, w0, dt, steps, burn_in, batches, blocks[b], noise_block, dump_every, max_safeguard_rate, b == 0)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(len(blocks))))
    else:
        results = [work(b) for b in range(len(blocks))]
    bm = np.concatenate([r.batch_means for r in results], axis=0)
    mean, se, h1, h2 = batch_summary(bm)
    d = lambda arr: dict(zip(OBSERVABLES, map(float, arr)))  # noqa: E731
    stats = StationaryStats(
        mean=d(mean),
        stderr=d(se),
        half_first=d(h1),
        half_second=d(h2),
        steps=steps,
        chains=chains,
        dt=dt,
        burn_in=burn_in,
        seed=seed,
        batches=batches * chains,
        halvings=sum(r.halvings for r in results),
        projections=sum(r.projections for r in results),
        safeguard_steps=sum(r.safeguard_steps for r in results),
    )
    if return_trajectory:
        return stats, results[0].trajectory
    return stats


def increment_check(s: Spectrum, w, psi, steps: int = 1, dt: float = 1e-3, paths: int = 200_000, seed: int = 0, table: QTable | None = None):
    """Mean increment of ``psi`` over a short horizon, per unit time.

    Returns ``(estimate, stderr, generator_value)``; for a consistent
    integrator the estimate matches the generator value up to ``O(dt)``.
    """
    w = as_point(w)
    table = table or QTable(s)
    rng = streams.generator(seed, "increment-check")
    L = s.lam_max
    u = np.full(paths, w.u)
    v = np.full(paths, w.v)
    for _ in range(steps):
        xi = rng.standard_normal((paths, 2))
        a_uu, a_uv, a_vv, b_u, b_v = coefficient_arrays(s, table.qhat(u, v))
        l11 = np.sqrt(a_uu)
        l21 = a_uv / l11
        l22 = np.sqrt(np.maximum(a_vv - l21**2, 0.0))
        u = u + b_u * dt + l11 * xi[:, 0] * math.sqrt(dt)
        v = v + b_v * dt + (l21 * xi[:, 0] + l22 * xi[:, 1]) * math.sqrt(dt)
        if np.any(~((v > 0) & (u > v) & (u < L * v))):
            raise StepRejectedTooOften("increment check left the cone; use a smaller dt")
    h = steps * dt
    val0 = psi(w.u, w.v)[0]
    inc = (np.asarray(psi(u, v)[0]) - val0) / h
    return float(inc.mean()), float(inc.std(ddof=1) / math.sqrt(paths)), apply_generator(s, psi, w)
