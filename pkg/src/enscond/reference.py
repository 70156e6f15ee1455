"""Gaussian and Ornstein-Uhlenbeck reference computations in mode space.

The stationary law of the linear (Ornstein-Uhlenbeck) mode dynamics is a
centred Gaussian with coordinate variances ``a (1 + delta_l) / 2``. When all
``delta_l`` agree, the pushforward of this law under ``x -> (|x|^2,
|x|^2_{-1})`` is the stationary law of the cone diffusion, which the checks
below exploit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import streams
from .effective import coefficient_arrays, generator_from_derivatives
from .errors import UnequalDelta
from .geometry import as_point, in_cone, volume
from .qfun import QTable
from .spectrum import Spectrum, forcing_constants


def mode_energies(x: np.ndarray, s: Spectrum):
    """``(U, V)`` for rows of mode vectors."""
    sq = np.asarray(x) ** 2
    return sq.sum(axis=-1), sq @ (1.0 / s.lam)


def pair_energies(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return x[..., 0::2] ** 2 + x[..., 1::2] ** 2


def iter_mu(s: Spectrum, count: int, seed: int = 0, chunk: int = 1 << 20, variance=None):
    """Yield blocks of i.i.d. centred Gaussian mode vectors.

    ``variance`` defaults to ``a/2`` for every coordinate; pass an array of
    length N for per-mode variances.
    """
    sd = np.sqrt(s.a / 2.0 if variance is None else np.asarray(variance, dtype=float))
    rng = streams.generator(seed, "gaussian-modes")
    done = 0
    while done < count:
        m = min(chunk, count - done)
        yield rng.standard_normal((m, s.N)) * sd
        done += m


def sample_mu(s: Spectrum, count: int, seed: int = 0) -> np.ndarray:
    return np.concatenate(list(iter_mu(s, count, seed)), axis=0)


def common_delta(s: Spectrum, delta_common: float | None = None) -> float:
    if not s.constant_delta:
        raise UnequalDelta("the forcing perturbations differ between pairs")
    d = s.delta_pair[0]
    if delta_common is not None and not math.isclose(delta_common, d, rel_tol=0.0, abs_tol=1e-15):
        raise UnequalDelta(f"spectrum has delta = {d}, not {delta_common}")
    return d


def stationary_variance(s: Spectrum) -> np.ndarray:
    return s.a * (1.0 + s.delta) / 2.0


def sample_nu(s: Spectrum, delta_common: float | None, count: int, seed: int = 0):
    """``(U, V)`` samples of the equal-perturbation stationary law."""
    common_delta(s, delta_common)
    U, V = [], []
    for x in iter_mu(s, count, seed, variance=stationary_variance(s)):
        u, v = mode_energies(x, s)
        U.append(u)
        V.append(v)
    return np.concatenate(U), np.concatenate(V)


def gaussian_moments(s: Spectrum) -> dict:
    """Exact moments of ``(U, V)`` under the OU stationary Gaussian."""
    var = stationary_variance(s)
    return {
        "E_U": float(var.sum()),
        "E_V": float((var / s.lam).sum()),
        "Var_U": float((2.0 * var**2).sum()),
        "E_lam_q": float((s.lam * var).sum()),
    }


def ou_step(s: Spectrum, x: np.ndarray, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Exact transition of the mode dynamics over a time ``dt``."""
    decay = np.exp(-s.lam * dt)
    sd = np.sqrt(stationary_variance(s) * -np.expm1(-2.0 * s.lam * dt))
    x = np.asarray(x, dtype=float)
    return decay * x + sd * rng.standard_normal(x.shape)


# ----------------------------------------------------------------------------
# densities


def nu_density_unnormalized(s: Spectrum, w) -> float:
    w = as_point(w)
    if not in_cone(s, w) or w.v <= 0.0:
        return 0.0
    return math.exp(-w.u / s.a) * volume(s, w)


def nu_normalizer(s: Spectrum) -> float:
    return s.a**s.n * (1.0 - 1.0 / s.mu[1])


def nu_density(s: Spectrum, w) -> float:
    """Normalized density of ``(U, V)`` for ``delta = 0``."""
    return nu_density_unnormalized(s, w) / nu_normalizer(s)


# ----------------------------------------------------------------------------
# compactly supported test functions


@dataclass(frozen=True)
class Bump:
    """``exp(1 - 1/(1 - r^2))`` on an axis-aligned ellipse, zero outside."""

    uc: float
    vc: float
    ru: float
    rv: float

    def __call__(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        p = (u - self.uc) / self.ru
        q = (v - self.vc) / self.rv
        r2 = p * p + q * q
        inside = r2 < 1.0
        d = np.where(inside, 1.0 - r2, 1.0)
        val = np.where(inside, np.exp(1.0 - 1.0 / d), 0.0)
        # with h = -1/d, dval/dr2 = -val/d^2, d2val/dr2^2 = val (1 - 2d)/d^4
        g1 = -val / d**2
        g2 = val * (1.0 - 2.0 * d) / d**4
        pu, qv = 2.0 * p / self.ru, 2.0 * q / self.rv
        du = g1 * pu
        dv = g1 * qv
        duu = g2 * pu * pu + g1 * 2.0 / self.ru**2
        dvv = g2 * qv * qv + g1 * 2.0 / self.rv**2
        duv = g2 * pu * qv
        return val, np.array([du, dv]), np.array([[duu, duv], [duv, dvv]])

    def inside_cone(self, s: Spectrum, samples: int = 720) -> bool:
        th = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
        u = self.uc + self.ru * np.cos(th)
        v = self.vc + self.rv * np.sin(th)
        return bool(np.all((v > 0) & (u > v) & (u < s.lam_max * v)))


def default_bumps(s: Spectrum) -> list[Bump]:
    """Three bumps inside the cone, scaled with the Gaussian moments."""
    m = gaussian_moments(s)
    eu, ev = m["E_U"], m["E_V"]
    x = eu / ev
    out = [
        Bump(eu, ev, 0.3 * eu, 0.24 * ev),
        Bump(0.75 * eu, 0.75 * eu / (0.5 * (1.0 + x)), 0.15 * eu, 0.1 * ev),
        Bump(1.5 * eu, 1.5 * eu / (0.5 * (x + s.lam_max)), 0.25 * eu, 0.1 * ev),
    ]
    for b in out:
        if not b.inside_cone(s):
            raise ValueError(f"bump {b} leaves the cone")
    return out


# ----------------------------------------------------------------------------
# generator checks


def lifted_generator(s: Spectrum, psi, x: np.ndarray) -> np.ndarray:
    """Mode-space generator applied to ``psi(|x|^2, |x|^2_{-1})``."""
    fc = forcing_constants(s)
    sq = np.asarray(x) ** 2
    lam, w = s.lam, 1.0 + s.delta
    u, v = sq.sum(axis=-1), sq @ (1.0 / lam)
    _, grad, hess = psi(u, v)
    s_uu = sq @ (lam * w)
    s_uv = sq @ w
    s_vv = sq @ (w / lam)
    return (
        2.0 * s.a * (s_uu * hess[0, 0] + 2.0 * s_uv * hess[0, 1] + s_vv * hess[1, 1])
        + (fc.B1 - 2.0 * sq @ lam) * grad[0]
        + (fc.B0 - 2.0 * sq.sum(axis=-1)) * grad[1]
    )


@dataclass(frozen=True)
class GeneratorCheck:
    lifted_mean: float
    lifted_stderr: float
    effective_mean: float
    effective_stderr: float
    diff_mean: float
    diff_stderr: float
    samples: int

    def passes(self, k: float = 3.0) -> bool:
        return (
            abs(self.lifted_mean) <= k * self.lifted_stderr
            and abs(self.effective_mean) <= k * self.effective_stderr
            and abs(self.diff_mean) <= k * self.diff_stderr
        )


def lifted_generator_check(s: Spectrum, psi, count: int, seed: int = 0, evaluator=None, chunk: int = 1 << 19) -> GeneratorCheck:
    """Gaussian averages of the lifted and of the effective generator.

    Both must vanish for a stationary Gaussian; the paired difference checks
    that replacing ``x_l^2`` by its conditional expectation preserves the
    average. Requires equal perturbations (the Gaussian is their stationary
    law).
    """
    common_delta(s)
    if evaluator is None:
        evaluator = QTable(s).qhat
    acc = np.zeros((3, 2))
    for x in iter_mu(s, count, seed, chunk=chunk, variance=stationary_variance(s)):
        u, v = mode_energies(x, s)
        lifted = lifted_generator(s, psi, x)
        eff = np.zeros_like(u)
        val, grad, hess = psi(u, v)
        hit = (np.abs(grad).sum(axis=0) + np.abs(hess).sum(axis=(0, 1))) > 0
        if np.any(hit):
            coef = coefficient_arrays(s, evaluator(u[hit], v[hit]))
            eff[hit] = generator_from_derivatives(coef, grad[:, hit], hess[:, :, hit])
        for k, arr in enumerate((lifted, eff, lifted - eff)):
            acc[k, 0] += arr.sum()
            acc[k, 1] += (arr**2).sum()
    mean = acc[:, 0] / count
    var = acc[:, 1] / count - mean**2
    se = np.sqrt(np.maximum(var, 0.0) / count)
    return GeneratorCheck(mean[0], se[0], mean[1], se[1], mean[2], se[2], count)
