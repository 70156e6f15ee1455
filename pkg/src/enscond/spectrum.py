"""Eigenvalue and forcing configuration of the truncated system.

A spectrum is described by ``n`` distinct eigenvalues ``mu[0] = 1 < mu[1] <
... < mu[n-1]``, each carried by two modes, so ``N = 2n`` mode eigenvalues
``lam`` with ``lam[2k] = lam[2k+1] = mu[k]``. Forcing perturbations ``delta``
are configured once per pair and expanded to the modes. ``a`` is the
Gaussian variance scale.

Indices in this package follow the mathematical convention where it matters
for users: pair indices run ``1..n`` and mode indices ``1..N`` in public
arguments, while arrays are ordinary zero-based numpy arrays.
"""

from __future__ import annotations

import math
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10 only
    import tomli as _toml


@dataclass(frozen=True)
class ForcingConstants:
    B0: float
    B1: float


@dataclass(frozen=True)
class Spectrum:
    """Validated, immutable spectrum. Build with :func:`build_spectrum`."""

    mu: tuple[float, ...]
    delta_pair: tuple[float, ...]
    a: float
    name: str = field(default="", compare=False)

    @property
    def n(self) -> int:
        return len(self.mu)

    @property
    def N(self) -> int:
        return 2 * len(self.mu)

    @property
    def mu_arr(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    @property
    def delta_pair_arr(self) -> np.ndarray:
        return np.asarray(self.delta_pair, dtype=float)

    @property
    def lam(self) -> np.ndarray:
        """Mode eigenvalues, length N."""
        return np.repeat(self.mu_arr, 2)

    @property
    def delta(self) -> np.ndarray:
        """Mode forcing perturbations, length N."""
        return np.repeat(self.delta_pair_arr, 2)

    @property
    def lam_max(self) -> float:
        return self.mu[-1]

    @property
    def constant_delta(self) -> bool:
        return len(set(self.delta_pair)) == 1

    def with_a(self, a: float) -> "Spectrum":
        return build_spectrum({"mu": list(self.mu), "delta_pair": list(self.delta_pair), "a": a})

    def describe(self) -> dict[str, str]:
        """Flat key/value echo used in reports and manifests."""
        return {
            "n": str(self.n),
            "mu": " ".join(repr(float(m)) for m in self.mu),
            "delta_pair": " ".join(repr(float(d)) for d in self.delta_pair),
            "a": repr(float(self.a)),
        }


_PRESET = re.compile(r"^\s*geometric\s*\(\s*(\d+)\s*,\s*([0-9.eE+-]+)\s*\)\s*$")


def geometric_mu(n: int, ratio: float) -> list[float]:
    """Eigenvalues ``ratio**k`` for ``k = 0..n-1``."""
    if not ratio > 1.0:
        raise ValidationError(f"geometric ratio must exceed 1, got {ratio}")
    return [float(ratio) ** k for k in range(n)]


def _as_float_list(value, key: str) -> list[float]:
    if isinstance(value, (str, bytes)) or not isinstance(value, Sequence):
        raise ValidationError(f"'{key}' must be a list of numbers")
    try:
        return [float(x) for x in value]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"'{key}' must contain only numbers") from exc


def build_spectrum(config: Mapping) -> Spectrum:
    """Validate a raw configuration mapping and return a :class:`Spectrum`.

    Recognised keys: ``n``, ``mu``, ``delta_pair`` (one value per eigenvalue,
    default all zero), ``a`` (default 1) and ``preset`` of the form
    ``"geometric(n, r)"`` which supplies ``mu``. The first violated
    assumption is reported through :class:`ValidationError`.
    """
    cfg = dict(config)
    preset = cfg.get("preset")
    if preset is not None:
        m = _PRESET.match(str(preset))
        if not m:
            raise ValidationError(f"unknown preset {preset!r}; expected 'geometric(n, r)'")
        pn, ratio = int(m.group(1)), float(m.group(2))
        if "mu" in cfg:
            raise ValidationError("give either 'preset' or 'mu', not both")
        cfg["mu"] = geometric_mu(pn, ratio)
        cfg.setdefault("n", pn)
    if "mu" not in cfg:
        raise ValidationError("configuration must supply 'mu' (or a 'preset')")
    mu = _as_float_list(cfg["mu"], "mu")
    n = int(cfg.get("n", len(mu)))
    if n < 4:
        raise ValidationError(f"n must satisfy n >= 4 (N = 2n >= 8), got n = {n}")
    if len(mu) != n:
        raise ValidationError(f"'mu' has {len(mu)} entries but n = {n}")
    if not all(math.isfinite(m) for m in mu):
        raise ValidationError("'mu' entries must be finite")
    if any(b <= a for a, b in zip(mu, mu[1:])):
        raise ValidationError("mu must be strictly increasing")
    if mu[0] != 1.0:
        raise ValidationError(f"mu_1 must equal 1, got {mu[0]}")
    delta = _as_float_list(cfg.get("delta_pair", [0.0] * n), "delta_pair")
    if len(delta) != n:
        raise ValidationError(f"'delta_pair' has {len(delta)} entries but n = {n}")
    for i, d in enumerate(delta, start=1):
        if not (-1.0 < d <= 0.0):
            raise ValidationError(f"delta for pair {i} must lie in (-1, 0], got {d}")
    try:
        a = float(cfg.get("a", 1.0))
    except (TypeError, ValueError) as exc:
        raise ValidationError("'a' must be a number") from exc
    if not (a > 0.0 and math.isfinite(a)):
        raise ValidationError(f"a must be positive, got {a}")

    s = Spectrum(mu=tuple(mu), delta_pair=tuple(delta), a=a, name=str(cfg.get("name", "")))
    _check_feasibility(s)
    return s


def _check_feasibility(s: Spectrum) -> None:
    lam, w = s.lam, 1.0 + s.delta
    low = (lam - 1.0) * w
    high = (s.lam_max - lam) * w
    if not 2.0 * low.max() < low.sum():
        raise ValidationError("exponent feasibility fails for the lower face")
    if not 2.0 * high.max() < high.sum():
        raise ValidationError("exponent feasibility fails for the upper face")


def forcing_constants(s: Spectrum) -> ForcingConstants:
    w = 1.0 + s.delta
    return ForcingConstants(B0=float(s.a * w.sum()), B1=float(s.a * (s.lam * w).sum()))


def load_config(path: str | Path) -> dict:
    """Read a TOML configuration file into a plain dict."""
    with open(path, "rb") as fh:
        return _toml.load(fh)


def load_spectrum(path: str | Path) -> Spectrum:
    return build_spectrum(load_config(path))


def s8(a: float = 1.0, delta: float = 0.0) -> Spectrum:
    """The four-pair reference spectrum ``mu = (1, 2, 3, 4)``."""
    return build_spectrum({"mu": [1, 2, 3, 4], "delta_pair": [delta] * 4, "a": a, "name": "S8"})
