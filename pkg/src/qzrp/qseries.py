"""Scalar q-series building blocks.

Everything here is a pure function of its arguments.  Conventions:

* ``(z)_m = (z; q)_m = prod_{j<m} (1 - z q^j)``
* ``g_m = (mu)_m / (q)_m``
* ``f(z) = sum_{i>=1} z^i / (1 - q^i)``, ``h(z) = z f'(z)``
* ``Lambda(y) = (mu y)_inf / (y)_inf``, ``eta_m(y) = (y)_m / (mu y)_m``
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, ParameterRegimeError

DEFAULT_TOL = 1e-14

# Above this many terms a series is considered impractical in double precision.
_MAX_TERMS = 20_000_000


@dataclass(frozen=True)
class ModelParams:
    """The pair (q, mu) in the regime 0 < q, mu < 1 with epsilon = +1."""

    q: float
    mu: float
    epsilon: int = 1

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ParameterRegimeError(f"q must lie in (0, 1), got {self.q}")
        if not 0.0 < self.mu < 1.0:
            raise ParameterRegimeError(f"mu must lie in (0, 1), got {self.mu}")
        if self.epsilon != 1:
            raise ParameterRegimeError("only the epsilon = +1 regime is supported")


@dataclass(frozen=True)
class EnsembleParams:
    """Grand-canonical state of the second-class particles: fugacity and density."""

    y: float
    rho: float

    @classmethod
    def from_rho(cls, rho: float, params: ModelParams, tol: float = 1e-12) -> "EnsembleParams":
        return cls(y=solve_fugacity(rho, params, tol), rho=float(rho))

    @classmethod
    def from_y(cls, y: float, params: ModelParams) -> "EnsembleParams":
        if not 0.0 < y < 1.0:
            raise DomainError(f"fugacity must lie in (0, 1), got {y}")
        return cls(y=float(y), rho=density(y, params))


def q_pochhammer(z: float, q: float, m: int) -> float:
    """Finite q-shifted factorial ``(z; q)_m``."""
    if m < 0:
        raise ValueError("m must be non-negative")
    out = 1.0
    zq = z
    for _ in range(m):
        out *= 1.0 - zq
        zq *= q
    return out


def _terms_needed(rate: float, lead: float, target: float) -> int:
    # smallest n with lead * rate**n < target
    if lead <= target:
        return 1
    if rate <= 0.0:
        return 2
    return int(math.ceil(math.log(target / lead) / math.log(rate))) + 2


def log_q_pochhammer_inf(z: float, q: float, tol: float = DEFAULT_TOL) -> float:
    """``log (z; q)_inf`` for ``|z| < 1``.

    Uses whichever of the product over ``j`` (rate ``q``) or the exponent series
    ``-sum_k z^k / (k (1 - q^k))`` (rate ``|z|``) needs fewer terms.
    """
    if abs(z) >= 1.0:
        raise DomainError(f"(z; q)_inf requires |z| < 1, got z={z}")
    if z == 0.0:
        return 0.0
    az = abs(z)
    n_prod = _terms_needed(q, az, tol * (1.0 - q))
    n_series = _terms_needed(az, az, tol * (1.0 - az) * (1.0 - q))
    if min(n_prod, n_series) > _MAX_TERMS:
        raise DomainError(f"(z; q)_inf with z={z}, q={q} needs too many terms")
    if n_prod <= n_series:
        j = np.arange(n_prod, dtype=float)
        return float(np.sum(np.log1p(-z * q**j)))
    k = np.arange(1, n_series + 1, dtype=float)
    return float(-np.sum(z**k / (k * (1.0 - q**k))))


def q_pochhammer_inf(z: float, q: float, tol: float = DEFAULT_TOL) -> float:
    """Infinite product ``(z; q)_inf`` to relative accuracy ``tol``."""
    return math.exp(log_q_pochhammer_inf(z, q, tol))


def q_binomial(m: int, k: int, q: float) -> float:
    """Gaussian binomial, zero unless ``0 <= k <= m``."""
    if k < 0 or k > m:
        return 0.0
    k = min(k, m - k)
    out = 1.0
    for j in range(k):
        out *= (1.0 - q ** (m - j)) / (1.0 - q ** (j + 1))
    return out


def g_factor(m: int, params: ModelParams) -> float:
    """``g_m = (mu; q)_m / (q; q)_m``."""
    return _g(m, params.q, params.mu)


@lru_cache(maxsize=4096)
def _g(m: int, q: float, mu: float) -> float:
    out = 1.0
    for j in range(m):
        out *= (1.0 - mu * q**j) / (1.0 - q ** (j + 1))
    return out


def _check_zeta(zeta: float) -> None:
    if not 0.0 <= zeta < 1.0:
        raise DomainError(f"argument must lie in [0, 1), got {zeta}")


def f_qdigamma(zeta: float, q: float, tol: float = DEFAULT_TOL) -> float:
    """q-digamma type series ``f(zeta) = sum_{i>=0} zeta q^i / (1 - zeta q^i)``."""
    _check_zeta(zeta)
    if zeta == 0.0:
        return 0.0
    n_q = _terms_needed(q, 1.0, tol * (1.0 - q) * (1.0 - zeta))
    n_z = _terms_needed(zeta, 1.0, tol * (1.0 - zeta) * (1.0 - q))
    if min(n_q, n_z) > _MAX_TERMS:
        raise DomainError(f"f({zeta}) with q={q} needs too many terms")
    if n_q <= n_z:
        t = zeta * q ** np.arange(n_q, dtype=float)
        return float(np.sum(t / (1.0 - t)))
    i = np.arange(1, n_z + 1, dtype=float)
    return float(np.sum(zeta**i / (1.0 - q**i)))


def h_deriv(zeta: float, q: float, tol: float = DEFAULT_TOL) -> float:
    """``h(zeta) = zeta f'(zeta) = sum_{i>=0} zeta q^i / (1 - zeta q^i)^2``."""
    _check_zeta(zeta)
    if zeta == 0.0:
        return 0.0
    n_q = _terms_needed(q, 1.0, tol * (1.0 - q) * (1.0 - zeta) ** 2)
    # i zeta^i decays once i > 1/(-log zeta); budget generously for the prefactor
    n_z = _terms_needed(zeta, 1.0, tol * (1.0 - zeta) ** 2 * (1.0 - q)) * 2
    if min(n_q, n_z) > _MAX_TERMS:
        raise DomainError(f"h({zeta}) with q={q} needs too many terms")
    if n_q <= n_z:
        t = zeta * q ** np.arange(n_q, dtype=float)
        return float(np.sum(t / (1.0 - t) ** 2))
    i = np.arange(1, n_z + 1, dtype=float)
    return float(np.sum(i * zeta**i / (1.0 - q**i)))


def lambda_y(y: float, params: ModelParams, tol: float = DEFAULT_TOL) -> float:
    """``Lambda(y) = (mu y)_inf / (y)_inf``."""
    if not 0.0 <= y < 1.0:
        raise DomainError(f"y must lie in [0, 1), got {y}")
    q, mu = params.q, params.mu
    return math.exp(log_q_pochhammer_inf(mu * y, q, tol) - log_q_pochhammer_inf(y, q, tol))


def eta(m: int | float, y: float, params: ModelParams) -> float:
    """``eta_m(y) = (y)_m / (mu y)_m``; ``m = math.inf`` gives the converged product."""
    if not 0.0 < y < 1.0:
        raise DomainError(f"y must lie in (0, 1), got {y}")
    if m == math.inf:
        return 1.0 / lambda_y(y, params)
    return _eta(int(m), y, params.q, params.mu)


@lru_cache(maxsize=65536)
def _eta(m: int, y: float, q: float, mu: float) -> float:
    out = 1.0
    for j in range(m):
        out *= (1.0 - y * q**j) / (1.0 - mu * y * q**j)
    return out


def density(y: float, params: ModelParams) -> float:
    """Average density ``rho = f(y) - f(mu y)`` at fugacity ``y``.

    Summed as ``sum_i (1 - mu) y q^i / ((1 - y q^i)(1 - mu y q^i))`` which has no
    cancellation between the two digamma terms.
    """
    _check_zeta(y)
    q, mu = params.q, params.mu
    if y == 0.0:
        return 0.0
    n = _terms_needed(q, 1.0, DEFAULT_TOL * (1.0 - q) * (1.0 - y))
    if n > _MAX_TERMS:
        return f_qdigamma(y, q) - f_qdigamma(mu * y, q)
    t = y * q ** np.arange(n, dtype=float)
    return float(np.sum((1.0 - mu) * t / ((1.0 - t) * (1.0 - mu * t))))


def solve_fugacity(rho: float, params: ModelParams, tol: float = 1e-12) -> float:
    """Invert ``rho = f(y) - f(mu y)`` for the unique ``y`` in ``(0, 1)``."""
    if not rho > 0.0:
        raise DomainError(f"density must be positive, got {rho}")
    q, mu = params.q, params.mu

    def resid(y):
        return density(y, params) - rho

    lo = min(0.5, rho * (1.0 - q) / (1.0 - mu))
    while resid(lo) > 0.0:
        lo *= 0.5
    gap = min(0.5, 1.0 / (1.0 + rho))
    while resid(1.0 - gap) < 0.0:
        gap *= 0.1
        if gap < 1e-15:
            raise DomainError(f"density {rho} too large to resolve in double precision")
    hi = 1.0 - gap
    y = brentq(resid, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    # Newton polish; d rho / d y = (h(y) - h(mu y)) / y
    for _ in range(2):
        slope = (h_deriv(y, q) - h_deriv(mu * y, q)) / y
        step = resid(y) / slope
        if 0.0 < y - step < 1.0:
            y -= step
    if abs(resid(y)) > tol * max(1.0, rho):
        raise DomainError(f"fugacity solve did not reach tolerance for rho={rho}")
    return y


def phi(l: int, m: int, y: float, params: ModelParams) -> float:
    """Single-species R-matrix weight with the fugacity as spectral parameter.

    ``phi(l|m) = y^l (mu)_l (y)_{m-l} / (mu y)_m * [m choose l]_q``, zero outside
    ``0 <= l <= m``.  For each ``m`` the weights sum to one over ``l``.
    """
    return _phi(l, m, y, params.q, params.mu)


@lru_cache(maxsize=262144)
def _phi(l: int, m: int, y: float, q: float, mu: float) -> float:
    if l < 0 or l > m:
        return 0.0
    return (
        y**l
        * q_pochhammer(mu, q, l)
        * q_pochhammer(y, q, m - l)
        / q_pochhammer(mu * y, q, m)
        * q_binomial(m, l, q)
    )
