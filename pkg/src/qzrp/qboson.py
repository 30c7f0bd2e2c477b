"""Truncated Fock-space realization of the q-boson algebra and matrix products.

Matrices are stored in the raw ``|m>`` basis: ``entries[i, j]`` is the
coefficient of ``|i>`` in ``Q|j>``.  The dual pairing ``<m|m'> = delta (q)_m``
is not folded into the matrices; instead

* ``Tr Q = sum_m <m|Q|m> / (q)_m`` is the plain diagonal sum of ``entries``,
* ``<m|Q|l> = (q)_m * entries[m, l]``.

This keeps every entry a rational function of (q, mu, y) with no square roots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, InsufficientCutoffError, ResourceLimitError
from .qseries import (
    ModelParams,
    g_factor,
    log_q_pochhammer_inf,
    q_pochhammer,
)
from .sectors import compositions


@dataclass(frozen=True)
class FockOperator:
    """Operator on the span of ``|0>, ..., |N>`` (``N = cutoff``)."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("FockOperator needs a square matrix")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def cutoff(self) -> int:
        return self.entries.shape[0] - 1

    def __matmul__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.entries @ other.entries)

    def __add__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.entries + other.entries)

    def __sub__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.entries - other.entries)

    def __mul__(self, scalar: float) -> "FockOperator":
        return FockOperator(self.entries * scalar)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "FockOperator":
        return FockOperator(np.linalg.matrix_power(self.entries, n))


def identity(N: int) -> FockOperator:
    return FockOperator(np.eye(N + 1))


def build_b(N: int) -> FockOperator:
    """Creation operator, ``b|m> = |m+1>`` (``b|N> = 0`` after truncation)."""
    if N < 1:
        raise ValueError("cutoff must be at least 1")
    return FockOperator(np.diag(np.ones(N), -1))


def build_c(N: int, q: float) -> FockOperator:
    """Annihilation operator, ``c|m> = (1 - q^m)|m-1>``."""
    if N < 1:
        raise ValueError("cutoff must be at least 1")
    return FockOperator(np.diag(1.0 - q ** np.arange(1, N + 1, dtype=float), 1))


def build_k(N: int, q: float) -> FockOperator:
    """Number-type operator, ``k|m> = q^m |m>``."""
    if N < 1:
        raise ValueError("cutoff must be at least 1")
    return FockOperator(np.diag(q ** np.arange(N + 1, dtype=float)))


def b_series(N: int, params: ModelParams) -> FockOperator:
    """``(mu b)_inf / (b)_inf = sum_j g_j b^j``, exact on the truncated space."""
    g = np.array([g_factor(j, params) for j in range(N + 1)])
    i, j = np.indices((N + 1, N + 1))
    return FockOperator(np.where(i >= j, g[np.clip(i - j, 0, N)], 0.0))


def _c_power(N: int, q: float, a: int) -> np.ndarray:
    # c^a |m> = (q^{m-a+1}; q)_a |m-a>
    out = np.zeros((N + 1, N + 1))
    for m in range(a, N + 1):
        out[m - a, m] = q_pochhammer(q ** (m - a + 1), q, a)
    return out


def build_X(a1: int, a2: int, N: int, params: ModelParams) -> FockOperator:
    """Matrix-product operator for a site holding ``a1`` first- and ``a2`` second-class particles."""
    if a1 > N:
        raise InsufficientCutoffError(f"cutoff {N} cannot hold c^{a1}")
    q, mu = params.q, params.mu
    pref = q_pochhammer(mu, q, a1 + a2) / (q_pochhammer(q, q, a1) * q_pochhammer(q, q, a2))
    kdiag = q ** (a2 * np.arange(N + 1, dtype=float))
    mat = b_series(N, params).entries @ (kdiag[:, None] * _c_power(N, q, a1))
    return FockOperator(pref * mat)


def build_A(d: int, y: float, N: int, params: ModelParams) -> FockOperator:
    """Grand-canonical site operator ``A_d = sum_n y^n X_{d,n}``.

    ``g_d (sum_j g_j b^j) diag((q^{d+m} mu y)_inf / (q^m y)_inf) c^d``.
    """
    if not 0.0 <= y < 1.0:
        raise DomainError(f"fugacity must lie in [0, 1), got {y}")
    if d > N:
        raise InsufficientCutoffError(f"cutoff {N} cannot hold c^{d}")
    q, mu = params.q, params.mu
    levels = np.arange(N + 1)
    diag = np.array(
        [
            math.exp(log_q_pochhammer_inf(q ** (d + m) * mu * y, q) - log_q_pochhammer_inf(q**m * y, q))
            for m in levels
        ]
    )
    mat = b_series(N, params).entries @ (diag[:, None] * _c_power(N, q, d))
    return FockOperator(g_factor(d, params) * mat)


def fock_trace(Q: FockOperator) -> float:
    """``Tr Q = sum_m <m|Q|m> / (q)_m``, i.e. the diagonal sum of the raw matrix."""
    return float(np.trace(Q.entries))


def vacuum_expect(Q: FockOperator) -> float:
    """``<0|Q|0>`` with ``<0|0> = 1``."""
    return float(Q.entries[0, 0])


def matrix_element(Q: FockOperator, m: int, l: int, q: float) -> float:
    """Paired bracket ``<m|Q|l> = (q)_m * entries[m, l]``."""
    return q_pochhammer(q, q, m) * float(Q.entries[m, l])


def adaptive_trace(
    build: Callable[[int], FockOperator],
    n0: int,
    tol: float = 1e-12,
    n_max: int = 4096,
) -> tuple[float, int]:
    """Trace of ``build(N)`` with the cutoff doubled until the relative change is below ``tol``.

    Returns ``(trace, cutoff_used)``.
    """
    N = max(n0, 1)
    prev = fock_trace(build(N))
    while N < n_max:
        N *= 2
        cur = fock_trace(build(N))
        if abs(cur - prev) <= tol * abs(cur):
            return cur, N
        prev = cur
    raise InsufficientCutoffError(f"trace did not converge below cutoff {n_max}")


def _word_trace(config: Sequence[tuple[int, int]], N: int, params: ModelParams) -> float:
    cache: dict[tuple[int, int], np.ndarray] = {}
    out = np.eye(N + 1)
    for site in config:
        site = tuple(site)
        if site not in cache:
            cache[site] = build_X(site[0], site[1], N, params).entries
        out = out @ cache[site]
    return float(np.trace(out))


def stationary_probability(
    config: Sequence[tuple[int, int]],
    params: ModelParams,
    N: int | None = None,
    tol: float = 1e-10,
    t_max: int = 1024,
) -> float:
    """Unnormalized stationary weight ``Tr(X_{s_1} ... X_{s_L})`` of a two-species configuration.

    With ``N`` omitted the cutoff is ``m1 + m2 + t`` with ``t = 2, 4, 8, ...`` until
    the weight changes by less than ``tol`` (relative).
    """
    m1 = sum(s[0] for s in config)
    m2 = sum(s[1] for s in config)
    if m2 < 1:
        raise DomainError("the trace is finite only for sectors with m2 >= 1")
    if N is not None:
        return _word_trace(config, N, params)
    t = 2
    prev = _word_trace(config, m1 + m2 + t, params)
    while t < t_max:
        t *= 2
        cur = _word_trace(config, m1 + m2 + t, params)
        if abs(cur - prev) <= tol * abs(cur):
            return cur
        prev = cur
    raise InsufficientCutoffError(f"weight of {config} not converged at headroom {t_max}")


# -- canonical ensemble --------------------------------------------------------


def _site_polynomial(d: int, m2: int, N: int, params: ModelParams) -> np.ndarray:
    # coefficients X_{d,n}, n = 0..m2, of A_d(y) as a polynomial in y
    return np.array([build_X(d, n, N, params).entries for n in range(m2 + 1)])


def _poly_mul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    deg = A.shape[0] - 1
    C = np.zeros_like(A)
    for i in range(deg + 1):
        C[i:] += np.matmul(A[i], B[: deg + 1 - i])
    return C


def _poly_chain(polys: Sequence[np.ndarray]) -> np.ndarray:
    out = polys[0]
    for P in polys[1:]:
        out = _poly_mul(out, P)
    return out


@dataclass(frozen=True)
class CanonicalProfile:
    """Canonical mean second-class occupation per site plus convergence bookkeeping."""

    rho: np.ndarray
    headroom: int
    cutoff: int
    last_change: float


def _canonical_at(L: int, pattern: Sequence[int], m2: int, N: int, params: ModelParams) -> np.ndarray:
    firsts = list(pattern) + [0] * (L - len(pattern))
    polys = {d: _site_polynomial(d, m2, N, params) for d in set(firsts)}
    weights = np.arange(m2 + 1, dtype=float)[:, None, None]
    site = [polys[d] for d in firsts]
    eye = np.zeros_like(site[0])
    eye[0] = np.eye(N + 1)
    prefix = [eye]
    for P in site[:-1]:
        prefix.append(_poly_mul(prefix[-1], P))
    suffix = [eye] * L
    acc = eye
    for r in range(L - 1, 0, -1):
        acc = _poly_mul(site[r], acc)
        suffix[r - 1] = acc
    Z = np.trace(_poly_mul(prefix[-1], site[-1])[m2])
    out = np.empty(L)
    for r in range(L):
        left = _poly_mul(prefix[r], weights * site[r])
        num = sum(np.sum(left[i] * suffix[r][m2 - i].T) for i in range(m2 + 1))
        out[r] = num / Z
    return out


def canonical_profile(
    L: int,
    pattern: Sequence[int],
    m2: int,
    params: ModelParams,
    headroom: int | None = None,
    tol: float = 1e-10,
    t_max: int = 64,
) -> CanonicalProfile:
    """Mean second-class occupation at each site of a ring of ``L`` sites.

    First-class particles are fixed to ``pattern`` on sites ``1..s`` (zero elsewhere)
    and ``m2`` second-class particles fluctuate freely.  The sector sum is done by
    extracting the ``y^m2`` coefficient of ``Tr(A_{d_1}(y) ... A_{d_L}(y))`` with
    matrix-valued polynomial arithmetic, on the Fock space truncated at
    ``sum(pattern) + headroom``.  With ``headroom`` omitted it starts at 2 and doubles
    until the profile moves by less than ``tol``.
    """
    if len(pattern) > L:
        raise ValueError("pattern longer than the ring")
    if m2 < 1:
        raise DomainError("need at least one second-class particle")
    base = sum(pattern)
    if (m2 + 1) * (base + t_max + 1) ** 2 > 5e7:
        raise ResourceLimitError("sector too large for coefficient extraction")
    if headroom is not None:
        N = base + headroom
        return CanonicalProfile(_canonical_at(L, pattern, m2, N, params), headroom, N, float("nan"))
    t = 2
    prev = _canonical_at(L, pattern, m2, base + t, params)
    while t < t_max:
        t *= 2
        cur = _canonical_at(L, pattern, m2, base + t, params)
        change = float(np.max(np.abs(cur - prev)))
        if change <= tol * max(1.0, float(np.max(np.abs(cur)))):
            return CanonicalProfile(cur, t, base + t, change)
        prev = cur
    raise InsufficientCutoffError(f"canonical profile not converged at headroom {t_max}")


def canonical_profile_enumerate(
    L: int,
    pattern: Sequence[int],
    m2: int,
    params: ModelParams,
    max_states: int = 200_000,
) -> np.ndarray:
    """Same quantity as :func:`canonical_profile` by explicit enumeration of the sector."""
    if math.comb(m2 + L - 1, L - 1) > max_states:
        raise ResourceLimitError("sector too large to enumerate")
    firsts = list(pattern) + [0] * (L - len(pattern))
    N = sum(pattern) + m2 + 4
    mats = {(d, n): build_X(d, n, N, params).entries for d in set(firsts) for n in range(m2 + 1)}
    Z = 0.0
    num = np.zeros(L)
    for ns in compositions(m2, L):
        out = np.eye(N + 1)
        for d, n in zip(firsts, ns):
            out = out @ mats[(d, n)]
        w = float(np.trace(out))
        Z += w
        num += w * np.asarray(ns, dtype=float)
    return num / Z
