"""Defect kernel: phi-chains ``G_{m,l}(d_1..d_s)``, the zero-run function ``F`` and brackets.

``G_{m,l}(d)`` is the probability that a column of single-species R-matrix
vertices with spectral parameter ``y`` carries an occupancy ``m`` at the bottom
to ``l`` at the top while the horizontal lines inject ``d_1, ..., d_s``.
It is evaluated by pushing the occupancy distribution through the pattern one
defect at a time: at a vertex with incoming occupancy ``M``, ``k`` particles
leave with weight ``phi(k|M)`` and ``d_i`` enter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import mpmath
import numpy as np

from .qseries import (
    ModelParams,
    eta,
    g_factor,
    lambda_y,
    phi,
    q_binomial,
    q_pochhammer,
)

# Below this value eta_j^r is stored as an exact zero.
UNDERFLOW = 1e-300
# Alternating sums whose absolute-term sum exceeds the result by this factor are
# considered ill-conditioned and replaced by the positive recursion.
COND_LIMIT = 1e8
Q_SWITCH = 0.2
# Closed forms losing more than about four digits to cancellation are re-summed
# in extended precision so that they stay accurate to ~1e-12.
EXTEND_LIMIT = 1e4


@dataclass(frozen=True)
class DefectPattern:
    """First-class occupancies ``(d_1, ..., d_s)`` of a fixed defect cluster on sites ``1..s``."""

    d: tuple[int, ...]

    def __post_init__(self):
        d = tuple(int(x) for x in self.d)
        object.__setattr__(self, "d", d)
        if any(x < 0 for x in d):
            raise ValueError("defect occupancies must be non-negative")
        if d and (d[0] < 1 or d[-1] < 1):
            raise ValueError("a non-empty pattern must start and end with an occupied site")

    @classmethod
    def parse(cls, text: str) -> "DefectPattern":
        """Build from a comma-separated string such as ``"2,1,3"``; empty string gives no defects."""
        text = text.strip()
        if not text:
            return cls(())
        return cls(tuple(int(tok) for tok in text.split(",")))

    @property
    def s(self) -> int:
        return len(self.d)

    @property
    def total(self) -> int:
        return sum(self.d)

    def __len__(self) -> int:
        return len(self.d)

    def __iter__(self):
        return iter(self.d)

    def __getitem__(self, i):
        return self.d[i]


def _as_tuple(pattern) -> tuple[int, ...]:
    if isinstance(pattern, DefectPattern):
        return pattern.d
    return tuple(int(x) for x in pattern)


def eta_power(j: int, r: int, y: float, params: ModelParams) -> float:
    """``eta_j(y)^r`` computed in log space, flushed to 0 below ``UNDERFLOW``."""
    e = eta(j, y, params)
    if r == 0 or j == 0:
        return 1.0
    logv = r * math.log(e)
    if logv < math.log(UNDERFLOW):
        return 0.0
    return math.exp(logv)


def _step(dist: np.ndarray, d: int, y: float, params: ModelParams) -> np.ndarray:
    # push an occupancy distribution through one vertex that injects d particles
    out = np.zeros(dist.shape[0] + d)
    for M, w in enumerate(dist):
        if w == 0.0:
            continue
        for k in range(M + 1):
            out[M - k + d] += w * phi(k, M, y, params)
    return out


_ROW_CACHE: dict[tuple, np.ndarray] = {}
_ROW_CACHE_MAX = 20000


def _g_row(pattern: tuple[int, ...], m: int, y: float, q: float, mu: float) -> np.ndarray:
    key = (pattern, m, y, q, mu)
    if key in _ROW_CACHE:
        return _ROW_CACHE[key]
    # resume from the longest prefix already tabulated
    start = len(pattern)
    while start > 0 and (pattern[:start], m, y, q, mu) not in _ROW_CACHE:
        start -= 1
    if start == 0:
        row = np.zeros(m + 1)
        row[m] = 1.0
    else:
        row = _ROW_CACHE[(pattern[:start], m, y, q, mu)]
    params = ModelParams(q, mu)
    if len(_ROW_CACHE) > _ROW_CACHE_MAX:
        _ROW_CACHE.clear()
    for t in range(start, len(pattern)):
        row = _step(row, pattern[t], y, params)
        row.setflags(write=False)
        _ROW_CACHE[(pattern[: t + 1], m, y, q, mu)] = row
    row.setflags(write=False)
    return row


def G_row(m: int, pattern, y: float, params: ModelParams) -> np.ndarray:
    """All values ``G_{m,l}(pattern)`` for ``l = 0 .. m + sum(pattern)`` as a read-only array."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return _g_row(_as_tuple(pattern), int(m), float(y), params.q, params.mu)


def G(m: int, l: int, pattern, y: float, params: ModelParams) -> float:
    """Kernel value ``G_{m,l}(d_1, ..., d_s)``; zero outside ``d_s <= l <= m + sum(d)``."""
    row = G_row(m, pattern, y, params)
    if l < 0 or l >= row.shape[0]:
        return 0.0
    return float(row[l])


def G_compose(left, right, m: int, l: int, y: float, params: ModelParams) -> float:
    """``sum_k G_{m,k}(left) G_{k,l}(right)``, the kernel of the concatenated pattern."""
    row = G_row(m, left, y, params)
    return float(sum(w * G(k, l, right, y, params) for k, w in enumerate(row) if w != 0.0))


# -- zero runs -----------------------------------------------------------------


def _zero_run_terms(m: int, i: int, r: int, y: float, params: ModelParams) -> list[float]:
    q = params.q
    return [
        (-1) ** (i + j)
        * q ** (0.5 * i * (i - 1) + 0.5 * j * (j + 1 - 2 * m))
        * q_binomial(m, j, q)
        * q_binomial(j, i, q)
        * eta_power(j, r, y, params)
        for j in range(i, m + 1)
    ]


def _mp_poch(z, q, n: int):
    return mpmath.fprod(1 - z * q**k for k in range(n)) if n else mpmath.mpf(1)


def _mp_qbin(a: int, b: int, q):
    return _mp_poch(q, q, a) / (_mp_poch(q, q, b) * _mp_poch(q, q, a - b))


def _zero_run_mp(m: int, i: int, r: int, y: float, params: ModelParams, dps: int) -> float:
    with mpmath.workdps(dps):
        q, mu, Y = mpmath.mpf(params.q), mpmath.mpf(params.mu), mpmath.mpf(y)
        total = mpmath.mpf(0)
        for j in range(i, m + 1):
            e = _mp_poch(Y, q, j) / _mp_poch(mu * Y, q, j)
            total += (
                (-1) ** (i + j)
                * q ** (mpmath.mpf(i * (i - 1)) / 2 + mpmath.mpf(j * (j + 1 - 2 * m)) / 2)
                * _mp_qbin(m, j, q)
                * _mp_qbin(j, i, q)
                * e**r
            )
        return float(total)


def G_zero_run(
    m: int,
    i: int,
    r: int,
    y: float,
    params: ModelParams,
    method: str = "auto",
    dps: int = 50,
) -> float:
    """``G_{m,i}`` over ``r`` consecutive empty sites.

    ``method`` selects the evaluation path:

    ``"closed"``
        alternating single sum over ``j`` with q-binomials and ``eta_j^r``,
        re-summed in ``dps`` digits when cancellation exceeds ``EXTEND_LIMIT``;
    ``"closed-float"``
        the same sum in plain double precision;
    ``"recursive"``
        the positive phi-chain;
    ``"mpmath"``
        the alternating sum in ``dps`` decimal digits;
    ``"auto"``
        closed form unless ``q < 0.2`` or its condition number exceeds ``1e8``.
    """
    if not 0 <= i <= m:
        return 0.0
    if r < 1:
        raise ValueError("run length must be at least 1")
    if method == "recursive":
        return G(m, i, (0,) * r, y, params)
    if method == "mpmath":
        return _zero_run_mp(m, i, r, y, params, dps)
    if method not in ("closed", "closed-float", "auto"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto" and params.q < Q_SWITCH:
        return G(m, i, (0,) * r, y, params)
    terms = _zero_run_terms(m, i, r, y, params)
    total = math.fsum(terms)
    if method == "closed-float":
        return total
    scale = math.fsum(abs(t) for t in terms)
    if method == "auto" and scale > COND_LIMIT * abs(total):
        return G(m, i, (0,) * r, y, params)
    if scale > EXTEND_LIMIT * abs(total):
        return _zero_run_mp(m, i, r, y, params, dps)
    return total


def F_definition(m: int, r: int, y: float, params: ModelParams) -> float:
    """``F_{m,r}(y)`` summed over all compositions of ``m`` into ``r`` parts (small ``m r`` only)."""
    if r < 1 or m < 0:
        raise ValueError("need m >= 0 and r >= 1")
    total = 0.0
    for ls in product(range(m + 1), repeat=r):
        if sum(ls) != m:
            continue
        w = 1.0
        for l in ls:
            w *= g_factor(l, params)
        for j in range(1, r):
            w *= eta(sum(ls[j:]), y, params)
        total += w
    return total


def _F_closed_mp(m: int, r: int, y: float, params: ModelParams, dps: int) -> float:
    with mpmath.workdps(dps):
        q, mu, Y = mpmath.mpf(params.q), mpmath.mpf(params.mu), mpmath.mpf(y)
        pref = Y ** (-m) * _mp_poch(mu * Y, q, m) / _mp_poch(q, q, m)
        total = mpmath.mpf(0)
        for j in range(m + 1):
            e = _mp_poch(Y, q, j) / _mp_poch(mu * Y, q, j)
            total += (-1) ** j * q ** (mpmath.mpf(j * (j + 1 - 2 * m)) / 2) * _mp_qbin(m, j, q) * e**r
        return float(pref * total)


def F_closed(m: int, r: int, y: float, params: ModelParams, dps: int = 50) -> float:
    """Alternating single-sum evaluation of ``F_{m,r}(y)``.

    Re-summed in ``dps`` digits when cancellation exceeds ``EXTEND_LIMIT``.
    """
    q, mu = params.q, params.mu
    pref = y ** (-m) * q_pochhammer(mu * y, q, m) / q_pochhammer(q, q, m)
    terms = [
        (-1) ** j * q ** (0.5 * j * (j + 1 - 2 * m)) * q_binomial(m, j, q) * eta_power(j, r, y, params)
        for j in range(m + 1)
    ]
    total = math.fsum(terms)
    if math.fsum(abs(t) for t in terms) > EXTEND_LIMIT * abs(total):
        return _F_closed_mp(m, r, y, params, dps)
    return pref * total


def G_zero_run_via_F(m: int, i: int, r: int, y: float, params: ModelParams) -> float:
    """Zero-run kernel expressed through ``F_{m-i,r}(q^i y)``."""
    if not 0 <= i <= m:
        return 0.0
    q, mu = params.q, params.mu
    pref = (
        y ** (m - i)
        * q_pochhammer(q, q, m)
        * q_pochhammer(mu * y, q, i)
        / (q_pochhammer(q, q, i) * q_pochhammer(mu * y, q, m))
    )
    return pref * eta_power(i, r, y, params) * F_closed(m - i, r, q**i * y, params)


# -- brackets and the K function -----------------------------------------------


def bracket_A(m: int, l: int, pattern, y: float, params: ModelParams) -> float:
    """Paired matrix element ``<m| A_{d_1} ... A_{d_s} |l>`` in closed form."""
    d = _as_tuple(pattern)
    q, mu = params.q, params.mu
    g = G(m, l, d, y, params)
    if g == 0.0:
        return 0.0
    gprod = math.prod(g_factor(x, params) for x in d)
    return (
        y ** (l - m - sum(d))
        * gprod
        * lambda_y(y, params) ** len(d)
        * q_pochhammer(q, q, l)
        * q_pochhammer(mu * y, q, m)
        / q_pochhammer(mu * y, q, l)
        * g
    )


def _inv_sum(m: int, z: float, q: float) -> float:
    # sum_{k<m} 1 / (1 - z q^k)
    return math.fsum(1.0 / (1.0 - z * q**k) for k in range(m))


def K(r: int, pattern, y: float, params: ModelParams) -> float:
    """``K(r) = sum_m G_{0,m}(d_1..d_r) sum_{k<m} 1/(1 - mu y q^k)`` with ``K(0) = 0``."""
    d = _as_tuple(pattern)
    if not 0 <= r <= len(d):
        raise ValueError(f"r must lie in [0, {len(d)}]")
    if r == 0:
        return 0.0
    row = G_row(0, d[:r], y, params)
    mu_y = params.mu * y
    return math.fsum(w * _inv_sum(M, mu_y, params.q) for M, w in enumerate(row) if w != 0.0)
