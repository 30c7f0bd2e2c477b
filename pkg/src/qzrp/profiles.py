"""Grand-canonical occupation law, density and currents of second-class particles around defects.

Sites are labelled so that the defect cluster occupies ``1..s``.  Region I is
``1 <= r <= s``, region II is ``r > s`` and region III is ``r <= 0``.  All
functions take the fugacity ``y``; use :func:`qzrp.qseries.solve_fugacity` to
start from a density.

Region II has two evaluation paths.  The closed forms are single sums over
modes ``eta_j^{r-s}`` with alternating signs; for small ``q`` or large defect
totals they lose precision, in which case the positive phi-chain over the
zero-extended pattern is used instead (``method="auto"``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .defect_kernel import G_row, _as_tuple, eta_power
from .qseries import (
    EnsembleParams,
    ModelParams,
    density,
    eta,
    h_deriv,
    log_q_pochhammer_inf,
    q_binomial,
    q_pochhammer,
)

REGION_I, REGION_II, REGION_III = "I", "II", "III"

# n-sums stop once the summand drops below this fraction of the running total
# and the geometric tail bound agrees.
_NSUM_RTOL = 1e-16
_NSUM_MAX = 2_000_000
# A region II mode sum is trusted when the sum of absolute terms exceeds the
# result by at most this factor (roughly 13 significant digits survive).
MODE_COND_LIMIT = 1e3


@dataclass(frozen=True)
class CurrentMix:
    """Weights ``a`` (right-moving part) and ``b`` (left-moving part) of the dynamics."""

    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError("mixture weights must be non-negative")


@dataclass(frozen=True)
class Profile:
    """Per-site density and currents over a window of sites."""

    r: np.ndarray
    region: tuple[str, ...]
    rho: np.ndarray
    j_plus: np.ndarray
    j_minus: np.ndarray
    j_mixed: np.ndarray
    baseline: tuple[float, float, float]
    pattern: tuple[int, ...] = ()
    mix: CurrentMix = field(default_factory=CurrentMix)

    def rows(self):
        """Iterate ``(r, region, rho, j_plus, j_minus, j_mixed)`` tuples."""
        for i in range(len(self.r)):
            yield (
                int(self.r[i]),
                self.region[i],
                float(self.rho[i]),
                float(self.j_plus[i]),
                float(self.j_minus[i]),
                float(self.j_mixed[i]),
            )


def region_of(r: int, s: int) -> str:
    if r <= 0:
        return REGION_III
    if r <= s:
        return REGION_I
    return REGION_II


# -- defect-free baseline ------------------------------------------------------


def _log_norm(y: float, params: ModelParams) -> float:
    # log of (y)_inf / (mu y)_inf
    return log_q_pochhammer_inf(y, params.q) - log_q_pochhammer_inf(params.mu * y, params.q)


def baseline_P(n: int, y: float, params: ModelParams) -> float:
    """Single-site law ``P(n) = y^n (mu)_n / (q)_n * (y)_inf / (mu y)_inf`` without defects."""
    if n < 0:
        return 0.0
    q, mu = params.q, params.mu
    return y**n * q_pochhammer(mu, q, n) / q_pochhammer(q, q, n) * math.exp(_log_norm(y, params))


def baseline_density(y: float, params: ModelParams) -> float:
    """Defect-free density ``f(y) - f(mu y)``."""
    return density(y, params)


def baseline_currents(y: float, params: ModelParams) -> tuple[float, float]:
    """``(J_+, J_-) = (h(mu y) / mu, h(y))``."""
    return h_deriv(params.mu * y, params.q) / params.mu, h_deriv(y, params.q)


def _sum_left(m: int, z: float, q: float, power: int = 1, numer: float | None = None) -> float:
    # sum_{k<m} z q^k / (1 - z q^k)^power  (numerator z q^k unless overridden)
    out = 0.0
    for k in range(max(m, 0)):
        t = z * q**k
        out += (t if numer is None else numer * q**k) / (1.0 - t) ** power
    return out


# -- region I ------------------------------------------------------------------


def _prefix_row(r: int, pattern, y: float, params: ModelParams) -> np.ndarray:
    d = _as_tuple(pattern)
    if not 1 <= r <= len(d):
        raise ValueError(f"site {r} is not inside the defect cluster of length {len(d)}")
    return G_row(0, d[:r], y, params)


def _P_I_from_row(n: int, dr: int, row: np.ndarray, y: float, params: ModelParams) -> float:
    q, mu = params.q, params.mu
    pref = y**n * q_pochhammer(q**dr * mu, q, n) / q_pochhammer(q, q, n) * math.exp(_log_norm(y, params))
    acc = 0.0
    for m, g in enumerate(row):
        if g == 0.0 or m < dr:
            continue
        acc += q ** (n * (m - dr)) * q_pochhammer(mu * y, q, m) / q_pochhammer(y, q, m - dr) * g
    return pref * acc


def P_I(r: int, n: int, pattern, y: float, params: ModelParams) -> float:
    """Probability of ``n`` second-class particles at defect site ``r`` (``1 <= r <= s``)."""
    d = _as_tuple(pattern)
    if n < 0:
        return 0.0
    return _P_I_from_row(n, d[r - 1], _prefix_row(r, d, y, params), y, params)


def _rho_from_row(dr: int, row: np.ndarray, y: float, params: ModelParams) -> float:
    q, mu = params.q, params.mu
    return math.fsum(
        g * (_sum_left(m, mu * y, q) - _sum_left(m - dr, y, q)) for m, g in enumerate(row) if g != 0.0
    )


def rho_I(r: int, pattern, y: float, params: ModelParams) -> float:
    """Mean second-class occupation at defect site ``r``."""
    d = _as_tuple(pattern)
    rho = baseline_density(y, params)
    return rho + _rho_from_row(d[r - 1], _prefix_row(r, d, y, params), y, params)


def _J_diff_from_row(dr: int, row: np.ndarray, y: float, params: ModelParams) -> tuple[float, float]:
    q, mu = params.q, params.mu
    dp = -math.fsum(g * _sum_left(m, mu * y, q, 2, numer=y) for m, g in enumerate(row) if g != 0.0)
    dm = -math.fsum(g * _sum_left(m - dr, y, q, 2) for m, g in enumerate(row) if g != 0.0)
    return dp, dm


def J_I(r: int, pattern, y: float, params: ModelParams, form: str = "difference") -> tuple[float, float]:
    """Currents ``(J_+(r), J_-(r))`` at defect site ``r``.

    ``form="difference"`` adds finite corrections to the baseline currents;
    ``form="h"`` writes each current as a ``G``-average of shifted ``h`` values.
    """
    d = _as_tuple(pattern)
    row = _prefix_row(r, d, y, params)
    q, mu = params.q, params.mu
    if form == "h":
        jp = math.fsum(g * h_deriv(q**m * mu * y, q) / mu for m, g in enumerate(row) if g != 0.0)
        jm = math.fsum(g * h_deriv(q ** (m - d[r - 1]) * y, q) for m, g in enumerate(row) if g != 0.0)
        return jp, jm
    if form != "difference":
        raise ValueError(f"unknown form {form!r}")
    jp0, jm0 = baseline_currents(y, params)
    dp, dm = _J_diff_from_row(d[r - 1], row, y, params)
    return jp0 + dp, jm0 + dm


# -- region II -----------------------------------------------------------------


def _mode_weights(pattern: tuple[int, ...], y: float, params: ModelParams) -> np.ndarray:
    # c_j = sum_m G_{0,m}(d) q^j (q^{-m})_j / (1 - q^j); the sign of each term is (-1)^j
    q = params.q
    row = G_row(0, pattern, y, params)
    top = len(row) - 1
    c = np.zeros(top + 1)
    for j in range(1, top + 1):
        c[j] = math.fsum(
            g * q**j * q_pochhammer(q ** (-m), q, j) / (1.0 - q**j) for m, g in enumerate(row) if g != 0.0 and m >= j
        )
    return c


def _mode_sum(terms: list[float]) -> tuple[float, float]:
    return math.fsum(terms), math.fsum(abs(t) for t in terms)


def _extended_row(u: int, pattern: tuple[int, ...], y: float, params: ModelParams) -> np.ndarray:
    return G_row(0, pattern + (0,) * u, y, params)


def _check_region_ii(r: int, d: tuple[int, ...]) -> int:
    if not d:
        raise ValueError("region II needs a non-empty pattern")
    u = r - len(d)
    if u < 1:
        raise ValueError(f"site {r} is not to the right of the defect cluster")
    return u


def _use_closed(value: float, scale: float, method: str) -> bool:
    if method == "closed":
        return True
    if method == "chain":
        return False
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    return well_conditioned(value, scale)


def well_conditioned(value: float, scale: float) -> bool:
    """True when an alternating mode sum is well conditioned."""
    return scale <= MODE_COND_LIMIT * abs(value) or scale < 1e-300


def P_II(r: int, n: int, pattern, y: float, params: ModelParams, method: str = "auto") -> float:
    """Probability of ``n`` second-class particles at site ``r > s``."""
    d = _as_tuple(pattern)
    u = _check_region_ii(r, d)
    if n < 0:
        return 0.0
    q = params.q
    row = G_row(0, d, y, params)
    terms = []
    for m, g in enumerate(row):
        if g == 0.0:
            continue
        for j in range(m + 1):
            base = g * q**j * q_pochhammer(q ** (-m), q, j) * eta_power(j, u, y, params)
            if base == 0.0:
                continue
            for i in range(j + 1):
                terms.append(
                    base
                    * (-1) ** i
                    * q ** (0.5 * i * (i - 1 + 2 * n))
                    / (q_pochhammer(q, q, i) * q_pochhammer(q, q, j - i) * eta(i, y, params))
                )
    value, scale = _mode_sum(terms)
    if _use_closed(value, scale, method):
        return baseline_P(n, y, params) * value
    return _P_I_from_row(n, 0, _extended_row(u, d, y, params), y, params)


def rho_II(r: int, pattern, y: float, params: ModelParams, method: str = "auto") -> float:
    """Mean second-class occupation at site ``r > s``."""
    d = _as_tuple(pattern)
    u = _check_region_ii(r, d)
    rho = baseline_density(y, params)
    q, mu = params.q, params.mu
    c = _mode_weights(d, y, params)
    terms = [
        c[j] * eta_power(j, u, y, params) * (1.0 / q_pochhammer(y, q, j) - 1.0 / q_pochhammer(mu * y, q, j))
        for j in range(1, len(c))
    ]
    value, scale = _mode_sum(terms)
    if _use_closed(value, scale, method):
        return rho + value
    return rho + _rho_from_row(0, _extended_row(u, d, y, params), y, params)


def J_II(r: int, pattern, y: float, params: ModelParams, method: str = "auto") -> tuple[float, float]:
    """Currents ``(J_+(r), J_-(r))`` at site ``r > s``."""
    d = _as_tuple(pattern)
    u = _check_region_ii(r, d)
    jp0, jm0 = baseline_currents(y, params)
    q, mu = params.q, params.mu
    c = _mode_weights(d, y, params)
    out = []
    for z in (mu * y, y):
        terms = [
            c[j] * eta_power(j, u, y, params) / q_pochhammer(z, q, j) * _sum_left(j, z, q, 1, numer=y)
            for j in range(1, len(c))
        ]
        out.append(_mode_sum(terms))
    if all(_use_closed(v, sc, method) for v, sc in out):
        return jp0 + out[0][0], jm0 + out[1][0]
    dp, dm = _J_diff_from_row(0, _extended_row(u, d, y, params), y, params)
    return jp0 + dp, jm0 + dm


# -- region III and assembly ---------------------------------------------------


def region_III(y: float, params: ModelParams) -> tuple[float, float, float]:
    """``(rho, J_+, J_-)`` left of the cluster, identical to the defect-free values."""
    jp, jm = baseline_currents(y, params)
    return baseline_density(y, params), jp, jm


def site_values(r: int, pattern, y: float, params: ModelParams, method: str = "auto") -> tuple[float, float, float]:
    """``(rho(r), J_+(r), J_-(r))`` dispatched on the region of ``r``."""
    d = _as_tuple(pattern)
    reg = region_of(r, len(d))
    if reg == REGION_III:
        return region_III(y, params)
    if reg == REGION_I:
        return (rho_I(r, d, y, params), *J_I(r, d, y, params))
    return (rho_II(r, d, y, params, method), *J_II(r, d, y, params, method))


def P_site(r: int, n: int, pattern, y: float, params: ModelParams) -> float:
    """Occupation law at any site, dispatched on the region."""
    d = _as_tuple(pattern)
    reg = region_of(r, len(d))
    if reg == REGION_III:
        return baseline_P(n, y, params)
    if reg == REGION_I:
        return P_I(r, n, d, y, params)
    return P_II(r, n, d, y, params)


def total_excess(pattern, y: float, params: ModelParams, method: str = "auto") -> float:
    """Summed deviation ``sum_r (rho(r) - rho)`` over the whole line.

    The region II tail is summed per mode with ``sum_{u>=1} eta_j^u = eta_j / (1 - eta_j)``.
    When that alternating sum is ill conditioned (``method="auto"``) or on request
    (``method="resolvent"``), the tail is instead obtained from the resolvent of the
    one-site zero-run kernel restricted to occupancies ``>= 1``, which is an M-matrix
    solve with non-negative entries throughout.
    """
    d = _as_tuple(pattern)
    if not d:
        return 0.0
    rho = baseline_density(y, params)
    q, mu = params.q, params.mu
    inside = math.fsum(rho_I(r, d, y, params) - rho for r in range(1, len(d) + 1))
    if method in ("auto", "closed"):
        c = _mode_weights(d, y, params)
        terms = []
        for j in range(1, len(c)):
            e = eta(j, y, params)
            terms.append(
                c[j] * e / (1.0 - e) * (1.0 / q_pochhammer(y, q, j) - 1.0 / q_pochhammer(mu * y, q, j))
            )
        value, scale = _mode_sum(terms)
        if method == "closed" or well_conditioned(value, scale):
            return inside + value
    elif method != "resolvent":
        raise ValueError(f"unknown method {method!r}")
    row = np.asarray(G_row(0, d, y, params))
    top = len(row) - 1
    # one empty site: occupancy k -> k - l with weight phi(l|k); restricted to k >= 1
    Z = np.array([[G_row(k, (0,), y, params)[m] if m <= k else 0.0 for m in range(1, top + 1)] for k in range(1, top + 1)])
    v = np.array([_sum_left(m, mu * y, q) - _sum_left(m, y, q) for m in range(1, top + 1)])
    x = np.linalg.solve(np.eye(top) - Z, Z @ v)
    return inside + float(row[1:] @ x)


def profile(
    window: Sequence[int] | range,
    pattern,
    ens: EnsembleParams | float,
    params: ModelParams,
    mix: CurrentMix | None = None,
    shift: int = 0,
    method: str = "auto",
) -> Profile:
    """Assemble density and currents over ``window`` (site labels before ``shift``).

    The mixed current ``J(r) = a J_+(r) - b J_-(r+1)`` runs from ``r`` to ``r+1``.
    ``shift`` is added to the reported site labels only.
    """
    d = _as_tuple(pattern)
    mix = mix or CurrentMix()
    y = ens.y if isinstance(ens, EnsembleParams) else float(ens)
    sites = list(window)
    if not sites:
        raise ValueError("window must contain at least one site")
    vals = {r: site_values(r, d, y, params, method) for r in sites + [sites[-1] + 1]}
    rho = np.array([vals[r][0] for r in sites])
    jp = np.array([vals[r][1] for r in sites])
    jm = np.array([vals[r][2] for r in sites])
    jmix = np.array([mix.a * vals[r][1] - mix.b * vals[r + 1][2] for r in sites])
    return Profile(
        r=np.array(sites) + shift,
        region=tuple(region_of(r, len(d)) for r in sites),
        rho=rho,
        j_plus=jp,
        j_minus=jm,
        j_mixed=jmix,
        baseline=region_III(y, params),
        pattern=d,
        mix=mix,
    )


# -- asymptotics ---------------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticLimits:
    """Limit values per site.

    For ``which="low"`` the fields hold ``rho(r)/rho``, ``J_+(r)/J_+`` and ``J_-(r)/J_-``.
    For ``which="high"`` they hold ``rho(r) - rho``, ``J_+(r) - J_+`` and ``(J_-(r) - J_-)/rho``.
    """

    which: str
    r: np.ndarray
    rho: np.ndarray
    j_plus: np.ndarray
    j_minus: np.ndarray


def _inv(d: int, mu: float, q: float) -> float:
    return math.fsum(1.0 / (1.0 - mu * q**k) for k in range(d))


def asymptotic_limits(pattern, params: ModelParams, which: str, window: Sequence[int] | range) -> AsymptoticLimits:
    """Closed-form low-density (``"low"``) or high-density (``"high"``) limits over ``window``."""
    d = _as_tuple(pattern)
    s = len(d)
    q, mu = params.q, params.mu
    cum = np.concatenate([[0], np.cumsum(d)]).astype(int)
    rows = []
    for r in window:
        reg = region_of(r, s)
        if which == "low":
            if reg == REGION_III:
                rows.append((1.0, 1.0, 1.0))
            elif reg == REGION_I:
                rows.append(((1 - mu * q ** d[r - 1]) / (1 - mu) * q ** cum[r - 1], q ** cum[r], q ** cum[r - 1]))
            else:
                v = q ** cum[s]
                rows.append((v, v, v))
        elif which == "high":
            if reg == REGION_III:
                rows.append((0.0, 0.0, 0.0))
            elif reg == REGION_I:
                dr = d[r - 1]
                dprev = d[r - 2] if r >= 2 else 0
                rows.append(
                    (
                        math.fsum(mu * q**k / (1 - mu * q**k) for k in range(dr)) - _inv(dprev, mu, q),
                        -math.fsum(q**k / (1 - mu * q**k) ** 2 for k in range(dr)),
                        -_inv(dprev, mu, q),
                    )
                )
            else:
                edge = -_inv(d[-1], mu, q) if r == s + 1 else 0.0
                rows.append((edge, 0.0, edge))
        else:
            raise ValueError("which must be 'low' or 'high'")
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return AsymptoticLimits(which, np.array(list(window)), arr[:, 0], arr[:, 1], arr[:, 2])


def numeric_limits(
    pattern,
    params: ModelParams,
    which: str,
    window: Sequence[int] | range,
    eps: float | None = None,
) -> AsymptoticLimits:
    """Profile values at extreme fugacity arranged like :func:`asymptotic_limits`.

    ``"low"`` evaluates at ``y = eps`` (default ``1e-6``).  ``"high"`` evaluates at
    ``y = 1 - eps`` and ``y = 1 - 2 eps`` (default ``eps = 1e-4``) and removes the
    leading linear term in ``1 - y`` by Richardson extrapolation.
    """
    d = _as_tuple(pattern)
    sites = list(window)

    def sample(y: float) -> np.ndarray:
        rho = baseline_density(y, params)
        jp, jm = baseline_currents(y, params)
        out = []
        for r in sites:
            v = site_values(r, d, y, params)
            if which == "low":
                out.append((v[0] / rho, v[1] / jp, v[2] / jm))
            else:
                out.append((v[0] - rho, v[1] - jp, (v[2] - jm) / rho))
        return np.array(out, dtype=float).reshape(-1, 3)

    if which == "low":
        arr = sample(1e-6 if eps is None else eps)
    elif which == "high":
        eps = 1e-4 if eps is None else eps
        arr = 2 * sample(1 - eps) - sample(1 - 2 * eps)
    else:
        raise ValueError("which must be 'low' or 'high'")
    return AsymptoticLimits(which, np.array(sites), arr[:, 0], arr[:, 1], arr[:, 2])


def homogeneous_density_limits(d: int, s: int, params: ModelParams, window) -> tuple[np.ndarray, np.ndarray]:
    """Low and high density limits of ``rho(r)`` for ``s`` sites each holding ``d`` defects.

    Expressed through ``D = sum_{k<d} 1/(1 - mu q^k)`` and ``nu = (1 - mu q^d)/(1 - mu)``.
    """
    q, mu = params.q, params.mu
    D = _inv(d, mu, q)
    nu = (1 - mu * q**d) / (1 - mu)
    low, high = [], []
    for r in window:
        if 1 <= r <= s:
            low.append(nu * q ** ((r - 1) * d))
            high.append(D - d if r == 1 else -d)
        elif r > s:
            low.append(q ** (s * d))
            high.append(-D if r == s + 1 else 0.0)
        else:
            low.append(1.0)
            high.append(0.0)
    return np.array(low), np.array(high)


# -- direct n-sum oracles ------------------------------------------------------


def rate_plus(l: int, a1: int, n: int, params: ModelParams) -> float:
    """Rate at which ``l`` second-class particles leave a site ``(a1, n)`` to the right."""
    q, mu = params.q, params.mu
    if not 1 <= l <= n:
        return 0.0
    return (
        q ** (a1 * l)
        * mu ** (l - 1)
        * q_pochhammer(q, q, l - 1)
        / q_pochhammer(mu * q ** (a1 + n - l), q, l)
        * q_binomial(n, l, q)
    )


def rate_minus(l: int, b1: int, n: int, params: ModelParams) -> float:
    """Rate at which ``l`` second-class particles leave a site ``(b1, n)`` to the left."""
    q, mu = params.q, params.mu
    if not 1 <= l <= n:
        return 0.0
    return q_pochhammer(q, q, l - 1) / q_pochhammer(mu * q ** (b1 + n - l), q, l) * q_binomial(n, l, q)


def n_sum(fn, start: int = 0, tail_ratio: float | None = None) -> float:
    """Sum ``fn(n)`` for ``n >= start`` until terms become negligible.

    Stops when the current term is below ``1e-16`` of the running total for 8
    consecutive terms; with ``tail_ratio`` given the geometric tail bound
    ``term * ratio / (1 - ratio)`` must be negligible too.
    """
    total = 0.0
    quiet = 0
    for n in range(start, start + _NSUM_MAX):
        t = fn(n)
        total += t
        small = abs(t) <= _NSUM_RTOL * abs(total)
        if small and tail_ratio is not None:
            small = abs(t) * tail_ratio / (1.0 - tail_ratio) <= _NSUM_RTOL * abs(total)
        quiet = quiet + 1 if small else 0
        if quiet >= 8 and total != 0.0:
            return total
    raise RuntimeError("n-sum did not converge")


def current_oracle(r: int, pattern, y: float, params: ModelParams) -> tuple[float, float]:
    """``sum_{n>=l>=1} l w_pm((0,l)|(d_r,n)) P(r,n)`` by direct summation."""
    d = _as_tuple(pattern)
    dr = d[r - 1] if region_of(r, len(d)) == REGION_I else 0

    def term(rate):
        def fn(n):
            p = P_site(r, n, d, y, params)
            return p * math.fsum(l * rate(l, dr, n, params) for l in range(1, n + 1))

        return fn

    return n_sum(term(rate_plus), 1, tail_ratio=y), n_sum(term(rate_minus), 1, tail_ratio=y)


def density_oracle(r: int, pattern, y: float, params: ModelParams) -> float:
    """``sum_n n P(r,n)`` by direct summation."""
    d = _as_tuple(pattern)
    return n_sum(lambda n: n * P_site(r, n, d, y, params), 1, tail_ratio=y)


def normalization_oracle(r: int, pattern, y: float, params: ModelParams) -> float:
    """``sum_n P(r,n)`` by direct summation."""
    d = _as_tuple(pattern)
    return n_sum(lambda n: P_site(r, n, d, y, params), 0, tail_ratio=y)
