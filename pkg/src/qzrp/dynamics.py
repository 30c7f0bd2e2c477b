"""Finite-ring Markov dynamics: stochastic R matrix, transfer matrix, generators and sampling.

Occupancies are tuples of length ``n`` (``n`` particle classes).  A ring state is
a tuple of ``L`` such tuples.  Matrices act on column vectors of probabilities,
``M[out, in]``, so stochastic matrices have unit column sums and generators
have zero column sums.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ParameterRegimeError, ResourceLimitError
from .profiles import CurrentMix
from .qseries import ModelParams, q_binomial, q_pochhammer
from .sectors import enumerate_sector

MAX_STATES = 100_000
DENSE_LIMIT = 2000


def _pair_phase(a: Sequence[int], b: Sequence[int]) -> int:
    # sum_{i<j} a_i b_j
    out = 0
    acc = 0
    for i in range(len(a)):
        out += acc * b[i]
        acc += a[i]
    return out


def phi_q(gamma: Sequence[int], beta: Sequence[int], lam: float, mu: float, q: float) -> float:
    """Stochastic R-matrix weight ``Phi_q(gamma|beta; lambda, mu)``; zero unless ``gamma <= beta``."""
    if len(gamma) != len(beta):
        raise ValueError("occupancy vectors must have equal length")
    if any(g < 0 or g > b for g, b in zip(gamma, beta)):
        return 0.0
    return _phi_q(tuple(gamma), tuple(beta), lam, mu, q)


@lru_cache(maxsize=1 << 16)
def _phi_q(gamma: tuple, beta: tuple, lam: float, mu: float, q: float) -> float:
    g, b = sum(gamma), sum(beta)
    diff = tuple(x - y for x, y in zip(beta, gamma))
    val = (
        q ** _pair_phase(diff, gamma)
        * (mu / lam) ** g
        * q_pochhammer(lam, q, g)
        * q_pochhammer(mu / lam, q, b - g)
        / q_pochhammer(mu, q, b)
    )
    for gi, bi in zip(gamma, beta):
        val *= q_binomial(bi, gi, q)
    return val


def sub_vectors(beta: Sequence[int]):
    """All ``gamma`` with ``0 <= gamma <= beta`` componentwise."""
    return product(*(range(b + 1) for b in beta))


def r_matrix_element(gamma, delta, alpha, beta, lam: float, mu: float, q: float) -> float:
    """``S(lambda, mu)^{gamma, delta}_{alpha, beta}``."""
    if any(g + d != a + b for g, d, a, b in zip(gamma, delta, alpha, beta)):
        return 0.0
    return phi_q(gamma, beta, lam, mu, q)


def r_matrix_apply(alpha, beta, lam: float, mu: float, q: float) -> dict:
    """Image of ``|alpha> (x) |beta>`` as a map ``(gamma, delta) -> weight``."""
    out = {}
    for gamma in sub_vectors(beta):
        w = phi_q(gamma, beta, lam, mu, q)
        if w != 0.0:
            delta = tuple(a + b - g for a, b, g in zip(alpha, beta, gamma))
            out[(tuple(gamma), delta)] = w
    return out


# -- sectors ---------------------------------------------------------------------


@dataclass(frozen=True)
class SectorBasis:
    """Enumerated states of a sector with a lookup from state to index."""

    L: int
    totals: tuple[int, ...]
    states: tuple
    index: dict

    @classmethod
    def build(cls, L: int, totals: Sequence[int], max_states: int = MAX_STATES) -> "SectorBasis":
        size = 1
        for t in totals:
            size *= math.comb(t + L - 1, L - 1)
        if size > max_states:
            raise ResourceLimitError(f"sector with {size} states exceeds the limit {max_states}")
        states = tuple(enumerate_sector(L, tuple(totals)))
        return cls(L, tuple(totals), states, {s: i for i, s in enumerate(states)})

    @property
    def n(self) -> int:
        return len(self.totals)

    def __len__(self) -> int:
        return len(self.states)


def _basis(L, sector) -> SectorBasis:
    if isinstance(sector, SectorBasis):
        return sector
    return SectorBasis.build(L, tuple(sector))


def transfer_matrix(L: int, sector, lam: float, mu: float, q: float, check: bool = True) -> np.ndarray:
    """Dense Markov transfer matrix ``T(lambda | mu, ..., mu)`` on a sector.

    Every R matrix has its input from the auxiliary line on the left and the
    site below, so site ``i`` emits ``gamma_i <= beta_i`` to the right with weight
    ``Phi_q(gamma_i|beta_i)`` and keeps ``beta_i - gamma_i + gamma_{i-1}``.  The
    auxiliary trace is therefore a plain product over sites.
    """
    if check and not 0.0 < mu < lam < 1.0 and not (lam == 1.0 or lam == mu):
        raise ParameterRegimeError("positivity requires 0 < mu < lambda < 1")
    basis = _basis(L, sector)
    T = np.zeros((len(basis), len(basis)))
    for col, beta in enumerate(basis.states):
        emit_choices = []
        for b in beta:
            emit_choices.append([(g, phi_q(g, b, lam, mu, q)) for g in sub_vectors(b)])
        for choice in product(*emit_choices):
            w = 1.0
            for _, wi in choice:
                w *= wi
            if w == 0.0:
                continue
            alpha = tuple(
                tuple(b - g + gp for b, g, gp in zip(beta[i], choice[i][0], choice[i - 1][0])) for i in range(L)
            )
            T[basis.index[alpha], col] += w
    return T


# -- continuous-time generators ----------------------------------------------------


@lru_cache(maxsize=1 << 14)
def _h_plus(alpha: tuple, q: float, mu: float) -> tuple:
    out = []
    a = sum(alpha)
    for gamma in sub_vectors(alpha):
        g = sum(gamma)
        if g == 0:
            continue
        rest = tuple(x - y for x, y in zip(alpha, gamma))
        w = (
            q ** _pair_phase(rest, gamma)
            * mu ** (g - 1)
            * q_pochhammer(q, q, g - 1)
            / q_pochhammer(mu * q ** (a - g), q, g)
        )
        for ai, gi in zip(alpha, gamma):
            w *= q_binomial(ai, gi, q)
        out.append((tuple(gamma), w))
    diag = -math.fsum(q**i / (1.0 - mu * q**i) for i in range(a))
    return tuple(out), diag


@lru_cache(maxsize=1 << 14)
def _h_minus(beta: tuple, q: float, mu: float) -> tuple:
    out = []
    b = sum(beta)
    for gamma in sub_vectors(beta):
        g = sum(gamma)
        if g == 0:
            continue
        rest = tuple(x - y for x, y in zip(beta, gamma))
        w = q ** _pair_phase(gamma, rest) * q_pochhammer(q, q, g - 1) / q_pochhammer(mu * q ** (b - g), q, g)
        for bi, gi in zip(beta, gamma):
            w *= q_binomial(bi, gi, q)
        out.append((tuple(gamma), w))
    diag = -math.fsum(1.0 / (1.0 - mu * q**i) for i in range(b))
    return tuple(out), diag


def local_h(kind: str, alpha: Sequence[int], beta: Sequence[int], params: ModelParams) -> dict:
    """Action of the pair generator ``h_+`` or ``h_-`` on ``|alpha> (x) |beta>``.

    ``h_+`` moves a multiset ``gamma`` out of the left site into the right one,
    ``h_-`` moves it from the right site into the left one.  Returns a map
    ``(alpha', beta') -> rate`` including the diagonal entry.
    """
    alpha, beta = tuple(alpha), tuple(beta)
    out = {}
    if kind == "+":
        moves, diag = _h_plus(alpha, params.q, params.mu)
        for gamma, w in moves:
            key = (tuple(a - g for a, g in zip(alpha, gamma)), tuple(b + g for b, g in zip(beta, gamma)))
            out[key] = out.get(key, 0.0) + w
    elif kind == "-":
        moves, diag = _h_minus(beta, params.q, params.mu)
        for gamma, w in moves:
            key = (tuple(a + g for a, g in zip(alpha, gamma)), tuple(b - g for b, g in zip(beta, gamma)))
            out[key] = out.get(key, 0.0) + w
    else:
        raise ValueError("kind must be '+' or '-'")
    out[(alpha, beta)] = out.get((alpha, beta), 0.0) + diag
    return out


def rate_w_plus(gamma: Sequence[int], alpha: Sequence[int], params: ModelParams) -> float:
    """Rate of the jump carrying ``gamma`` from a site holding ``alpha`` to its right neighbour."""
    for g, w in _h_plus(tuple(alpha), params.q, params.mu)[0]:
        if g == tuple(gamma):
            return w
    return 0.0


def rate_w_minus(gamma: Sequence[int], beta: Sequence[int], params: ModelParams) -> float:
    """Rate of the jump carrying ``gamma`` from a site holding ``beta`` to its left neighbour."""
    for g, w in _h_minus(tuple(beta), params.q, params.mu)[0]:
        if g == tuple(gamma):
            return w
    return 0.0


def _transitions(basis: SectorBasis, params: ModelParams, mix: CurrentMix):
    # yields (target index, source index, rate) for every off-diagonal move, plus exit rates
    L = basis.L
    exits = np.zeros(len(basis))
    rows, cols, vals = [], [], []
    for col, state in enumerate(basis.states):
        for i in range(L):
            j = (i + 1) % L
            for kind, weight in (("+", mix.a), ("-", mix.b)):
                if weight == 0.0:
                    continue
                if kind == "+":
                    moves, diag = _h_plus(state[i], params.q, params.mu)
                else:
                    moves, diag = _h_minus(state[j], params.q, params.mu)
                exits[col] -= weight * diag
                for gamma, w in moves:
                    new = list(state)
                    if kind == "+":
                        new[i] = tuple(a - g for a, g in zip(state[i], gamma))
                        new[j] = tuple(b + g for b, g in zip(new[j], gamma))
                    else:
                        new[j] = tuple(b - g for b, g in zip(state[j], gamma))
                        new[i] = tuple(a + g for a, g in zip(new[i], gamma))
                    rows.append(basis.index[tuple(new)])
                    cols.append(col)
                    vals.append(weight * w)
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals), exits


def build_H(L: int, sector, params: ModelParams, mix: CurrentMix | None = None) -> sp.csc_matrix:
    """Sparse generator ``a H_+ + b H_-`` on a sector (default ``a=1, b=0``)."""
    mix = mix or CurrentMix()
    basis = _basis(L, sector)
    rows, cols, vals, exits = _transitions(basis, params, mix)
    n = len(basis)
    H = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    return (H - sp.diags(exits)).tocsc()


def stationary_solve(M, kind: str = "H", tol: float = 1e-8) -> np.ndarray:
    """Normalized stationary vector of a generator (``kind="H"``) or stochastic matrix (``"T"``).

    Small matrices use a dense SVD null space, which also certifies uniqueness via
    the second-smallest singular value.  Large generators use a sparse solve with
    one component pinned.
    """
    A = M.toarray() if sp.issparse(M) and M.shape[0] <= DENSE_LIMIT else M
    if kind == "T":
        A = A - (sp.identity(A.shape[0]) if sp.issparse(A) else np.eye(A.shape[0]))
    elif kind != "H":
        raise ValueError("kind must be 'H' or 'T'")
    n = A.shape[0]
    if n == 1:
        return np.ones(1)
    if not sp.issparse(A):
        _, s, vt = np.linalg.svd(A)
        if s[-2] < tol * max(1.0, s[0]):
            raise ValueError("stationary vector is not unique")
        v = vt[-1]
    else:
        # replace one balance equation by the normalization
        B = A.tolil()
        B[0, :] = np.ones(n)
        rhs = np.zeros(n)
        rhs[0] = 1.0
        v = spla.spsolve(B.tocsc(), rhs)
    v = np.real(v)
    return v / v.sum()


def null_space_residual(H, v: np.ndarray) -> float:
    """Max-norm of ``H v`` relative to the largest rate."""
    Hv = H @ v
    scale = abs(H).max() if sp.issparse(H) else np.abs(H).max()
    return float(np.max(np.abs(Hv)) / scale)


# -- simulation --------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationResult:
    """Time-averaged site occupation law from a single trajectory.

    ``law[k, c, n]`` is the fraction of time site ``k`` held ``n`` particles of
    class ``c``; ``stderr`` holds batch-means standard errors of the same shape.
    """

    law: np.ndarray
    stderr: np.ndarray
    events: int
    time: float
    batches: int
    seed: int
    wall: float

    def mean_occupation(self) -> np.ndarray:
        n = np.arange(self.law.shape[2])
        return self.law @ n


def gillespie(
    L: int,
    sector: Sequence[int],
    params: ModelParams,
    mix: CurrentMix | None = None,
    events: int = 1_000_000,
    seed: int = 0,
    batches: int = 50,
    start: int = 0,
    burn_in: int = 10_000,
) -> SimulationResult:
    """Continuous-time simulation of the ring generator by the direct method.

    The chain is run on the enumerated sector: outgoing transitions of every state
    are precomputed as a cumulative rate table so that each step costs a binary
    search.  Holding times are accumulated per state in ``batches`` consecutive
    blocks of equal event count and converted into per-site occupation laws.
    """
    t0 = time.perf_counter()
    mix = mix or CurrentMix()
    basis = SectorBasis.build(L, tuple(sector))
    rows, cols, vals, exits = _transitions(basis, params, mix)
    n = len(basis)
    order = np.lexsort((rows, cols))
    rows, cols, vals = rows[order], cols[order], vals[order]
    ptr = np.searchsorted(cols, np.arange(n + 1))
    cum = np.empty_like(vals)
    for s in range(n):
        seg = slice(ptr[s], ptr[s + 1])
        cum[seg] = np.cumsum(vals[seg])
    totals = np.array([cum[ptr[s + 1] - 1] if ptr[s + 1] > ptr[s] else 0.0 for s in range(n)])
    if np.any(totals <= 0.0):
        raise ValueError("sector contains an absorbing state")

    rng = np.random.default_rng(seed)
    per_batch = events // batches
    occupancy = np.zeros((batches, n))
    state = start
    for _ in range(burn_in):
        u = rng.random() * totals[state]
        state = rows[ptr[state] + np.searchsorted(cum[ptr[state] : ptr[state + 1]], u, side="right")]
    for b in range(batches):
        hold = rng.exponential(1.0, per_batch)
        us = rng.random(per_batch)
        acc = occupancy[b]
        for k in range(per_batch):
            tot = totals[state]
            acc[state] += hold[k] / tot
            lo, hi = ptr[state], ptr[state + 1]
            idx = lo + np.searchsorted(cum[lo:hi], us[k] * tot, side="right")
            state = rows[min(idx, hi - 1)]
    times = occupancy.sum(axis=1)

    nmax = max(basis.totals) + 1
    ncls = basis.n
    proj = np.zeros((n, L, ncls, nmax))
    for s, st in enumerate(basis.states):
        for k in range(L):
            for c in range(ncls):
                proj[s, k, c, st[k][c]] = 1.0
    batch_laws = np.einsum("bs,skcn->bkcn", occupancy / times[:, None], proj)
    law = np.einsum("s,skcn->kcn", occupancy.sum(axis=0) / times.sum(), proj)
    stderr = batch_laws.std(axis=0, ddof=1) / math.sqrt(batches)
    return SimulationResult(
        law=law,
        stderr=stderr,
        events=per_batch * batches,
        time=float(times.sum()),
        batches=batches,
        seed=seed,
        wall=time.perf_counter() - t0,
    )


def exact_site_law(L: int, sector: Sequence[int], params: ModelParams, mix: CurrentMix | None = None) -> np.ndarray:
    """Per-site occupation law of the exact stationary vector, shaped like ``SimulationResult.law``."""
    basis = SectorBasis.build(L, tuple(sector))
    v = stationary_solve(build_H(L, basis, params, mix))
    nmax = max(basis.totals) + 1
    law = np.zeros((L, basis.n, nmax))
    for p, st in zip(v, basis.states):
        for k in range(L):
            for c in range(basis.n):
                law[k, c, st[k][c]] += p
    return law
