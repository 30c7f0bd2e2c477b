"""Named self-check suites used by ``qzrp verify``.

Each suite is a list of checks comparing two independently computed numbers.
Tolerances are multiplied by ``tol_scale`` so that a tiny scale forces failures.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import defect_kernel as dk
from . import dynamics as dyn
from . import profiles as pf
from . import qboson as qb
from .qseries import (
    ModelParams,
    density,
    eta,
    f_qdigamma,
    h_deriv,
    phi,
    q_binomial,
    q_pochhammer,
    solve_fugacity,
)


@dataclass(frozen=True)
class Check:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    checks: tuple[Check, ...]
    seconds: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "seconds": self.seconds,
            "checks": [dict(asdict(c), passed=c.passed) for c in self.checks],
        }


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _qseries_identities(p: ModelParams, rng: np.random.Generator) -> list[Check]:
    q, mu = p.q, p.mu
    out = []
    zeta = 0.5
    direct = math.fsum(zeta**i / (1 - q**i) for i in range(1, 400))
    out.append(Check("f dual series", _rel(f_qdigamma(zeta, q), direct), 1e-12))
    direct_h = math.fsum(i * zeta**i / (1 - q**i) for i in range(1, 400))
    out.append(Check("h dual series", _rel(h_deriv(zeta, q), direct_h), 1e-12))
    for rho in (0.1, 1.5, 7.0):
        out.append(Check(f"fugacity round trip rho={rho}", _rel(density(solve_fugacity(rho, p), p), rho), 1e-10))
    y = float(rng.uniform(0.1, 0.9))
    for m in range(8):
        out.append(Check(f"phi sum rule m={m}", abs(math.fsum(phi(l, m, y, p) for l in range(m + 1)) - 1), 1e-13))
    for d in range(1, 8):
        lhs = (
            q_pochhammer(q, q, d)
            / q_pochhammer(mu, q, d)
            * math.fsum(
                q_pochhammer(mu, q, d - k) / ((1 - q**k) * q_pochhammer(q, q, d - k)) for k in range(1, d + 1)
            )
        )
        rhs = math.fsum(1 / (1 - mu * q**k) for k in range(d))
        out.append(Check(f"boundary identity d={d}", _rel(lhs, rhs), 1e-12))
    for m in range(1, 8):
        lhs = math.fsum(
            phi(m - j, m, y, p) * math.fsum(1 / (1 - y * q**i) for i in range(j)) for j in range(1, m + 1)
        )
        rhs = math.fsum(1 / (1 - mu * y * q**k) for k in range(m))
        out.append(Check(f"induction identity m={m}", _rel(lhs, rhs), 1e-12))
    i, j = 2, 3
    out.append(
        Check("eta cocycle", _rel(eta(i + j, y, p), eta(i, y, p) * eta(j, q**i * y, p)), 1e-14)
    )
    return out


def _g_kernel(p: ModelParams, rng: np.random.Generator) -> list[Check]:
    out = []
    y = float(rng.uniform(0.2, 0.8))
    for pattern in [(1,), (2, 1), (1, 0, 2), (3, 1, 2)]:
        for m in range(4):
            row = dk.G_row(m, pattern, y, p)
            out.append(Check(f"G sum {pattern} m={m}", abs(row.sum() - 1), 1e-13))
            outside = np.abs(row[: pattern[-1]]).sum() if pattern[-1] else 0.0
            out.append(Check(f"G support {pattern} m={m}", float(outside), 0.0))
    for m in range(5):
        for i in range(m + 1):
            for r in (1, 3, 6):
                a = dk.G_zero_run(m, i, r, y, p, method="closed")
                b = dk.G_zero_run(m, i, r, y, p, method="recursive")
                out.append(Check(f"zero run m={m} i={i} r={r}", abs(a - b), 1e-11))
    for m in range(5):
        for r in range(1, 5):
            out.append(
                Check(
                    f"F forms m={m} r={r}",
                    _rel(dk.F_definition(m, r, y, p), dk.F_closed(m, r, y, p)),
                    1e-11,
                )
            )
    pattern = (2, 0, 1)
    N = 12
    mats = [qb.build_A(d, y, N, p).entries for d in pattern]
    prod = mats[0] @ mats[1] @ mats[2]
    for m in range(3):
        for l in range(1, 5):
            mat = q_pochhammer(p.q, p.q, m) * prod[m, l]
            ref = dk.bracket_A(m, l, pattern, y, p)
            out.append(Check(f"bracket m={m} l={l}", abs(mat - ref) / max(abs(ref), 1.0), 1e-10))
    return out


def _theorem_consistency(p: ModelParams, rng: np.random.Generator) -> list[Check]:
    out = []
    rho = float(rng.uniform(0.3, 3.0))
    y = solve_fugacity(rho, p)
    pattern = (2, 1)
    s = len(pattern)
    for r in range(-1, s + 4):
        norm = pf.normalization_oracle(r, pattern, y, p)
        out.append(Check(f"normalization r={r}", abs(norm - 1), 1e-12))
        dens = pf.density_oracle(r, pattern, y, p)
        ref = pf.site_values(r, pattern, y, p)
        out.append(Check(f"density r={r}", _rel(ref[0], dens), 1e-10))
        jp, jm = pf.current_oracle(r, pattern, y, p)
        out.append(Check(f"J+ r={r}", _rel(ref[1], jp), 1e-9))
        out.append(Check(f"J- r={r}", _rel(ref[2], jm), 1e-9))
    for r in range(1, s + 1):
        a = pf.J_I(r, pattern, y, p, "difference")
        b = pf.J_I(r, pattern, y, p, "h")
        out.append(Check(f"J_I forms r={r}", max(_rel(a[0], b[0]), _rel(a[1], b[1])), 1e-12))
    for r in range(s + 1, s + 4):
        ext = pattern + (0,) * (r - s)
        for n in range(4):
            a = pf.P_II(r, n, pattern, y, p, method="closed")
            b = pf._P_I_from_row(n, 0, dk.G_row(0, ext, y, p), y, p)
            out.append(Check(f"P_II extended r={r} n={n}", _rel(a, b), 1e-11))
    return out


def _dynamics_oracle(p: ModelParams, rng: np.random.Generator) -> list[Check]:
    out = []
    q, mu = p.q, p.mu
    for n in (1, 2, 3):
        beta = tuple(int(x) for x in rng.integers(0, 3, n))
        lam = float(rng.uniform(mu, 1.0))
        total = math.fsum(dyn.phi_q(g, beta, lam, mu, q) for g in dyn.sub_vectors(beta))
        out.append(Check(f"R sum rule n={n} beta={beta}", abs(total - 1), 1e-12))
    L, sector = 3, (2, 1)
    basis = dyn.SectorBasis.build(L, sector)
    T1 = dyn.transfer_matrix(L, basis, 0.75 + 0.2 * mu, mu, q)
    T2 = dyn.transfer_matrix(L, basis, 0.5 * (1 + mu), mu, q)
    out.append(Check("T column sums", float(np.abs(T1.sum(axis=0) - 1).max()), 1e-12))
    out.append(Check("[T, T']", float(np.abs(T1 @ T2 - T2 @ T1).max()), 1e-10))
    Hp = dyn.build_H(L, basis, p, pf.CurrentMix(1, 0)).toarray()
    Hm = dyn.build_H(L, basis, p, pf.CurrentMix(0, 1)).toarray()
    out.append(Check("[H+, H-]", float(np.abs(Hp @ Hm - Hm @ Hp).max()), 1e-10))
    v = dyn.stationary_solve(Hp)
    w = np.array([qb.stationary_probability(st, p) for st in basis.states])
    w /= w.sum()
    out.append(Check("matrix product vs null vector", float(np.max(np.abs(w - v) / v)), 1e-9))
    vt = dyn.stationary_solve(T1, kind="T")
    out.append(Check("T vs H stationary", float(np.abs(vt - v).max()), 1e-10))
    return out


def _excess_sumrule(p: ModelParams, rng: np.random.Generator) -> list[Check]:
    out = []
    y = solve_fugacity(float(rng.uniform(0.3, 3.0)), p)
    for pattern in [(1,), (2, 1), (2, 1, 2, 1), (1, 2, 2, 3)]:
        val = pf.total_excess(pattern, y, p)
        out.append(Check(f"excess {pattern}", abs(val + sum(pattern)), 1e-9))
    return out


SUITES: dict[str, Callable[[ModelParams, np.random.Generator], list[Check]]] = {
    "qseries-identities": _qseries_identities,
    "G-kernel": _g_kernel,
    "theorem-consistency": _theorem_consistency,
    "dynamics-oracle": _dynamics_oracle,
    "excess-sumrule": _excess_sumrule,
}


def run_suite(name: str, params: ModelParams | None = None, tol_scale: float = 1.0, seed: int = 0) -> SuiteReport:
    """Run one named suite; tolerances are multiplied by ``tol_scale``."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    params = params or ModelParams(0.5, 0.6)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    checks = SUITES[name](params, rng)
    scaled = tuple(Check(c.name, c.error, c.tol * tol_scale) for c in checks)
    return SuiteReport(name, scaled, time.perf_counter() - t0)
