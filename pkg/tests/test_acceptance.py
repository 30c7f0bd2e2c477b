"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one PASS/FAIL line (printed and repeated in the terminal summary)
before asserting, so a failing criterion still reports its measured value.
"""
import math
import time

import numpy as np
import pk1_forms
import pytest
from conftest import record
from example_vectors import reference_vector

from qzrp import defect_kernel as dk
from qzrp.dynamics import (
    SectorBasis,
    build_H,
    exact_site_law,
    gillespie,
    phi_q,
    stationary_solve,
    sub_vectors,
    transfer_matrix,
)
from qzrp.profiles import (
    CurrentMix,
    J_I,
    J_II,
    P_I,
    P_II,
    asymptotic_limits,
    baseline_currents,
    current_oracle,
    density_oracle,
    normalization_oracle,
    numeric_limits,
    profile,
    rho_II,
    site_values,
    total_excess,
)
from qzrp.qboson import (
    adaptive_trace,
    build_A,
    build_b,
    build_c,
    build_k,
    canonical_profile,
    canonical_profile_enumerate,
    identity,
    matrix_element,
    stationary_probability,
)
from qzrp.qseries import EnsembleParams, ModelParams, density, eta, phi, q_pochhammer
from qzrp.sectors import compositions

GOLDEN = ModelParams(0.2, 0.7)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def random_pattern(rng, max_len=4, max_d=3):
    d = [int(x) for x in rng.integers(0, max_d + 1, int(rng.integers(1, max_len + 1)))]
    d[0] = max(d[0], 1)
    d[-1] = max(d[-1], 1)
    return tuple(d)


def test_criterion_01_golden_grand_canonical():
    start = time.perf_counter()
    ens = EnsembleParams.from_rho(1.5, GOLDEN)
    value = profile([1], (1,), ens, GOLDEN).rho[0]
    elapsed = time.perf_counter() - start
    ok = abs(value - 2.4801) <= 5e-4 and elapsed < 1.0
    record(1, ok, f"rho(1) = {value:.6f} (target 2.4801 +- 5e-4), {elapsed:.3f} s")
    assert ok


@pytest.mark.parametrize("L", [8, 10])
def test_criterion_02_golden_canonical(L):
    target = {8: 2.71394, 10: 2.66876}[L]
    m2 = round(1.5 * L)
    expected_states = {8: 50388, 10: 1307504}[L]
    count = math.comb(m2 + L - 1, L - 1)
    enumerated = sum(1 for _ in compositions(m2, L))
    start = time.perf_counter()
    fast = canonical_profile(L, (1,), m2, GOLDEN).rho[0]
    slow = canonical_profile_enumerate(L, (1,), m2, GOLDEN, max_states=2_000_000)[0]
    elapsed = time.perf_counter() - start
    ok = count == enumerated == expected_states and abs(fast - target) <= 1e-4 and abs(slow - fast) <= 1e-10
    record(
        2,
        ok,
        f"L={L} m2={m2}: {enumerated} states, extraction {fast:.6f}, enumeration {slow:.6f} "
        f"(target {target} +- 1e-4), {elapsed:.1f} s",
    )
    assert count == enumerated == expected_states
    assert abs(fast - target) <= 1e-4
    assert abs(slow - fast) <= 1e-10


def test_criterion_03_example_vectors():
    rng = np.random.default_rng(2024)
    points = list(zip(rng.uniform(0.05, 0.95, 5), rng.uniform(-0.95, -0.05, 5)))
    worst_solver = worst_weights = 0.0
    for sector in [(1, 2), (2, 1)]:
        basis = SectorBasis.build(3, sector)
        for q, kappa in points:
            p = ModelParams(float(q), float(-kappa))
            ref = reference_vector(sector, basis, q, kappa)
            v = stationary_solve(build_H(3, basis, p))
            w = np.array([stationary_probability(s, p) for s in basis.states])
            w /= w.sum()
            worst_solver = max(worst_solver, float(np.max(np.abs(v - ref) / ref)))
            worst_weights = max(worst_weights, float(np.max(np.abs(w - ref) / ref)))
    ok = worst_solver < 1e-9 and worst_weights < 1e-9
    record(3, ok, f"max rel error solver {worst_solver:.2e}, matrix product {worst_weights:.2e} (< 1e-9)")
    assert ok


def test_criterion_04_traces():
    worst = 0.0
    for q in (0.3, 0.6, 0.9):
        def word1(n, q=q):
            b, c, k = build_b(n), build_c(n, q), build_k(n, q)
            return b @ b @ k @ c @ c

        def word2(n, q=q):
            b, c, k = build_b(n), build_c(n, q), build_k(n, q)
            return b @ c @ b @ k @ c

        t1, _ = adaptive_trace(word1, 16, tol=1e-13)
        t2, _ = adaptive_trace(word2, 16, tol=1e-13)
        ref2 = (1 + q**2) ** 2 * q_pochhammer(q, q, 1) * q_pochhammer(q, q, 2) / q_pochhammer(q, q, 4)
        worst = max(worst, rel(t1, 1 / (1 - q**3)), rel(t2, ref2))
    ok = worst < 1e-10
    record(4, ok, f"max rel error {worst:.2e} (< 1e-10)")
    assert ok


def test_criterion_05_theorem_consistency():
    rng = np.random.default_rng(5)
    worst = dict.fromkeys(["norm", "density", "current", "J_I forms", "P_II ext", "pk1"], 0.0)
    for _ in range(20):
        p = ModelParams(float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.1, 0.9)))
        y = EnsembleParams.from_rho(float(rng.uniform(0.2, 4.0)), p).y
        pattern = random_pattern(rng)
        s = len(pattern)
        for r in range(-1, s + 4):
            worst["norm"] = max(worst["norm"], abs(normalization_oracle(r, pattern, y, p) - 1))
            dens, jp, jm = site_values(r, pattern, y, p)
            worst["density"] = max(worst["density"], rel(density_oracle(r, pattern, y, p), dens))
            ojp, ojm = current_oracle(r, pattern, y, p)
            worst["current"] = max(worst["current"], rel(ojp, jp), rel(ojm, jm))
        for r in range(1, s + 1):
            a, b = J_I(r, pattern, y, p, "difference"), J_I(r, pattern, y, p, "h")
            worst["J_I forms"] = max(worst["J_I forms"], rel(a[0], b[0]), rel(a[1], b[1]))
        for r in range(s + 1, s + 4):
            ext = pattern + (0,) * (r - s)
            for n in range(4):
                a = P_II(r, n, pattern, y, p, method="chain")
                b = P_I(r, n, ext, y, p)
                worst["P_II ext"] = max(worst["P_II ext"], rel(a, b))
        for d in (1, 2):
            rho = density(y, p)
            jp0, jm0 = baseline_currents(y, p)
            for r in range(2, 9):
                for n in range(5):
                    worst["pk1"] = max(worst["pk1"], rel(P_II(r, n, (d,), y, p), pk1_forms.P_II(d, r, n, y, p)))
                worst["pk1"] = max(worst["pk1"], abs(rho_II(r, (d,), y, p) - rho - pk1_forms.rho_excess(d, r, y, p)))
                jp, jm = J_II(r, (d,), y, p)
                ep, em = pk1_forms.current_excess(d, r, y, p)
                worst["pk1"] = max(worst["pk1"], abs(jp - jp0 - ep), abs(jm - jm0 - em))
    tol = {"norm": 1e-12, "density": 1e-10, "current": 1e-9, "J_I forms": 1e-12, "P_II ext": 1e-11, "pk1": 1e-11}
    ok = all(worst[k] < tol[k] for k in tol)
    record(5, ok, ", ".join(f"{k} {worst[k]:.1e}/{tol[k]:.0e}" for k in tol))
    assert ok


def test_criterion_06_defect_kernel():
    rng = np.random.default_rng(6)
    worst = dict.fromkeys(["sum", "support", "zero run", "F", "bracket", "induction", "kzn"], 0.0)
    for _ in range(10):
        q, mu, y = (float(x) for x in rng.uniform(0.1, 0.9, 3))
        p = ModelParams(q, mu)
        pattern = random_pattern(rng, max_len=5)
        for m in range(7):
            row = dk.G_row(m, pattern, y, p)
            worst["sum"] = max(worst["sum"], abs(row.sum() - 1))
            worst["support"] = max(worst["support"], float(np.abs(row[: pattern[-1]]).sum()))
            for i in range(m + 1):
                for r in range(1, 9):
                    a = dk.G_zero_run(m, i, r, y, p, method="closed")
                    b = dk.G_zero_run(m, i, r, y, p, method="recursive")
                    worst["zero run"] = max(worst["zero run"], abs(a - b))
        for m in range(6):
            for r in range(1, 7):
                a, b = dk.F_definition(m, r, y, p), dk.F_closed(m, r, y, p)
                worst["F"] = max(worst["F"], abs(a - b) / max(1.0, abs(a)))
        for m in range(1, 9):
            lhs = math.fsum(
                phi(m - j, m, y, p) * math.fsum(1 / (1 - y * q**i) for i in range(j)) for j in range(1, m + 1)
            )
            rhs = math.fsum(1 / (1 - mu * y * q**k) for k in range(m))
            worst["induction"] = max(worst["induction"], rel(lhs, rhs))
        for d in range(1, 9):
            lhs = (
                q_pochhammer(q, q, d)
                / q_pochhammer(mu, q, d)
                * math.fsum(
                    q_pochhammer(mu, q, d - k) / ((1 - q**k) * q_pochhammer(q, q, d - k)) for k in range(1, d + 1)
                )
            )
            rhs = math.fsum(1 / (1 - mu * q**k) for k in range(d))
            worst["kzn"] = max(worst["kzn"], rel(lhs, rhs))
    p, y, Nc = ModelParams(0.5, 0.6), 0.45, 24
    for pattern in [(1,), (0, 2), (2, 1), (1, 0, 3), (2, 2, 1)]:
        prod = identity(Nc)
        for d in pattern:
            prod = prod @ build_A(d, y, Nc, p)
        for m in range(5):
            for l in range(5 + sum(pattern)):
                ref = matrix_element(prod, m, l, p.q)
                worst["bracket"] = max(worst["bracket"], abs(dk.bracket_A(m, l, pattern, y, p) - ref) / max(abs(ref), 1.0))
    tol = {"sum": 1e-13, "support": 0.0, "zero run": 1e-11, "F": 1e-11, "bracket": 1e-10, "induction": 1e-12, "kzn": 1e-12}
    ok = all(worst[k] <= tol[k] for k in tol)
    record(6, ok, ", ".join(f"{k} {worst[k]:.1e}" for k in tol))
    assert ok


def test_criterion_07_total_excess():
    rng = np.random.default_rng(7)
    cases = [((1,), 0.5, 0.6, 1.5), ((2, 1), 0.5, 0.6, 1.5), ((2, 1, 2, 1), 0.5, 0.6, 1.5), ((1, 2, 2, 3), 0.5, 0.6, 1.5)]
    for _ in range(20):
        cases.append(
            (random_pattern(rng, max_d=4), float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.1, 0.9)), float(rng.uniform(0.2, 4.0)))
        )
    worst = 0.0
    for pattern, q, mu, rho in cases:
        p = ModelParams(q, mu)
        y = EnsembleParams.from_rho(rho, p).y
        worst = max(worst, abs(total_excess(pattern, y, p) + sum(pattern)))
    ok = worst < 1e-9
    record(7, ok, f"{len(cases)} patterns, max |excess + sum d| = {worst:.2e} (< 1e-9)")
    assert ok


def test_criterion_08_dynamics():
    rng = np.random.default_rng(8)
    p = ModelParams(0.5, 0.6)
    sum_rule = 0.0
    for n in (1, 2, 3):
        for _ in range(20):
            beta = tuple(int(x) for x in rng.integers(0, 4, n))
            q, mu = (float(x) for x in rng.uniform(0.05, 0.95, 2))
            lam = float(rng.uniform(mu, 1.0))
            total = math.fsum(phi_q(g, beta, lam, mu, q) for g in sub_vectors(beta))
            sum_rule = max(sum_rule, abs(total - 1))
    basis = SectorBasis.build(3, (2, 1))
    T1 = transfer_matrix(3, basis, 0.7, p.mu, p.q)
    T2 = transfer_matrix(3, basis, 0.93, p.mu, p.q)
    columns = float(np.abs(T1.sum(axis=0) - 1).max())
    comm_T = float(np.abs(T1 @ T2 - T2 @ T1).max())
    Hp = build_H(3, basis, p, CurrentMix(1, 0)).toarray()
    Hm = build_H(3, basis, p, CurrentMix(0, 1)).toarray()
    comm_H = float(np.abs(Hp @ Hm - Hm @ Hp).max())
    start = time.perf_counter()
    sim = gillespie(4, (1, 2), p, events=1_000_000, seed=8, batches=50)
    elapsed = time.perf_counter() - start
    exact = exact_site_law(4, (1, 2), p)
    mask = sim.stderr > 0
    z = float((np.abs(sim.law - exact)[mask] / sim.stderr[mask]).max())
    exact_where_degenerate = bool(np.all(sim.law[~mask] == exact[~mask]))
    ok = (
        sum_rule < 1e-12
        and columns < 1e-12
        and comm_T < 1e-10
        and comm_H < 1e-10
        and z < 3
        and exact_where_degenerate
        and elapsed < 60
    )
    record(
        8,
        ok,
        f"sum rule {sum_rule:.1e}, columns {columns:.1e}, [T,T'] {comm_T:.1e}, [H+,H-] {comm_H:.1e}, "
        f"Gillespie max z {z:.2f} in {elapsed:.1f} s",
    )
    assert ok


def _decay_slope(pattern, p, y, start, stop):
    rho = density(y, p)
    r = np.arange(start, stop + 1)
    dev = np.array([abs(rho_II(int(k), pattern, y, p) - rho) for k in r])
    return float(np.polyfit(r, np.log(dev), 1)[0])


def test_criterion_09_decay_rate():
    p = ModelParams(0.6, 0.7)
    y = EnsembleParams.from_rho(2.0, p).y
    target = math.log(eta(1, y, p))
    single = rel(_decay_slope((1,), p, y, 3, 13), target)
    # Patterns with several modes: eta_2/eta_1 is about 0.82 here, so the rate is only
    # reached once the second mode has died out; they are checked 30 sites out.
    far = {pat: rel(_decay_slope(pat, p, y, len(pat) + 30, len(pat) + 40), target) for pat in [(2,), (2, 1), (2, 1, 2, 1)]}
    near = {pat: rel(_decay_slope(pat, p, y, len(pat) + 2, len(pat) + 12), target) for pat in far}
    ok = single < 1e-2 and all(v < 1e-2 for v in far.values())
    info = ", ".join(f"{pat} near {near[pat]:.1%} far {far[pat]:.2%}" for pat in far)
    record(9, ok, f"d=(1) window [3,13] rel {single:.1e}; {info}")
    assert ok


def test_criterion_10_asymptotic_limits():
    p = ModelParams(0.5, 0.6)
    worst = 0.0
    for d in (1, 2):
        for s in (1, 3):
            pattern = (d,) * s
            window = range(-1, s + 5)
            for which in ("low", "high"):
                num = numeric_limits(pattern, p, which, window)
                ref = asymptotic_limits(pattern, p, which, window)
                for field in ("rho", "j_plus", "j_minus"):
                    a, b = getattr(num, field), getattr(ref, field)
                    worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0))))
    ok = worst < 1e-2
    record(10, ok, f"max scaled deviation {worst:.2e} (< 1%)")
    assert ok
