import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qzrp.errors import DomainError, ParameterRegimeError
from qzrp.qseries import (
    EnsembleParams,
    ModelParams,
    density,
    eta,
    f_qdigamma,
    g_factor,
    h_deriv,
    lambda_y,
    phi,
    q_binomial,
    q_pochhammer,
    q_pochhammer_inf,
    solve_fugacity,
)

unit = st.floats(min_value=0.05, max_value=0.95)

# Frozen from mpmath at 30 digits.
EULER_HALF = 0.288788095086602421278899721929
LAMBDA_HALF = 2.25205246748814868678370161424  # q=0.5, mu=0.4, y=0.5
F_HALF = 1.60669515241529176378330152319  # q=0.5, zeta=0.5
H_HALF = 2.74403388875948836048021489149


class TestModelParams:
    def test_rejects_boundary(self):
        for q, mu in [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0), (-0.1, 0.5)]:
            with pytest.raises(ParameterRegimeError):
                ModelParams(q, mu)

    def test_rejects_other_regime(self):
        with pytest.raises(ParameterRegimeError):
            ModelParams(0.5, 0.5, epsilon=-1)

    def test_ensemble_round_trip(self):
        p = ModelParams(0.4, 0.6)
        e = EnsembleParams.from_rho(2.0, p)
        assert EnsembleParams.from_y(e.y, p).rho == pytest.approx(2.0, rel=1e-12)


class TestPochhammer:
    def test_examples(self):
        assert q_pochhammer(0.3, 0.5, 0) == 1.0
        assert q_pochhammer(0.3, 0.5, 2) == pytest.approx(0.595, abs=1e-15)
        assert q_pochhammer(1.0, 0.5, 3) == 0.0

    @given(z=st.floats(-0.9, 0.9), q=unit, m=st.integers(0, 20))
    def test_recursion(self, z, q, m):
        expected = q_pochhammer(z, q, m) * (1 - z * q**m)
        assert q_pochhammer(z, q, m + 1) == pytest.approx(expected, rel=1e-14)

    def test_infinite(self):
        assert q_pochhammer_inf(0.0, 0.5) == 1.0
        assert q_pochhammer_inf(0.5, 0.5, 1e-14) == pytest.approx(EULER_HALF, rel=1e-14)

    @given(z=st.floats(-0.99, 0.999), q=st.floats(0.01, 0.99))
    def test_infinite_matches_long_product(self, z, q):
        n = np.arange(20000)
        ref = math.exp(np.sum(np.log1p(-z * q**n)))
        assert q_pochhammer_inf(z, q) == pytest.approx(ref, rel=1e-11)

    def test_infinite_domain(self):
        with pytest.raises(DomainError):
            q_pochhammer_inf(1.0, 0.5)

    def test_binomial(self):
        assert q_binomial(5, 0, 0.3) == 1
        assert q_binomial(2, 1, 0.5) == pytest.approx(1.5)
        assert q_binomial(3, 5, 0.5) == 0
        assert q_binomial(3, -1, 0.5) == 0

    @given(m=st.integers(0, 15), k=st.integers(0, 15), q=unit)
    def test_binomial_symmetry(self, m, k, q):
        if k <= m:
            assert q_binomial(m, k, q) == pytest.approx(q_binomial(m, m - k, q), rel=1e-13)

    def test_g_factor(self):
        p = ModelParams(0.5, 0.4)
        assert g_factor(0, p) == 1
        assert g_factor(1, p) == pytest.approx(1.2)
        assert g_factor(2, p) == pytest.approx(1.28)


class TestDigamma:
    def test_zero(self):
        assert f_qdigamma(0.0, 0.5) == 0.0
        assert h_deriv(0.0, 0.5) == 0.0

    def test_small_argument(self):
        z, q = 1e-4, 0.5
        assert f_qdigamma(z, q) == pytest.approx(z / (1 - q), rel=1e-2)

    def test_against_direct_series(self):
        assert f_qdigamma(0.5, 0.5) == pytest.approx(F_HALF, rel=1e-13)
        assert h_deriv(0.5, 0.5) == pytest.approx(H_HALF, rel=1e-13)
        direct = math.fsum(0.5**i / (1 - 0.5**i) for i in range(1, 200))
        assert f_qdigamma(0.5, 0.5) == pytest.approx(direct, abs=1e-12)

    def test_shift_identity(self):
        z, q = 0.6, 0.5
        assert h_deriv(q * z, q) - h_deriv(z, q) + z / (1 - z) ** 2 == pytest.approx(0, abs=1e-12)

    @given(z=st.floats(0.01, 0.98), q=st.floats(0.05, 0.95), i=st.integers(0, 6))
    def test_shift_identity_general(self, z, q, i):
        base = h_deriv(z, q)
        rhs = base - math.fsum(z * q**k / (1 - z * q**k) ** 2 for k in range(i))
        # the right side cancels terms of size h(z), so its rounding error scales with it
        assert h_deriv(q**i * z, q) == pytest.approx(rhs, rel=1e-10, abs=1e-13 * base)

    def test_h_is_log_derivative(self):
        rng = np.random.default_rng(1)
        for z in rng.uniform(0.05, 0.9, 10):
            q = 0.45
            step = 1e-6
            fd = z * (f_qdigamma(z + step, q) - f_qdigamma(z - step, q)) / (2 * step)
            assert h_deriv(z, q) == pytest.approx(fd, rel=1e-6)

    @given(a=st.floats(0.0, 0.98), b=st.floats(0.0, 0.98), q=unit)
    def test_monotone(self, a, b, q):
        if a < b:
            assert f_qdigamma(a, q) < f_qdigamma(b, q)
            assert h_deriv(a, q) < h_deriv(b, q)

    def test_domain(self):
        with pytest.raises(DomainError):
            f_qdigamma(1.0, 0.5)
        with pytest.raises(DomainError):
            h_deriv(1.2, 0.5)


class TestLambdaEta:
    def test_lambda(self):
        p = ModelParams(0.5, 0.4)
        assert lambda_y(0.0, p) == 1.0
        assert lambda_y(0.5, p) == pytest.approx(LAMBDA_HALF, rel=1e-13)
        assert lambda_y(0.5, ModelParams(0.5, 1 - 1e-12)) == pytest.approx(1.0, abs=1e-10)

    def test_eta(self):
        p = ModelParams(0.5, 0.4)
        assert eta(0, 0.5, p) == 1.0
        assert eta(1, 0.5, p) == pytest.approx(0.625)
        assert eta(math.inf, 0.5, p) == pytest.approx(1 / LAMBDA_HALF, rel=1e-13)

    @given(y=unit, q=unit, mu=unit, i=st.integers(0, 5), j=st.integers(0, 5))
    def test_cocycle(self, y, q, mu, i, j):
        p = ModelParams(q, mu)
        assert eta(i + j, y, p) == pytest.approx(eta(i, y, p) * eta(j, q**i * y, p), rel=1e-14)

    @given(y=unit, q=unit, mu=unit)
    def test_strictly_decreasing(self, y, q, mu):
        p = ModelParams(q, mu)
        vals = [eta(m, y, p) for m in range(8)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestFugacity:
    @pytest.mark.parametrize("rho", [0.1, 1.5, 7.0])
    def test_round_trip(self, rho):
        p = ModelParams(0.3, 0.6)
        y = solve_fugacity(rho, p)
        assert 0 < y < 1
        assert density(y, p) == pytest.approx(rho, rel=1e-10)

    def test_small_density(self):
        p = ModelParams(0.3, 0.6)
        rho = 1e-5
        assert solve_fugacity(rho, p) == pytest.approx((1 - p.q) * rho / (1 - p.mu), rel=1e-2)

    def test_q_to_zero(self):
        p = ModelParams(1e-8, 0.6)
        rho = 1.3
        y = solve_fugacity(rho, p)
        assert (1 - p.mu) * y / ((1 - y) * (1 - p.mu * y)) == pytest.approx(rho, rel=1e-7)

    @settings(max_examples=30)
    @given(r1=st.floats(0.01, 20), r2=st.floats(0.01, 20), q=unit, mu=unit)
    def test_monotone(self, r1, r2, q, mu):
        p = ModelParams(q, mu)
        if r1 < r2 * (1 - 1e-9):
            assert solve_fugacity(r1, p) < solve_fugacity(r2, p)

    def test_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            solve_fugacity(0.0, ModelParams(0.3, 0.6))


class TestPhi:
    def test_trivial(self):
        p = ModelParams(0.5, 0.4)
        assert phi(0, 0, 0.3, p) == 1.0
        assert phi(3, 2, 0.3, p) == 0.0
        assert phi(-1, 2, 0.3, p) == 0.0

    @given(y=unit, q=unit, mu=unit, m=st.integers(0, 10))
    def test_sum_rule(self, y, q, mu, m):
        p = ModelParams(q, mu)
        assert math.fsum(phi(l, m, y, p) for l in range(m + 1)) == pytest.approx(1.0, abs=1e-13)

    def test_y_to_one(self):
        p = ModelParams(0.5, 0.4)
        for m in range(1, 5):
            assert phi(0, m, 1.0 - 1e-15, p) == pytest.approx(0.0, abs=1e-12)

    @given(y=unit, q=unit, mu=unit, m=st.integers(1, 8))
    def test_induction_identity(self, y, q, mu, m):
        p = ModelParams(q, mu)
        lhs = math.fsum(
            phi(m - j, m, y, p) * math.fsum(1 / (1 - y * q**i) for i in range(j)) for j in range(1, m + 1)
        )
        rhs = math.fsum(1 / (1 - mu * y * q**k) for k in range(m))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    @given(q=unit, mu=unit, d=st.integers(0, 8))
    def test_boundary_identity(self, q, mu, d):
        lhs = (
            q_pochhammer(q, q, d)
            / q_pochhammer(mu, q, d)
            * math.fsum(
                q_pochhammer(mu, q, d - k) / ((1 - q**k) * q_pochhammer(q, q, d - k)) for k in range(1, d + 1)
            )
        )
        rhs = math.fsum(1 / (1 - mu * q**k) for k in range(d))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-15)
