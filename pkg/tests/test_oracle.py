import numpy as np
import pytest
from hypothesis import given, strategies as st

from lapmm import covest
from lapmm.core import SolveOptions, full_objective
from lapmm.errors import NoProgress, SingularKKT
from lapmm.lapgraph import laplacian_from_edges
from lapmm.oracle import (
    covariance_pg_reference,
    dense_kkt_reference,
    portfolio_kkt_reference,
    portfolio_qp,
    proximal_gradient_reference,
    simplex_negpart_prox,
)
from lapmm.portfolio import generate_instance, trading_objective


def quadratic_prox(a, c):
    # f(x) = (c/2)||x - a||^2
    def prox(y, t):
        return (y + t * c * a) / (1 + t * c)

    def f(x):
        return 0.5 * c * float((x - a) @ (x - a))

    return prox, f


class TestProximalGradient:
    def test_uncoupled_quadratic(self):
        a = np.array([1.0, -2.0, 3.0])
        prox, f = quadratic_prox(a, 1.0)
        res = proximal_gradient_reference(laplacian_from_edges(3, []), prox, f, np.zeros(3), 1.0, 100)
        np.testing.assert_allclose(res.x_star, a, atol=1e-8)
        assert res.certificate <= 1e-8

    def test_two_block_chain(self):
        a = np.array([1.0, 3.0])
        L = laplacian_from_edges(2, [(0, 1, 1.0)])
        prox, f = quadratic_prox(a, 2.0)
        res = proximal_gradient_reference(L, prox, f, np.zeros(2), 0.5, 5000, tol=1e-13)
        np.testing.assert_allclose(res.x_star, np.linalg.solve([[3.0, -1.0], [-1.0, 3.0]], 2 * a), atol=1e-6)

    def test_step_too_large_is_reported(self):
        a = np.zeros(2)
        L = laplacian_from_edges(2, [(0, 1, 100.0)])
        prox, f = quadratic_prox(a, 1e-3)
        with pytest.raises(NoProgress):
            proximal_gradient_reference(L, prox, f, np.array([1.0, -1.0]), 1.0, 1000, patience=5)

    def test_covariance_path_instance(self):
        inst = covest.generate_instance(2, 2, 3, 10, seed=0)
        for lam in (0.01, 0.3, 3.0):
            theta, tr = covest.solve_covariance(inst, SolveOptions(eps_abs=1e-10, max_iter=20_000), lam=lam)
            L, part, _, prob = covest.build_problem(inst, lam)
            f_mm = full_objective(L, prob, part, covest.svec(theta).ravel())
            ref = covariance_pg_reference(inst, lam)
            assert tr.converged
            assert abs(f_mm - ref.objective) <= 1e-5 * abs(ref.objective)


class TestDenseKKT:
    def test_singular_system(self):
        with pytest.raises(SingularKKT):
            dense_kkt_reference(np.zeros((2, 2)), np.zeros(2), np.ones((1, 2)), [1.0])

    def test_certificate_and_feasibility(self, rng):
        A = rng.standard_normal((5, 5))
        P = A @ A.T + np.eye(5)
        res = dense_kkt_reference(P, rng.standard_normal(5), rng.standard_normal((2, 5)), [1.0, -1.0])
        assert res.certificate <= 1e-12

    def test_gamma_scaling(self):
        a = generate_instance(6, 3, 2, seed=1, s_scale=0.0, gamma=10.0)
        b = generate_instance(6, 3, 2, seed=1, s_scale=0.0, gamma=20.0)
        ra, rb = portfolio_kkt_reference(a), portfolio_kkt_reference(b)
        assert np.abs(ra.x_star - rb.x_star).max() > 1e-6
        assert ra.certificate <= 1e-12 and rb.certificate <= 1e-12

    def test_qp_matches_trading_objective(self, rng):
        inst = generate_instance(5, 4, 2, seed=2, s_scale=0.0)
        P, q, A, b, const = portfolio_qp(inst)
        X = rng.standard_normal((4, 5))
        X[-1] = inst.cash()
        x = X.ravel()
        assert 0.5 * x @ P @ x + q @ x + const == pytest.approx(trading_objective(inst, X), rel=1e-12)

    def test_rejects_shorting_costs(self):
        with pytest.raises(ValueError):
            portfolio_kkt_reference(generate_instance(4, 3, 1, seed=0))


class TestSimplexProx:
    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 10.0))
    def test_optimality(self, seed, t):
        rng = np.random.default_rng(seed)
        n = 7
        y = rng.standard_normal(n)
        s = rng.uniform(0, 2, n) * (rng.random(n) < 0.7)
        x = simplex_negpart_prox(y, s, t)
        assert x.sum() == pytest.approx(1.0, abs=1e-12)

        def obj(z):
            return float(s @ np.maximum(-z, 0)) + float((z - y) @ (z - y)) / (2 * t)

        f = obj(x)
        for _ in range(200):
            d = rng.standard_normal(n)
            d -= d.mean()
            for h in (1e-2, 1e-4):
                assert obj(x + h * d) >= f - 1e-12
