import numpy as np
import pytest
from hypothesis import given, strategies as st

from lapmm import core
from lapmm.core import SolveOptions, full_objective, residual, solve, stopping_threshold
from lapmm.errors import BlockUpdateFailure, DimensionMismatch, InfeasibleStart
from lapmm.lapgraph import BlockPartition, laplacian_from_edges
from lapmm.majorize import DiagonalMajorizer, diagonal_majorizer, spectral_majorizer

from helpers import random_laplacian


class BoxQuadratic:
    """``f_i(x) = (c_i/2)||x - a_i||^2`` plus an optional box ``lo <= x <= hi``."""

    def __init__(self, partition, a, c, lo=-np.inf, hi=np.inf):
        self.part = partition
        self.a = np.asarray(a, dtype=float)
        self.c = np.broadcast_to(np.asarray(c, dtype=float), (partition.p,))
        self.lo, self.hi = lo, hi
        self.calls = []

    def update(self, i, x_i, h_i, alpha_i):
        self.calls.append(i)
        a = self.a[self.part.slice(i)]
        return np.clip((self.c[i] * a + alpha_i * x_i - h_i) / (self.c[i] + alpha_i), self.lo, self.hi)

    def objective(self, i, x_i):
        if np.any(x_i < self.lo - 1e-12) or np.any(x_i > self.hi + 1e-12):
            return np.inf
        d = x_i - self.a[self.part.slice(i)]
        return 0.5 * self.c[i] * float(d @ d)

    def gradient(self, i, x_i):
        return self.c[i] * (x_i - self.a[self.part.slice(i)])

    def feasible_start(self, i):
        return np.clip(np.zeros(self.part.sizes[i]), self.lo, self.hi)


def random_instance(seed, n=12, box=False):
    rng = np.random.default_rng(seed)
    L = random_laplacian(rng, n, 0.4)
    sizes = []
    left = n
    while left:
        s = int(min(left, rng.integers(1, 4)))
        sizes.append(s)
        left -= s
    part = BlockPartition(tuple(sizes))
    c = rng.uniform(0.1, 2.0, part.p)
    lo, hi = (-0.5, 0.5) if box else (-np.inf, np.inf)
    return L, part, BoxQuadratic(part, rng.standard_normal(n), c, lo, hi)


class TestSolveExamples:
    def test_uncoupled_single_block(self):
        L = laplacian_from_edges(3, [])
        part = BlockPartition((3,))
        a = np.array([1.0, -2.0, 0.5])
        x, tr = solve(L, part, diagonal_majorizer(L), BoxQuadratic(part, a, 1.0), opts=SolveOptions(eps_abs=1e-9))
        assert tr.converged and tr.iterations == 2
        np.testing.assert_allclose(x, a, rtol=0, atol=1e-9)
        assert tr.residual_norm[-1] <= 1e-11

    def test_two_scalar_blocks(self):
        w = 1.0
        L = laplacian_from_edges(2, [(0, 1, w)])
        part = BlockPartition((1, 1))
        a = np.array([1.0, 3.0])
        # f_i = (x_i - a_i)^2 is c = 2 in the (c/2) parametrization
        x, tr = solve(L, part, diagonal_majorizer(L), BoxQuadratic(part, a, 2.0), opts=SolveOptions(eps_abs=1e-10))
        ref = np.linalg.solve([[2 + w, -w], [-w, 2 + w]], 2 * a)
        assert tr.converged
        np.testing.assert_allclose(x, ref, atol=1e-6)

    def test_dense_oracle(self):
        L, part, prob = random_instance(3)
        x, tr = solve(L, part, diagonal_majorizer(L), prob, opts=SolveOptions(eps_abs=1e-10, max_iter=10_000))
        C = np.repeat(prob.c, part.sizes)
        ref = np.linalg.solve(np.diag(C) + L.to_dense(), C * prob.a)
        assert tr.converged
        np.testing.assert_allclose(x, ref, atol=1e-8)

    def test_warm_start_at_solution(self):
        L, part, prob = random_instance(4)
        maj = diagonal_majorizer(L)
        x, _ = solve(L, part, maj, prob, opts=SolveOptions(eps_abs=1e-10, max_iter=10_000))
        _, tr = solve(L, part, maj, prob, x0=x, opts=SolveOptions(eps_abs=1e-8))
        assert tr.iterations == 2

    def test_max_iter_status(self):
        L, part, prob = random_instance(5)
        _, tr = solve(L, part, diagonal_majorizer(L), prob, opts=SolveOptions(eps_abs=1e-14, max_iter=3))
        assert tr.status == core.MAX_ITER and tr.iterations == 3 and not tr.converged


class TestInvariants:
    @given(st.integers(0, 2**32 - 1), st.booleans())
    def test_monotone_and_converges(self, seed, box):
        L, part, prob = random_instance(seed, box=box)
        x, tr = solve(L, part, diagonal_majorizer(L), prob, opts=SolveOptions(eps_abs=1e-8, max_iter=20_000))
        assert tr.converged
        assert tr.is_monotone(slack=1e-9)
        assert tr.final_residual <= 1e-8

    @given(st.integers(0, 2**32 - 1))
    def test_residual_certifies_stationarity(self, seed):
        L, part, prob = random_instance(seed)
        x, tr = solve(L, part, spectral_majorizer(L), prob, opts=SolveOptions(eps_abs=1e-7, max_iter=20_000))
        g = np.concatenate([prob.gradient(i, x[s]) for i, s in enumerate(part.slices())])
        stat = np.linalg.norm(g + L.to_dense() @ x)
        assert stat <= tr.final_residual + 1e-10

    @given(st.integers(0, 2**32 - 1))
    def test_successive_differences_shrink(self, seed):
        L, part, prob = random_instance(seed, box=True)
        xs = []
        solve(L, part, diagonal_majorizer(L), prob, opts=SolveOptions(eps_abs=1e-8, max_iter=20_000),
              callback=lambda k, x: xs.append(x.copy()))
        first = np.linalg.norm(xs[1] - xs[0])
        last = np.linalg.norm(xs[-1] - xs[-2])
        assert last < first or first == 0.0

    @pytest.mark.parametrize("workers", [2, 4, 8])
    def test_worker_count_is_bitwise_irrelevant(self, workers):
        L, part, prob = random_instance(7, n=40, box=True)
        maj = diagonal_majorizer(L)
        opts1 = SolveOptions(eps_abs=1e-9, max_iter=5000)
        optsk = SolveOptions(eps_abs=1e-9, max_iter=5000, workers=workers)
        x1, t1 = solve(L, part, maj, prob, opts=opts1)
        xk, tk = solve(L, part, maj, prob, opts=optsk)
        assert x1.tobytes() == xk.tobytes()
        assert t1.to_csv(timing=False) == tk.to_csv(timing=False)


class TestResidual:
    def test_two_by_two(self):
        L = laplacian_from_edges(2, [(0, 1, 1.0)])
        maj = DiagonalMajorizer(np.array([3.0, 3.0]), "manual")
        np.testing.assert_array_equal(residual(L, maj, np.array([1.0, 0.0]), np.zeros(2)), [2.0, 1.0])

    def test_zero_step(self, rng):
        L = random_laplacian(rng, 6, 0.5)
        x = rng.standard_normal(6)
        np.testing.assert_array_equal(residual(L, diagonal_majorizer(L), x, x), 0.0)

    def test_dense_oracle(self, rng):
        L = random_laplacian(rng, 30, 0.3)
        maj = diagonal_majorizer(L)
        a, b = rng.standard_normal((2, 30))
        ref = (np.diag(maj.alpha) - L.to_dense()) @ (a - b)
        np.testing.assert_allclose(residual(L, maj, a, b), ref, rtol=0, atol=1e-12 * (1 + np.abs(ref).max()))

    def test_dimension_mismatch(self):
        L = laplacian_from_edges(2, [(0, 1, 1.0)])
        with pytest.raises(DimensionMismatch):
            residual(L, diagonal_majorizer(L), np.zeros(3), np.zeros(3))


class TestThreshold:
    def test_absolute_only(self, rng):
        L = random_laplacian(rng, 5, 0.5)
        assert stopping_threshold(diagonal_majorizer(L), L, rng.standard_normal(5), SolveOptions(eps_abs=1e-4)) == 1e-4

    def test_frobenius_example(self):
        L = laplacian_from_edges(2, [(0, 1, 1.0)])
        maj = DiagonalMajorizer(np.array([3.0, 3.0]), "manual")
        opts = SolveOptions(eps_abs=1e-300, eps_rel=1.0)
        assert stopping_threshold(maj, L, np.zeros(2), opts) == pytest.approx(np.sqrt(10), rel=1e-14)

    def test_dense_oracle(self, rng):
        L = random_laplacian(rng, 25, 0.3)
        maj = diagonal_majorizer(L)
        x = rng.standard_normal(25)
        opts = SolveOptions(eps_abs=1e-5, eps_rel=1e-3)
        ref = 1e-5 + 1e-3 * (np.linalg.norm(np.diag(maj.alpha) - L.to_dense(), "fro") + np.linalg.norm(x))
        assert stopping_threshold(maj, L, x, opts) == pytest.approx(ref, rel=1e-12)


class TestObjective:
    def test_infeasible_block(self):
        L = laplacian_from_edges(2, [(0, 1, 1.0)])
        part = BlockPartition((1, 1))
        prob = BoxQuadratic(part, [0.0, 0.0], 1.0, lo=0.0, hi=1.0)
        assert full_objective(L, prob, part, np.array([0.5, 2.0])) == np.inf

    def test_no_coupling(self):
        L = laplacian_from_edges(2, [])
        part = BlockPartition((1, 1))
        prob = BoxQuadratic(part, [1.0, 2.0], [2.0, 4.0])
        assert full_objective(L, prob, part, np.zeros(2)) == pytest.approx(1.0 + 8.0)

    def test_two_node_chain(self):
        L = laplacian_from_edges(2, [(0, 1, 3.0)])
        part = BlockPartition((1, 1))
        prob = BoxQuadratic(part, [1.0, -1.0], 2.0)
        x = np.array([0.5, 0.25])
        hand = (0.5 - 1.0) ** 2 + (0.25 + 1.0) ** 2 + 0.5 * 3.0 * 0.25**2
        assert full_objective(L, prob, part, x) == pytest.approx(hand, rel=1e-15)


class TestErrors:
    def test_infeasible_start(self):
        L = laplacian_from_edges(2, [(0, 1, 1.0)])
        part = BlockPartition((1, 1))
        prob = BoxQuadratic(part, [0.0, 0.0], 1.0, lo=0.0, hi=1.0)
        with pytest.raises(InfeasibleStart):
            solve(L, part, diagonal_majorizer(L), prob, x0=np.array([-1.0, 0.0]))

    def test_block_failure_carries_index(self):
        L, part, prob = random_instance(1)

        class Broken(BoxQuadratic):
            def update(self, i, x_i, h_i, alpha_i):
                if i == 2:
                    raise ZeroDivisionError("boom")
                return super().update(i, x_i, h_i, alpha_i)

        bad = Broken(part, prob.a, prob.c)
        with pytest.raises(BlockUpdateFailure) as info:
            solve(L, part, diagonal_majorizer(L), bad)
        assert info.value.block == 2

    def test_nan_guard(self):
        L, part, prob = random_instance(2)

        class NaNs(BoxQuadratic):
            def update(self, i, x_i, h_i, alpha_i):
                return np.full_like(x_i, np.nan)

        with pytest.raises(BlockUpdateFailure, match="non-finite"):
            solve(L, part, diagonal_majorizer(L), NaNs(part, prob.a, prob.c))

    def test_dimension_mismatch(self):
        L, part, prob = random_instance(2)
        with pytest.raises(DimensionMismatch):
            solve(L, BlockPartition((L.n + 1,)), diagonal_majorizer(L), prob)

    @pytest.mark.parametrize(
        "kwargs", [dict(eps_abs=0.0), dict(eps_rel=-1.0), dict(max_iter=0), dict(workers=0)]
    )
    def test_option_validation(self, kwargs):
        with pytest.raises(ValueError):
            SolveOptions(**kwargs)


class TestTrace:
    def test_csv_layout(self):
        L, part, prob = random_instance(0)
        _, tr = solve(L, part, diagonal_majorizer(L), prob, opts=SolveOptions(eps_abs=1e-6))
        lines = tr.to_csv().splitlines()
        assert lines[0] == "iter,residual_norm,objective,elapsed_ms"
        assert len(lines) == tr.iterations + 1
        k, r, f, ms = lines[1].split(",")
        assert k == "1" and float(r) == tr.residual_norm[0] and float(f) == tr.objective[0] and float(ms) >= 0

    def test_objective_column_empty_when_not_recorded(self):
        L, part, prob = random_instance(0)
        _, tr = solve(L, part, diagonal_majorizer(L), prob, opts=SolveOptions(record_objective=False))
        assert all(line.split(",")[2] == "" for line in tr.to_csv().splitlines()[1:])
        assert tr.initial_objective is None
