"""Multi-period portfolio optimization with quadratic transaction costs.

Periods ``t = 1..T`` are the blocks; the trading cost between consecutive
periods is a chain Laplacian over ``x = (x_1, ..., x_T)``.  The last asset is
cash: it carries no risk, shorting cost or transaction cost.  The final
portfolio is pinned to all cash.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InconsistentDimensions, NegativeCostEntry
from .lapgraph import BlockPartition, _from_arrays
from .prox import BlockQP, FactorQuadratic, inner_admm


@dataclass
class PortfolioInstance:
    """Problem data; arrays are indexed by period first (row ``t-1`` is period ``t``).

    Attributes
    ----------
    mu : (T, n) expected returns
    idio : (T, n) idiosyncratic variances (diagonal of the risk model)
    loadings : (T, n, r) factor loadings, ``Sigma_t = diag(idio_t) + F_t F_t'``
    s : (T, n) shorting costs
    D : (T, n) transaction-cost diagonals; ``D[0]`` couples ``x_1`` to ``x0``
    gamma : risk aversion
    x0 : (n,) initial portfolio
    """

    mu: np.ndarray
    idio: np.ndarray
    loadings: np.ndarray
    s: np.ndarray
    D: np.ndarray
    gamma: float
    x0: np.ndarray

    def __post_init__(self):
        T, n = self.mu.shape
        for name in ("idio", "s", "D"):
            if getattr(self, name).shape != (T, n):
                raise InconsistentDimensions(f"{name} has shape {getattr(self, name).shape}, expected {(T, n)}")
        if self.loadings.ndim != 3 or self.loadings.shape[:2] != (T, n):
            raise InconsistentDimensions(f"loadings must have shape (T, n, r), got {self.loadings.shape}")
        if self.x0.shape != (n,):
            raise InconsistentDimensions(f"x0 has shape {self.x0.shape}, expected ({n},)")
        if T < 2 or n < 2:
            raise InconsistentDimensions("need at least two periods and two assets")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if np.any(self.s < 0):
            raise NegativeCostEntry("shorting costs must be nonnegative")
        if np.any(self.D < 0):
            raise NegativeCostEntry("transaction costs must be nonnegative")
        if np.any(self.D[:, -1] != 0) or np.any(self.idio[:, -1] != 0) or np.any(self.loadings[:, -1, :] != 0):
            raise InconsistentDimensions("cash (last asset) must have zero risk and transaction cost")

    @property
    def T(self):
        return self.mu.shape[0]

    @property
    def n(self):
        return self.mu.shape[1]

    def risk(self, t):
        """``gamma * Sigma_t`` as a factor quadratic (``t`` is 0-based)."""
        return FactorQuadratic(self.gamma * self.idio[t], self.loadings[t], self.gamma)

    def cash(self):
        e = np.zeros(self.n)
        e[-1] = 1.0
        return e


def generate_instance(n, T, r_factors, seed, gamma=1000.0, s_scale=1.0):
    """Random instance with period-independent parameters.

    Returns are ``N(0, 1e-3^2)`` (cash ``1e-5``), loadings ``N(0, 1e-2^2)``,
    idiosyncratic variances ``U[1e-5, 1e-4]``, shorting costs
    ``s_scale * U[1e-4, 1e-3]`` and transaction costs ``U[1e-3, 1e-2]``.
    """
    if n < 2 or T < 2 or r_factors < 0:
        raise ValueError("need n >= 2, T >= 2, r_factors >= 0")
    rng = np.random.default_rng(seed)
    mu = 1e-3 * rng.standard_normal(n)
    mu[-1] = 1e-5
    F = 1e-2 * rng.standard_normal((n, r_factors))
    F[-1] = 0.0
    idio = rng.uniform(1e-5, 1e-4, n)
    idio[-1] = 0.0
    s = s_scale * rng.uniform(1e-4, 1e-3, n)
    s[-1] = 0.0
    D = rng.uniform(1e-3, 1e-2, n)
    D[-1] = 0.0
    x0 = np.zeros(n)
    x0[-1] = 1.0

    def tile(v):
        return np.tile(v, (T,) + (1,) * v.ndim)

    return PortfolioInstance(tile(mu), tile(idio), tile(F), tile(s), tile(D), float(gamma), x0)


def chain_laplacian(D):
    """Chain Laplacian on ``T`` blocks of ``n`` from ``D = [D_2, ..., D_T]``.

    ``D`` is a ``(T-1, n)`` array of diagonals; block ``t`` couples to block
    ``t+1`` through ``-D_{t+1}``.  Zero entries (cash) produce no edge.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if np.any(D < 0):
        raise NegativeCostEntry("transaction-cost diagonals must be nonnegative")
    links, n = D.shape
    t, j = np.nonzero(D > 0)
    rows = t * n + j
    return _from_arrays((links + 1) * n, rows, rows + n, D[t, j])


class PortfolioProblem:
    """Per-period objective and prox updates for the MM solver."""

    def __init__(self, inst, admm_tol=1e-11, admm_max_iter=50_000, feas_tol=1e-9):
        self.inst = inst
        self.admm_tol = admm_tol
        self.admm_max_iter = admm_max_iter
        self.feas_tol = feas_tol
        self._risk = [inst.risk(t) for t in range(inst.T)]
        D1 = inst.D[0]
        self._D1 = D1
        self._lin1 = D1 * inst.x0
        self._const1 = 0.5 * float(np.dot(inst.x0, D1 * inst.x0))
        self._ones = np.ones(inst.n)

    def _smooth(self, t):
        """``(P, q)`` with the period-t smooth part equal to ``x'Px + q'x``."""
        P = self._risk[t]
        q = -self.inst.mu[t]
        if t == 0:
            P = FactorQuadratic(P.diag + 0.5 * self._D1, P.factors, P.scale)
            q = q - self._lin1
        return P, q

    def objective(self, t, x):
        inst = self.inst
        if t == inst.T - 1:
            return 0.0 if np.allclose(x, inst.cash(), rtol=0, atol=1e-12) else np.inf
        if abs(x.sum() - 1.0) > self.feas_tol:
            return np.inf
        P, q = self._smooth(t)
        val = P.quad(x) + float(np.dot(q, x)) + float(np.dot(inst.s[t], np.maximum(-x, 0.0)))
        if t == 0:
            val += self._const1
        return val

    def block_qp(self, t, x_t, h_t, alpha):
        P, q = self._smooth(t)
        return BlockQP(P, q + h_t, self.inst.s[t], x_t, alpha, self._ones, 1.0)

    def update(self, t, x_t, h_t, alpha):
        if t == self.inst.T - 1:
            return self.inst.cash()
        return inner_admm(self.block_qp(t, x_t, h_t, alpha), self.admm_tol, self.admm_max_iter)

    def feasible_start(self, t):
        return self.inst.cash()


def build_problem(inst, **problem_kwargs):
    """Return ``(L, partition, problem)`` for the LRMP form of ``inst``."""
    L = chain_laplacian(inst.D[1:])
    partition = BlockPartition.uniform(inst.T, inst.n)
    return L, partition, PortfolioProblem(inst, **problem_kwargs)


def trading_objective(inst, X):
    """Direct evaluation of the multi-period objective for weights ``X`` of shape (T, n).

    Sums per-period return, risk and shorting terms plus every transaction
    cost including the one from ``x0``; no Laplacian is involved.
    """
    X = np.asarray(X, dtype=float)
    if not np.allclose(X[-1], inst.cash(), rtol=0, atol=1e-12):
        return np.inf
    total = 0.0
    prev = inst.x0
    for t in range(inst.T):
        x = X[t]
        dx = x - prev
        total += 0.5 * float(np.dot(dx, inst.D[t] * dx))
        if t < inst.T - 1:
            Sig = inst.idio[t] * x + inst.loadings[t] @ (inst.loadings[t].T @ x)
            total += -float(np.dot(inst.mu[t], x)) + inst.gamma * float(np.dot(x, Sig))
            total += float(np.dot(inst.s[t], np.maximum(-x, 0.0)))
        prev = x
    return total


def transaction_cost(inst, X, include_first=True):
    X = np.asarray(X, dtype=float)
    prev = inst.x0
    total = 0.0
    for t in range(inst.T):
        dx = X[t] - prev
        if t > 0 or include_first:
            total += 0.5 * float(np.dot(dx, inst.D[t] * dx))
        prev = X[t]
    return total
