"""Distributed majorization-minimization loop.

Each iteration forms ``h = L x``, then solves one diagonally scaled prox
problem per block,

    x_i <- argmin f_i(u) + (1/2)(u - x_i)' diag(alpha_i) (u - x_i) + h_i' u,

and stops once the optimality residual ``(diag(alpha) - L)(x_prev - x)``
falls below ``eps_abs + eps_rel (||diag(alpha) - L||_F + ||x||)``.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import BlockUpdateFailure, DimensionMismatch, InfeasibleStart
from .lapgraph import dirichlet_energy, matvec

CONVERGED = "Converged"
MAX_ITER = "MaxIter"


class BlockProblem(Protocol):
    """Per-block access to a block separable ``f``.

    Implementations must tolerate concurrent calls on distinct blocks.
    """

    def update(self, i: int, x_i: np.ndarray, h_i: np.ndarray, alpha_i: np.ndarray) -> np.ndarray:
        """Minimize ``f_i(u) + (1/2)(u - x_i)' diag(alpha_i)(u - x_i) + h_i' u``."""

    def objective(self, i: int, x_i: np.ndarray) -> float:
        """``f_i(x_i)``, ``inf`` outside the domain."""

    def feasible_start(self, i: int) -> np.ndarray:
        """A point with finite ``f_i``."""


@dataclass
class SolveOptions:
    eps_abs: float = 1e-6
    eps_rel: float = 0.0
    max_iter: int = 1000
    workers: int = 1
    record_objective: bool = True

    def __post_init__(self):
        if not self.eps_abs > 0:
            raise ValueError(f"eps_abs must be positive, got {self.eps_abs}")
        if self.eps_rel < 0:
            raise ValueError(f"eps_rel must be nonnegative, got {self.eps_rel}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class SolveTrace:
    """One entry per block update; entry ``k-1`` describes iterate ``x^k``."""

    residual_norm: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    elapsed_ms: list = field(default_factory=list)
    initial_objective: float | None = None
    status: str = MAX_ITER

    @property
    def iterations(self):
        return len(self.residual_norm)

    @property
    def final_residual(self):
        return self.residual_norm[-1] if self.residual_norm else float("nan")

    @property
    def final_objective(self):
        return self.objective[-1] if self.objective else None

    @property
    def converged(self):
        return self.status == CONVERGED

    def objectives_with_start(self):
        head = [] if self.initial_objective is None else [self.initial_objective]
        return head + [f for f in self.objective if f is not None]

    def is_monotone(self, slack=1e-9):
        f = self.objectives_with_start()
        return all(b <= a + slack for a, b in zip(f, f[1:]))

    def to_csv(self, timing=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "residual_norm", "objective", "elapsed_ms"])
        for k, r in enumerate(self.residual_norm):
            f = self.objective[k] if k < len(self.objective) else None
            row = [k + 1, f"{r:.17g}", "" if f is None else f"{f:.17g}"]
            row.append(f"{self.elapsed_ms[k]:.3f}" if timing else "")
            w.writerow(row)
        return buf.getvalue()


def residual(L, majorizer, x_prev, x_cur):
    """``(diag(alpha) - L)(x_prev - x_cur)``."""
    x_prev = np.asarray(x_prev, dtype=float)
    x_cur = np.asarray(x_cur, dtype=float)
    if x_prev.shape != (L.n,) or x_cur.shape != (L.n,):
        raise DimensionMismatch("iterates must match the Laplacian dimension")
    d = x_prev - x_cur
    return majorizer.alpha * d - matvec(L, d)


def stopping_threshold(majorizer, L, x, opts, gap_norm=None):
    if opts.eps_rel == 0:
        return opts.eps_abs
    if gap_norm is None:
        gap_norm = majorizer.gap_frobenius(L)
    return opts.eps_abs + opts.eps_rel * (gap_norm + float(np.linalg.norm(x)))


def full_objective(L, problem, partition, x):
    """``sum_i f_i(x_i) + (1/2) x'Lx``; ``inf`` if any block is infeasible."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for i, s in enumerate(partition.slices()):
        fi = problem.objective(i, x[s])
        if not np.isfinite(fi):
            return np.inf
        total += fi
    return total + dirichlet_energy(L, x)


def _update_blocks(problem, slices, x, h, alpha, pool):
    def one(i):
        s = slices[i]
        try:
            xi = np.asarray(problem.update(i, x[s], h[s], alpha[s]), dtype=float)
        except BlockUpdateFailure:
            raise
        except Exception as exc:
            raise BlockUpdateFailure(i, f"{type(exc).__name__}: {exc}") from exc
        if xi.shape != x[s].shape:
            raise BlockUpdateFailure(i, f"update returned shape {xi.shape}, expected {x[s].shape}")
        if not np.all(np.isfinite(xi)):
            raise BlockUpdateFailure(i, "update returned non-finite values")
        return xi

    idx = range(len(slices))
    parts = list(pool.map(one, idx)) if pool is not None else [one(i) for i in idx]
    x_new = np.empty_like(x)
    for s, xi in zip(slices, parts):
        x_new[s] = xi
    return x_new


def solve(L, partition, majorizer, problem, x0=None, opts=None, callback=None):
    """Run the distributed MM iteration.

    Parameters
    ----------
    L : WeightedLaplacian
    partition : BlockPartition
        Block structure of ``f``; must cover ``L.n`` coordinates.
    majorizer : DiagonalMajorizer
        ``alpha`` with ``diag(alpha) - L`` positive definite.
    problem : BlockProblem
    x0 : array_like, optional
        Starting point (warm start). Defaults to the blocks' feasible starts.
    opts : SolveOptions, optional
    callback : callable, optional
        Called as ``callback(k, x)`` after every block update.

    Returns
    -------
    x : ndarray
        The last iterate.
    trace : SolveTrace
    """
    opts = SolveOptions() if opts is None else opts
    if partition.n != L.n or majorizer.n != L.n:
        raise DimensionMismatch("L, partition and majorizer dimensions differ")
    slices = partition.slices()
    if x0 is None:
        x = np.concatenate([np.asarray(problem.feasible_start(i), dtype=float) for i in range(partition.p)])
    else:
        x = np.array(x0, dtype=float)
    if x.shape != (L.n,):
        raise DimensionMismatch(f"x0 has shape {x.shape}, expected ({L.n},)")

    trace = SolveTrace()
    f0 = full_objective(L, problem, partition, x)
    if not np.isfinite(f0):
        raise InfeasibleStart("f(x0) is not finite")
    if opts.record_objective:
        trace.initial_objective = f0

    alpha = majorizer.alpha
    gap_norm = majorizer.gap_frobenius(L) if opts.eps_rel > 0 else None
    pool = ThreadPoolExecutor(opts.workers) if opts.workers > 1 else None
    t0 = time.perf_counter()
    try:
        for k in range(1, opts.max_iter + 1):
            h = matvec(L, x)
            x_new = _update_blocks(problem, slices, x, h, alpha, pool)
            r = residual(L, majorizer, x, x_new)
            x = x_new
            rnorm = float(np.linalg.norm(r))
            trace.residual_norm.append(rnorm)
            trace.objective.append(
                full_objective(L, problem, partition, x) if opts.record_objective else None
            )
            trace.elapsed_ms.append(1e3 * (time.perf_counter() - t0))
            if callback is not None:
                callback(k, x)
            if k >= 2 and rnorm <= stopping_threshold(majorizer, L, x, opts, gap_norm):
                trace.status = CONVERGED
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return x, trace
