"""Subproblem solvers for factor-model quadratic blocks.

The smooth part is ``x'Px + q'x`` with ``P = diag(d) + scale * F F'``, the
nonsmooth part is a shorting cost ``s'(x)_-``, and there is at most one
affine constraint ``a'x = b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoConvergence, SingularSystem


@dataclass(frozen=True)
class FactorQuadratic:
    """``P = diag(diag) + scale * factors @ factors.T``."""

    diag: np.ndarray
    factors: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        F = np.asarray(self.factors, dtype=float)
        if F.ndim == 1:
            F = F.reshape(-1, 0) if F.size == 0 else F[:, None]
        if F.shape[0] != d.shape[0]:
            raise DimensionMismatch(f"factors have {F.shape[0]} rows for {d.shape[0]} variables")
        if np.any(d < 0) or self.scale < 0:
            raise ValueError("diag and scale must be nonnegative")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "factors", F)

    @classmethod
    def diagonal(cls, d):
        d = np.asarray(d, dtype=float)
        return cls(d, np.zeros((d.shape[0], 0)), 0.0)

    @property
    def n(self):
        return self.diag.shape[0]

    def matvec(self, x):
        F = self.factors
        return self.diag * x + self.scale * (F @ (F.T @ x))

    def quad(self, x):
        """``x' P x``."""
        Ft = self.factors.T @ x
        return float(np.dot(x, self.diag * x) + self.scale * np.dot(Ft, Ft))

    def dense(self):
        F = self.factors
        return np.diag(self.diag) + self.scale * (F @ F.T)


@dataclass(frozen=True)
class NegativePartCost:
    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if np.any(s < 0):
            raise ValueError("shorting costs must be nonnegative")
        object.__setattr__(self, "s", s)

    def __call__(self, x):
        return float(np.dot(self.s, np.maximum(-np.asarray(x), 0.0)))


class EqQuadraticSolver:
    """Reusable KKT solver for ``(2P + diag(rho)) x + q - rho*u + nu a = 0, a'x = b``.

    ``2P + diag(rho) = D + G G'`` with ``D`` diagonal and ``G = sqrt(2 scale) F``
    is inverted with the matrix inversion lemma through an ``r x r``
    capacitance matrix.
    """

    def __init__(self, P, rho, a=None):
        rho = np.broadcast_to(np.asarray(rho, dtype=float), P.diag.shape)
        self.D = 2.0 * P.diag + rho
        if np.any(~(self.D > 0)):
            k = int(np.flatnonzero(~(self.D > 0))[0])
            raise SingularSystem(f"zero curvature in coordinate {k}: diag and rho both vanish")
        self.G = np.sqrt(2.0 * P.scale) * P.factors
        self._Dinv_G = self.G / self.D[:, None]
        r = self.G.shape[1]
        if r:
            cap = np.eye(r) + self.G.T @ self._Dinv_G
            # r is small and cap >= I, so an explicit inverse is well conditioned
            chol = np.linalg.cholesky(cap)
            cinv = np.linalg.inv(chol)
            self._cap_inv = cinv.T @ cinv
        self.a = None if a is None else np.asarray(a, dtype=float)
        if self.a is not None:
            if not np.any(self.a):
                raise SingularSystem("constraint vector is zero")
            self._Ma = self.apply_inverse(self.a)
            self._aMa = float(np.dot(self.a, self._Ma))

    def apply_inverse(self, c):
        y = c / self.D
        if self.G.shape[1]:
            y = y - self._Dinv_G @ (self._cap_inv @ (self.G.T @ y))
        return y

    def apply(self, x):
        return self.D * x + self.G @ (self.G.T @ x)

    def solve(self, c, b=None):
        """Minimize ``(1/2) x'(2P + diag(rho)) x - c'x`` (s.t. ``a'x = b``)."""
        y = self.apply_inverse(c)
        if self.a is None:
            return self._refine(y, c, 0.0)
        nu = (float(np.dot(self.a, y)) - b) / self._aMa
        x = y - nu * self._Ma
        return self._refine(x, c, nu, b)

    def _refine(self, x, c, nu, b=None):
        # one step of iterative refinement on the full KKT system
        rx = c - self.apply(x) - (nu * self.a if self.a is not None else 0.0)
        if self.a is None:
            return x + self.apply_inverse(rx)
        rb = b - float(np.dot(self.a, x))
        y = self.apply_inverse(rx)
        dnu = (float(np.dot(self.a, y)) - rb) / self._aMa
        return x + y - dnu * self._Ma


def solve_eq_quadratic(P, q, rho, u, a=None, b=None):
    """Minimize ``(1/2) x'(2P + diag(rho)) x + q'x - (rho*u)'x`` subject to ``a'x = b``.

    Pass ``a=None`` for the unconstrained problem.
    """
    q = np.asarray(q, dtype=float)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), q.shape)
    u = np.broadcast_to(np.asarray(u, dtype=float), q.shape)
    if q.shape != (P.n,):
        raise DimensionMismatch(f"q has shape {q.shape}, expected ({P.n},)")
    return EqQuadraticSolver(P, rho, a).solve(rho * u - q, b)


def prox_negative_part(s, rho, u):
    """Coordinatewise ``argmin_x s*max(-x, 0) + (rho/2)(x - u)**2``."""
    s = s.s if isinstance(s, NegativePartCost) else np.asarray(s, dtype=float)
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.where(u >= 0, u, np.minimum(u + s / rho, 0.0))


@dataclass
class BlockQP:
    """``x'Px + q'x + s'(x)_- + (1/2)(x - c)' diag(alpha) (x - c)`` with ``a'x = b``."""

    P: FactorQuadratic
    q: np.ndarray
    s: np.ndarray
    center: np.ndarray
    alpha: np.ndarray
    a: np.ndarray | None = None
    b: float | None = None

    def value(self, x):
        if self.a is not None and abs(np.dot(self.a, x) - self.b) > 1e-9 * (1 + abs(self.b)):
            return np.inf
        d = x - self.center
        return (
            self.P.quad(x)
            + float(np.dot(self.q, x))
            + float(np.dot(self.s, np.maximum(-x, 0.0)))
            + 0.5 * float(np.dot(d, self.alpha * d))
        )


def inner_admm(qp, tol=1e-10, max_iter=20_000, rho=None):
    """Solve a :class:`BlockQP` by ADMM, splitting the shorting cost off.

    The x-step is an equality-constrained factor-model solve, the z-step the
    negative-part prox. Only coordinates with ``s_j > 0`` are split; the
    others have an identity prox and stay in the x-step. ``rho`` defaults to
    the geometric mean of ``alpha``. Returns the x iterate, which satisfies
    the affine constraint exactly.
    """
    alpha = np.asarray(qp.alpha, dtype=float)
    if np.any(~(alpha > 0)):
        raise ValueError("alpha must be positive")
    c = np.asarray(qp.center, dtype=float)
    s = np.asarray(qp.s, dtype=float)
    if not np.any(s):
        return EqQuadraticSolver(qp.P, alpha, qp.a).solve(alpha * c - qp.q, qp.b)

    if rho is None:
        rho = float(np.exp(np.mean(np.log(alpha))))
    split = s > 0
    rho_vec = np.where(split, rho, 0.0)
    solver = EqQuadraticSolver(qp.P, alpha + rho_vec, qp.a)
    base = alpha * c - qp.q
    s_split = s[split]
    z = c[split].copy()
    w = np.zeros_like(z)
    for _ in range(max_iter):
        shift = np.zeros_like(c)
        shift[split] = rho * (z - w)
        x = solver.solve(base + shift, qp.b)
        xs = x[split]
        z_old = z
        z = prox_negative_part(s_split, rho, xs + w)
        w = w + xs - z
        bound = tol * (1.0 + np.linalg.norm(x))
        if np.linalg.norm(xs - z) <= bound and rho * np.linalg.norm(z - z_old) <= bound:
            return x
    raise NoConvergence(max_iter, "inner ADMM")
