"""Diagonal quadratic majorizers of the Laplacian term.

Every rule returns ``alpha`` with ``diag(alpha) - L`` positive definite, so
that

    Lhat(x; z) = (1/2) z'Lz + (Lz)'(x - z) + (1/2)(x - z)' diag(alpha) (x - z)

upper bounds ``(1/2) x'Lx`` and touches it at ``x = z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AsymmetricInput, DimensionMismatch, FactorTooSmall, NoConvergence, NonpositiveFloor
from .lapgraph import WeightedLaplacian, dirichlet_energy, matvec

DEFAULT_FACTOR = 3.0
SPECTRAL_MARGIN = 1e-6


@dataclass(frozen=True)
class DiagonalMajorizer:
    alpha: np.ndarray
    source_rule: str

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 1 or not np.all(alpha > 0):
            raise ValueError("majorizer entries must be positive")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def n(self):
        return self.alpha.shape[0]

    def gap_frobenius(self, L):
        """``||diag(alpha) - L||_F``."""
        d = self.alpha - L.diag
        return float(np.sqrt(np.dot(d, d) + L.frobenius_sq_offdiag()))

    def gap_quadratic_form(self, L, z):
        """``z' (diag(alpha) - L) z``."""
        return float(np.dot(z, self.alpha * z)) - 2.0 * dirichlet_energy(L, z)


def default_floor(L):
    return 1e-6 * (1.0 + float(L.diag.max(initial=0.0)))


def _check(factor, floor):
    if not factor > 2:
        raise FactorTooSmall(f"factor must exceed 2, got {factor}")
    if not floor > 0:
        raise NonpositiveFloor(f"floor must be positive, got {floor}")


def diagonal_majorizer(L, factor=DEFAULT_FACTOR, floor=None):
    """``alpha_i = max(factor * L_ii, floor)``; needs ``factor > 2``."""
    floor = default_floor(L) if floor is None else floor
    _check(factor, floor)
    return DiagonalMajorizer(np.maximum(factor * L.diag, floor), "diagonal")


def block_identity_majorizer(L, partition, factor=DEFAULT_FACTOR, floor=None):
    """Per-block multiple of the identity from the largest diagonal in the block."""
    if partition.n != L.n:
        raise DimensionMismatch(f"partition of size {partition.n} for Laplacian of size {L.n}")
    floor = default_floor(L) if floor is None else floor
    _check(factor, floor)
    alpha = np.empty(L.n)
    for s in partition.slices():
        alpha[s] = max(factor * float(L.diag[s].max()), floor)
    return DiagonalMajorizer(alpha, "block-identity")


def power_iteration(L, tol=1e-12, max_iter=100_000, seed=0):
    """Largest eigenvalue of ``L`` by power iteration on the Rayleigh quotient.

    Starts from the normalized ones vector plus a seeded perturbation (the
    ones vector alone lies in the null space).
    """
    if L.n == 0 or L.num_edges == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = np.ones(L.n) / np.sqrt(L.n) + 1e-2 * rng.standard_normal(L.n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = matvec(L, v)
        lam_new = float(np.dot(v, w))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return lam_new
        lam = lam_new
    raise NoConvergence(max_iter, "power iteration")


def spectral_majorizer(L, tol=1e-12, max_iter=100_000, floor=None):
    """Uniform ``alpha = 2 lambda_max(L) (1 + 1e-6)``, floored for ``L = 0``."""
    floor = default_floor(L) if floor is None else floor
    if not floor > 0:
        raise NonpositiveFloor(f"floor must be positive, got {floor}")
    lam = power_iteration(L, tol, max_iter)
    value = max(2.0 * lam * (1.0 + SPECTRAL_MARGIN), floor)
    return DiagonalMajorizer(np.full(L.n, value), "spectral")


def general_quadratic_majorizer(Q, margin=1e-3, floor=None):
    """``alpha_i = (1 + margin) sum_j |Q_ij|`` for any symmetric PSD ``Q``.

    For a Laplacian the row sums are ``2 L_ii``, so this recovers the
    diagonal rule.
    """
    if not margin > 0:
        raise ValueError(f"margin must be positive, got {margin}")
    if isinstance(Q, WeightedLaplacian):
        rowsum = 2.0 * Q.diag
        qdiag = Q.diag
    else:
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionMismatch(f"Q must be square, got {Q.shape}")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max(initial=0))):
            raise AsymmetricInput("Q is not symmetric")
        rowsum = np.abs(Q).sum(axis=1)
        qdiag = np.diag(Q)
    if floor is None:
        floor = 1e-6 * (1.0 + float(qdiag.max(initial=0.0)))
    alpha = (1.0 + margin) * rowsum
    alpha[rowsum == 0] = floor
    return DiagonalMajorizer(alpha, "general-quadratic")


def majorizer_value(L, majorizer, x, z):
    """Evaluate ``Lhat(x; z)``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != (L.n,) or z.shape != (L.n,) or majorizer.n != L.n:
        raise DimensionMismatch("x, z, L and the majorizer must share one dimension")
    d = x - z
    return (
        dirichlet_energy(L, z)
        + float(np.dot(matvec(L, z), d))
        + 0.5 * float(np.dot(d, majorizer.alpha * d))
    )


def check_majorizer(L, majorizer, samples=100, seed=0, dense_limit=2000):
    """Return ``(cholesky_ok, min_sampled_quadratic_form)`` for ``diag(alpha) - L``.

    The Cholesky test is skipped (reported as ``None``) above ``dense_limit``.
    """
    chol_ok = None
    if L.n <= dense_limit:
        try:
            np.linalg.cholesky(np.diag(majorizer.alpha) - L.to_dense())
            chol_ok = True
        except np.linalg.LinAlgError:
            chol_ok = False
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(samples):
        z = rng.standard_normal(L.n)
        worst = min(worst, majorizer.gap_quadratic_form(L, z))
    return chol_ok, worst
