"""Reference solvers for small instances.

These use a different algorithm family from the MM solver (accelerated
proximal gradient, dense KKT) and their own prox routines, so agreement with
the MM solver is evidence rather than a tautology.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoProgress, SingularKKT
from .lapgraph import dirichlet_energy, matvec


@dataclass
class OracleResult:
    x_star: np.ndarray
    objective: float
    certificate: float
    iterations: int = 0


def proximal_gradient_reference(L, prox, objective, x0, step, iters, smooth=None, tol=0.0, patience=50):
    """Accelerated proximal gradient with adaptive restart on ``f + (1/2)x'Lx``.

    Parameters
    ----------
    L : WeightedLaplacian
    prox : callable
        ``prox(y, t)`` returns ``argmin_x f(x) + ||x - y||^2 / (2t)``.
    objective : callable
        ``f(x)``, ``inf`` outside its domain.
    x0 : ndarray
        Starting point with finite objective.
    step : float
        Step size, at most ``1 / Lipschitz(grad of smooth part)``.
    iters : int
    smooth : (value, grad) pair, optional
        Extra smooth terms moved into the forward step along with the Laplacian.
    tol : float
        Stop when the gradient mapping norm falls below ``tol``.
    patience : int
        Number of objective increases on plain (non-extrapolated) steps
        tolerated before raising :class:`NoProgress`.
    """
    if smooth is None:
        def sval(x):
            return 0.0

        def sgrad(x):
            return 0.0
    else:
        sval, sgrad = smooth

    def F(x):
        return objective(x) + sval(x) + dirichlet_energy(L, x)

    def grad(x):
        return matvec(L, x) + sgrad(x)

    x = np.array(x0, dtype=float)
    fx = F(x)
    if not np.isfinite(fx):
        raise NoProgress("starting point has infinite objective")
    best, fbest = x.copy(), fx
    y, t = x.copy(), 1.0
    bad = 0
    k = 0
    for k in range(1, iters + 1):
        plain = y is x
        x_new = prox(y - step * grad(y), step)
        f_new = F(x_new)
        if not f_new <= fx + 1e-13 * (1.0 + abs(fx)):
            if plain:
                bad += 1
                if bad > patience or not np.isfinite(f_new):
                    raise NoProgress(f"objective increased on {bad} plain steps; step too large?")
            y, t = x, 1.0
            continue
        gmap = np.linalg.norm(x_new - y) / step
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, fx, t = x_new, f_new, t_new
        if fx < fbest:
            best, fbest = x.copy(), fx
        if tol > 0 and gmap <= tol:
            break

    g = prox(best - step * grad(best), step)
    cert = float(np.linalg.norm(best - g) / step)
    return OracleResult(best, fbest, cert, k)


def dense_kkt_reference(P, q, A, b, const=0.0):
    """Minimize ``(1/2)x'Px + q'x + const`` subject to ``Ax = b`` via the dense KKT system."""
    P = np.asarray(P, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    q = np.asarray(q, dtype=float)
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n, m = P.shape[0], A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = P
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([-q, b])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularKKT(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise SingularKKT("KKT solution is not finite")
    x, nu = sol[:n], sol[n:]
    cert = max(
        float(np.linalg.norm(P @ x + q + A.T @ nu, np.inf)),
        float(np.linalg.norm(A @ x - b, np.inf)),
    )
    obj = 0.5 * float(x @ P @ x) + float(q @ x) + const
    return OracleResult(x, obj, cert)


# -- portfolio ----------------------------------------------------------------


def portfolio_qp(inst):
    """Dense ``(P, q, A, b, const)`` of the multi-period problem with ``s = 0``.

    Built from the per-period transaction-cost sum directly, not from a
    Laplacian.
    """
    T, n = inst.T, inst.n
    N = T * n
    P = np.zeros((N, N))
    q = np.zeros(N)

    def blk(t):
        return slice(t * n, (t + 1) * n)

    for t in range(T - 1):
        Sig = np.diag(inst.idio[t]) + inst.loadings[t] @ inst.loadings[t].T
        P[blk(t), blk(t)] += 2.0 * inst.gamma * Sig
        q[blk(t)] -= inst.mu[t]
    for t in range(T):
        Dt = np.diag(inst.D[t])
        P[blk(t), blk(t)] += Dt
        if t == 0:
            q[blk(0)] -= inst.D[0] * inst.x0
        else:
            P[blk(t - 1), blk(t - 1)] += Dt
            P[blk(t), blk(t - 1)] -= Dt
            P[blk(t - 1), blk(t)] -= Dt
    const = 0.5 * float(inst.x0 @ (inst.D[0] * inst.x0))
    rows = []
    rhs = []
    for t in range(T - 1):
        a = np.zeros(N)
        a[blk(t)] = 1.0
        rows.append(a)
        rhs.append(1.0)
    for j in range(n):
        a = np.zeros(N)
        a[(T - 1) * n + j] = 1.0
        rows.append(a)
        rhs.append(1.0 if j == n - 1 else 0.0)
    return P, q, np.array(rows), np.array(rhs), const


def portfolio_kkt_reference(inst):
    if np.any(inst.s):
        raise ValueError("dense KKT reference needs s = 0")
    return dense_kkt_reference(*portfolio_qp(inst))


def simplex_negpart_prox(y, s, t):
    """``argmin_x s'(x)_- + ||x - y||^2/(2t)`` subject to ``sum(x) = 1``.

    For a multiplier ``nu`` each coordinate is a shifted scalar prox; the sum
    is piecewise linear and nonincreasing in ``nu``, so ``nu`` is found
    exactly between consecutive breakpoints.
    """
    ts = t * s

    def phi(nu):
        u = y - t * np.atleast_1d(nu)[:, None]
        return np.where(u >= 0, u, np.minimum(u + ts, 0.0))

    bps = np.unique(np.concatenate([y / t, (y + ts) / t]))
    g = phi(bps).sum(axis=1) - 1.0
    if g[0] < 0:
        # left of every breakpoint all coordinates are in the identity regime
        nu = bps[0] + g[0] / (t * y.size)
    elif g[-1] > 0:
        nu = bps[-1] + g[-1] / (t * y.size)
    else:
        k = int(np.flatnonzero(g >= 0)[-1])
        if g[k] == 0 or k == len(bps) - 1:
            nu = bps[k]
        else:
            nu = bps[k] + g[k] * (bps[k + 1] - bps[k]) / (g[k] - g[k + 1])
    return phi(nu)[0]


def portfolio_pg_reference(inst, iters=200_000, tol=1e-13):
    """Proximal-gradient reference for the (possibly nonsmooth) portfolio problem.

    Smooth part: returns, risk, the ``x0`` transaction term and the Laplacian.
    Prox part: shorting cost plus the budget constraint, and the terminal
    all-cash constraint.
    """
    from .portfolio import chain_laplacian

    T, n = inst.T, inst.n
    L = chain_laplacian(inst.D[1:])
    e = inst.cash()
    D1 = inst.D[0]

    def split(x):
        return x.reshape(T, n)

    def sval(x):
        X = split(x)
        v = 0.5 * float(X[0] @ (D1 * X[0])) - float((D1 * inst.x0) @ X[0])
        v += 0.5 * float(inst.x0 @ (D1 * inst.x0))
        for k in range(T - 1):
            Fx = inst.loadings[k].T @ X[k]
            v += inst.gamma * (float(X[k] @ (inst.idio[k] * X[k])) + float(Fx @ Fx)) - float(inst.mu[k] @ X[k])
        return v

    def sgrad(x):
        X = split(x)
        G = np.zeros_like(X)
        G[0] += D1 * X[0] - D1 * inst.x0
        for k in range(T - 1):
            G[k] += 2.0 * inst.gamma * (inst.idio[k] * X[k] + inst.loadings[k] @ (inst.loadings[k].T @ X[k]))
            G[k] -= inst.mu[k]
        return G.ravel()

    def f(x):
        X = split(x)
        if not np.allclose(X[-1], e, rtol=0, atol=1e-12):
            return np.inf
        if np.any(np.abs(X[:-1].sum(axis=1) - 1.0) > 1e-9):
            return np.inf
        return float(sum(inst.s[k] @ np.maximum(-X[k], 0.0) for k in range(T - 1)))

    def prox(y, step):
        Y = split(y)
        X = np.empty_like(Y)
        for k in range(T - 1):
            X[k] = simplex_negpart_prox(Y[k], inst.s[k], step)
        X[-1] = e
        return X.ravel()

    H, _, _, _, _ = portfolio_qp(inst)
    # smooth Hessian restricted to the free periods bounds the Lipschitz constant
    lip = float(np.linalg.eigvalsh(H[: (T - 1) * n, : (T - 1) * n])[-1])
    x0 = np.tile(e, T)
    return proximal_gradient_reference(L, prox, f, x0, 1.0 / lip, iters, (sval, sgrad), tol)


# -- covariance ---------------------------------------------------------------


def covariance_pg_reference(inst, lam, iters=100_000, tol=1e-10, x0=None):
    """Proximal-gradient reference for Laplacian regularized covariance estimation.

    The prox of the per-node log-det loss is evaluated with ``numpy.linalg.eigh``.
    """
    from .covest import node_laplacian, svec, smat, svec_dim

    p, d = inst.p, inst.d
    m = svec_dim(d)
    Lnode = node_laplacian(inst, lam)
    L = Lnode.expand(m)
    I = np.eye(d)

    def f(x):
        total = 0.0
        for i, th in enumerate(smat(x.reshape(p, m), d)):
            w = np.linalg.eigvalsh(th)
            if w[0] <= 0:
                return np.inf
            total += float(np.sum(inst.S[i] * th)) - float(np.log(w).sum()) + inst.kappa * float(np.trace(th))
        return total

    def prox(y, step):
        out = np.empty((p, d, d))
        for i, Y in enumerate(smat(y.reshape(p, m), d)):
            w, Q = np.linalg.eigh(inst.S[i] + inst.kappa * I - Y / step)
            v = 0.5 * step * (-w + np.sqrt(w * w + 4.0 / step))
            out[i] = (Q * v) @ Q.T
        return svec(out).ravel()

    lmax = float(np.linalg.eigvalsh(Lnode.to_dense())[-1]) if Lnode.num_edges else 0.0
    step = 1.0 / lmax if lmax > 0 else 1.0
    if x0 is None:
        x0 = np.tile(svec(I), p)
    return proximal_gradient_reference(L, prox, f, x0, step, iters, None, tol)
