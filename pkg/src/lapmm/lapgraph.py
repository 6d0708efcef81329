"""Weighted graph Laplacians, block partitions and the Laplacian quadratic form.

A Laplacian is stored as a sorted edge list ``(i, j, w)`` with ``i < j`` and
``w > 0`` plus the derived diagonal.  All reductions walk the edges in sorted
order so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, DuplicateEdge, IndexOutOfRange, NonpositiveWeight


@dataclass(frozen=True)
class WeightedLaplacian:
    """Sparse symmetric Laplacian ``L`` on ``n`` nodes.

    Attributes
    ----------
    n : int
        Number of nodes (scalar coordinates).
    rows, cols : ndarray of int
        Edge endpoints with ``rows < cols``, sorted lexicographically.
    weights : ndarray of float
        Positive edge weights ``w_ij = -L_ij``.
    diag : ndarray of float
        ``L_ii = sum_j w_ij``.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    diag: np.ndarray = field(repr=False)

    @property
    def num_edges(self):
        return len(self.weights)

    def edges(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.weights.tolist()))

    def to_dense(self):
        L = np.zeros((self.n, self.n))
        L[self.rows, self.cols] = -self.weights
        L[self.cols, self.rows] = -self.weights
        L[np.arange(self.n), np.arange(self.n)] = self.diag
        return L

    def frobenius_sq_offdiag(self):
        """Sum of squared off-diagonal entries, ``2 * sum w_ij**2``."""
        return 2.0 * float(np.dot(self.weights, self.weights))

    def expand(self, m):
        """Return ``L kron I_m``: each node becomes ``m`` uncoupled coordinates."""
        if m == 1:
            return self
        k = np.arange(m)
        rows = (self.rows[:, None] * m + k).ravel()
        cols = (self.cols[:, None] * m + k).ravel()
        weights = np.repeat(self.weights, m)
        return _from_arrays(self.n * m, rows, cols, weights)


def _from_arrays(n, rows, cols, weights):
    order = np.lexsort((cols, rows))
    rows = np.ascontiguousarray(rows[order], dtype=np.int64)
    cols = np.ascontiguousarray(cols[order], dtype=np.int64)
    weights = np.ascontiguousarray(weights[order], dtype=float)
    diag = np.bincount(rows, weights=weights, minlength=n) + np.bincount(
        cols, weights=weights, minlength=n
    )
    for a in (rows, cols, weights, diag):
        a.setflags(write=False)
    return WeightedLaplacian(n, rows, cols, weights, diag)


def laplacian_from_edges(n, edges):
    """Assemble a Laplacian from ``(i, j, w)`` triples with ``0 <= i < j < n``.

    Duplicate edges are an error rather than being accumulated.
    """
    n = int(n)
    if len(edges) == 0:
        e = np.zeros(0, dtype=np.int64)
        return _from_arrays(n, e, e, np.zeros(0))
    arr = np.asarray(edges, dtype=float).reshape(-1, 3)
    rows = arr[:, 0].astype(np.int64)
    cols = arr[:, 1].astype(np.int64)
    weights = arr[:, 2]
    if np.any(rows != arr[:, 0]) or np.any(cols != arr[:, 1]):
        raise IndexOutOfRange("edge endpoints must be integers")
    bad = (rows < 0) | (cols >= n) | (rows >= cols)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise IndexOutOfRange(f"edge {k} = ({rows[k]}, {cols[k]}) violates 0 <= i < j < {n}")
    if np.any(~(weights > 0)):
        k = int(np.flatnonzero(~(weights > 0))[0])
        raise NonpositiveWeight(f"edge {k} has weight {weights[k]}")
    key = rows * n + cols
    uniq, counts = np.unique(key, return_counts=True)
    if np.any(counts > 1):
        dup = int(uniq[counts > 1][0])
        raise DuplicateEdge(f"edge ({dup // n}, {dup % n}) appears more than once")
    return _from_arrays(n, rows, cols, weights)


def grid_graph(rows, cols, weight=1.0):
    """4-neighbour grid edges; node ``(r, c)`` has index ``r * cols + c``."""
    if not weight > 0:
        raise NonpositiveWeight(f"weight must be positive, got {weight}")
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one row and one column")
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1, weight))
            if r + 1 < rows:
                edges.append((i, i + cols, weight))
    return edges


@dataclass(frozen=True)
class BlockPartition:
    """Split of ``x`` into consecutive blocks of the given sizes."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) == 0 or any(s < 1 for s in sizes):
            raise ValueError(f"block sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def uniform(cls, p, size):
        return cls((size,) * p)

    @property
    def p(self):
        return len(self.sizes)

    @property
    def n(self):
        return sum(self.sizes)

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def slice(self, i):
        start = sum(self.sizes[:i])
        return slice(start, start + self.sizes[i])

    def slices(self):
        off = self.offsets
        return [slice(int(off[i]), int(off[i + 1])) for i in range(self.p)]

    def split(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.n:
            raise DimensionMismatch(f"vector of length {x.shape[0]} for partition of size {self.n}")
        return [x[s] for s in self.slices()]


@dataclass(frozen=True)
class PartitionedVector:
    """A vector together with the partition that splits it into blocks."""

    data: np.ndarray
    partition: BlockPartition

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 1 or data.shape[0] != self.partition.n:
            raise DimensionMismatch(
                f"data of shape {data.shape} does not match partition size {self.partition.n}"
            )
        object.__setattr__(self, "data", data)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def block(self, i):
        return self.data[self.partition.slice(i)]

    def blocks(self):
        return self.partition.split(self.data)


def _vec(L, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (L.n,):
        raise DimensionMismatch(f"expected vector of length {L.n}, got shape {x.shape}")
    return x


def matvec(L, x):
    """Return ``L @ x`` by sparse accumulation over the edge list."""
    x = _vec(L, x)
    wd = L.weights * (x[L.cols] - x[L.rows])
    # row i of L @ x is sum_j w_ij (x_i - x_j)
    return np.bincount(L.cols, weights=wd, minlength=L.n) - np.bincount(
        L.rows, weights=wd, minlength=L.n
    )


def dirichlet_energy(L, x):
    """``(1/2) x^T L x`` computed as ``(1/2) sum w_ij (x_i - x_j)**2``."""
    x = _vec(L, x)
    diff = x[L.rows] - x[L.cols]
    return 0.5 * float(np.dot(L.weights, diff * diff))


@dataclass
class ValidationReport:
    """Violated Laplacian invariants with their worst-case magnitudes."""

    asymmetry: float = 0.0
    positive_offdiagonal: float = 0.0
    row_sum: float = 0.0
    shape_error: str | None = None
    tol: float = 1e-12

    @property
    def violations(self):
        out = []
        if self.shape_error:
            out.append(("shape", self.shape_error))
        if self.asymmetry > self.tol:
            out.append(("asymmetric", self.asymmetry))
        if self.positive_offdiagonal > 0:
            out.append(("positive off-diagonal", self.positive_offdiagonal))
        if self.row_sum > self.tol:
            out.append(("nonzero row sum", self.row_sum))
        return out

    @property
    def valid(self):
        return not self.violations

    def __str__(self):
        if self.valid:
            return "valid Laplacian"
        return "; ".join(
            f"{name}: {val}" if isinstance(val, str) else f"{name} (worst {val:.3g})"
            for name, val in self.violations
        )


def validate(L, tol=1e-12):
    """Check the Laplacian invariants of a dense or edge-list matrix."""
    if isinstance(L, WeightedLaplacian):
        L = L.to_dense()
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        return ValidationReport(shape_error=f"not square: {L.shape}", tol=tol)
    scale = max(1.0, float(np.abs(L).max(initial=0.0)))
    off = L - np.diag(np.diag(L))
    return ValidationReport(
        asymmetry=float(np.abs(L - L.T).max(initial=0.0)),
        positive_offdiagonal=float(off.max(initial=0.0)),
        row_sum=float(np.abs(L.sum(axis=1)).max(initial=0.0)),
        tol=tol * scale,
    )


def write_graph(path, L):
    """Write ``L`` as text: header ``n m`` then one ``i j w`` line per edge."""
    lines = [f"{L.n} {L.num_edges}"]
    lines += [f"{i} {j} {w:.17g}" for i, j, w in L.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_file(path):
    """Parse a graph file into ``(n, edges)`` without validating the edges."""
    tokens = Path(path).read_text().split("\n")
    tokens = [t.split() for t in tokens if t.strip()]
    if not tokens or len(tokens[0]) != 2:
        raise ValueError(f"{path}: header must be 'n m'")
    n, m = int(tokens[0][0]), int(tokens[0][1])
    body = tokens[1:]
    if len(body) != m:
        raise ValueError(f"{path}: header declares {m} edges, found {len(body)}")
    edges = []
    for k, parts in enumerate(body, start=2):
        if len(parts) != 3:
            raise ValueError(f"{path}:{k}: expected 'i j w'")
        edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
    return n, edges


def read_graph(path):
    n, edges = read_edge_file(path)
    return laplacian_from_edges(n, edges)
