"""Pattern-aware symmetric matrix types and the graph Laplacian map.

A weighted undirected graph is stored as a sparsity pattern (the edge set,
upper triangle only, no self-loops) plus one real value per edge.  All flow
computations live on the pattern, so per-step cost is O(#edges); dense
n-by-n expansion is an explicit conversion.

The Laplacian map L(W) = diag(W 1) - W, the symmetric projection onto the
pattern, and the adjoint of L with respect to the Frobenius inner product
are provided as pure functions over these types.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "SparsityPattern",
    "WeightMatrix",
    "PatternMatrix",
    "laplacian",
    "laplacian_sparse",
    "laplacian_norm",
    "project_pattern",
    "laplacian_adjoint",
    "constraint_normal",
    "frobenius_inner",
    "pattern_norm",
    "read_graph",
    "write_graph",
    "GraphParseError",
]


class GraphParseError(ValueError):
    """Raised when a graph file cannot be parsed into a weight matrix."""


@dataclass(frozen=True)
class SparsityPattern:
    """Edge set of an undirected graph on vertices 0..n-1, no self-loops.

    Edges are stored sorted as (i, j) pairs with i < j; matrices supported
    on the pattern keep one value per edge (the upper triangle).
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        seen = set()
        for (i, j) in self.edges:
            if i == j:
                raise ValueError(f"self-loop ({i},{i}) not allowed")
            if not (0 <= i < j < self.n):
                raise ValueError(f"edge ({i},{j}) out of range for n={self.n}")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
        if list(self.edges) != sorted(self.edges):
            raise ValueError("edges must be sorted")
        ii = np.fromiter((e[0] for e in self.edges), dtype=np.intp, count=len(self.edges))
        jj = np.fromiter((e[1] for e in self.edges), dtype=np.intp, count=len(self.edges))
        object.__setattr__(self, "_ii", ii)
        object.__setattr__(self, "_jj", jj)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def rows(self) -> np.ndarray:
        """First endpoints of all edges (i of each (i, j), i < j)."""
        return self._ii

    @property
    def cols(self) -> np.ndarray:
        """Second endpoints of all edges."""
        return self._jj

    @classmethod
    def from_edges(cls, n: int, edges) -> "SparsityPattern":
        """Build from an iterable of (i, j) pairs; orientation and order are normalized."""
        canon = sorted({(min(i, j), max(i, j)) for (i, j) in edges if i != j})
        return cls(n=n, edges=tuple(canon))

    @classmethod
    def from_dense(cls, a: np.ndarray, tol: float = 0.0) -> "SparsityPattern":
        """Pattern of the off-diagonal entries of a with |a_ij| > tol.

        Diagonal entries are ignored: self-edges do not change the Laplacian.
        """
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError("square matrix required")
        iu, ju = np.triu_indices(n, k=1)
        mask = (np.abs(a[iu, ju]) > tol) | (np.abs(a[ju, iu]) > tol)
        return cls(n=n, edges=tuple(zip(iu[mask].tolist(), ju[mask].tolist())))

    @classmethod
    def complete(cls, n: int) -> "SparsityPattern":
        iu, ju = np.triu_indices(n, k=1)
        return cls(n=n, edges=tuple(zip(iu.tolist(), ju.tolist())))


def _check_values(pattern: SparsityPattern, values) -> np.ndarray:
    v = np.asarray(values, dtype=float).copy()
    if v.shape != (pattern.m,):
        raise ValueError(f"expected {pattern.m} edge values, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite edge value")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class PatternMatrix:
    """Symmetric real matrix supported on a sparsity pattern (any sign).

    Holds perturbation directions, gradients, and flow velocities.
    """

    pattern: SparsityPattern
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.pattern, self.values))

    def to_dense(self) -> np.ndarray:
        p = self.pattern
        a = np.zeros((p.n, p.n))
        a[p.rows, p.cols] = self.values
        a[p.cols, p.rows] = self.values
        return a

    @classmethod
    def zeros(cls, pattern: SparsityPattern) -> "PatternMatrix":
        return cls(pattern, np.zeros(pattern.m))

    def __add__(self, other: "PatternMatrix") -> "PatternMatrix":
        if other.pattern is not self.pattern and other.pattern != self.pattern:
            raise ValueError("pattern mismatch")
        return PatternMatrix(self.pattern, self.values + other.values)

    def __sub__(self, other: "PatternMatrix") -> "PatternMatrix":
        if other.pattern is not self.pattern and other.pattern != self.pattern:
            raise ValueError("pattern mismatch")
        return PatternMatrix(self.pattern, self.values - other.values)

    def __mul__(self, scalar: float) -> "PatternMatrix":
        return PatternMatrix(self.pattern, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "PatternMatrix":
        return PatternMatrix(self.pattern, -self.values)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Symmetric nonnegative edge weights on a sparsity pattern."""

    pattern: SparsityPattern
    weights: np.ndarray

    def __post_init__(self):
        w = _check_values(self.pattern, self.weights)
        if np.any(w < 0):
            raise ValueError("negative weight")
        object.__setattr__(self, "weights", w)

    def to_dense(self) -> np.ndarray:
        return PatternMatrix(self.pattern, self.weights).to_dense()

    def degrees(self) -> np.ndarray:
        """d = W 1, accumulated over edges."""
        p = self.pattern
        return (np.bincount(p.rows, weights=self.weights, minlength=p.n)
                + np.bincount(p.cols, weights=self.weights, minlength=p.n))

    def as_pattern(self) -> PatternMatrix:
        return PatternMatrix(self.pattern, self.weights)

    def perturbed(self, eps: float, e: PatternMatrix) -> PatternMatrix:
        """W + eps*E as a pattern matrix (may carry negative entries)."""
        if e.pattern is not self.pattern and e.pattern != self.pattern:
            raise ValueError("pattern mismatch")
        return PatternMatrix(self.pattern, self.weights + eps * e.values)

    @classmethod
    def from_dense(cls, a: np.ndarray, tol: float = 0.0) -> "WeightMatrix":
        a = np.asarray(a, dtype=float)
        if not np.allclose(a, a.T, atol=1e-12 * max(1.0, float(np.abs(a).max(initial=0.0)))):
            raise ValueError("weight matrix must be symmetric")
        p = SparsityPattern.from_dense(a, tol=tol)
        return cls(p, a[p.rows, p.cols])


# ---------------------------------------------------------------------------
# Laplacian map, projection, adjoint
# ---------------------------------------------------------------------------

def laplacian(m: WeightMatrix | PatternMatrix | np.ndarray) -> np.ndarray:
    """L(W) = diag(W 1) - W as a dense symmetric matrix.

    Accepts a weight matrix, a pattern matrix, or a dense symmetric array.
    The result satisfies L 1 = 0 up to rounding.
    """
    if isinstance(m, (WeightMatrix, PatternMatrix)):
        a = m.to_dense()
    else:
        a = np.asarray(m, dtype=float)
    return np.diag(a.sum(axis=1)) - a


def laplacian_sparse(m: WeightMatrix | PatternMatrix):
    """L(W) in CSR form, for iterative eigensolvers on larger graphs."""
    from scipy.sparse import coo_matrix

    p = m.pattern
    v = m.weights if isinstance(m, WeightMatrix) else m.values
    d = (np.bincount(p.rows, weights=v, minlength=p.n)
         + np.bincount(p.cols, weights=v, minlength=p.n))
    rows = np.concatenate([p.rows, p.cols, np.arange(p.n)])
    cols = np.concatenate([p.cols, p.rows, np.arange(p.n)])
    data = np.concatenate([-v, -v, d])
    return coo_matrix((data, (rows, cols)), shape=(p.n, p.n)).tocsr()


def laplacian_norm(e: WeightMatrix | PatternMatrix) -> float:
    """||L(E)||_F without forming the dense Laplacian.

    ||L(E)||_F^2 = sum_i d_i^2 + 2 sum_{i<j} e_ij^2 with d = E 1.
    """
    p = e.pattern
    v = e.weights if isinstance(e, WeightMatrix) else e.values
    d = (np.bincount(p.rows, weights=v, minlength=p.n)
         + np.bincount(p.cols, weights=v, minlength=p.n))
    return float(np.sqrt(d @ d + 2.0 * (v @ v)))


def project_pattern(a: np.ndarray, pattern: SparsityPattern) -> PatternMatrix:
    """Symmetric projection of a general square matrix onto the pattern.

    Entry (i, j) on the pattern becomes (a_ij + a_ji)/2; everything else is
    dropped.  This is the orthogonal projection onto symmetric matrices with
    the given sparsity pattern.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (pattern.n, pattern.n):
        raise ValueError(f"expected {pattern.n}x{pattern.n} matrix, got {a.shape}")
    vals = 0.5 * (a[pattern.rows, pattern.cols] + a[pattern.cols, pattern.rows])
    return PatternMatrix(pattern, vals)


def laplacian_adjoint(v: np.ndarray, pattern: SparsityPattern) -> PatternMatrix:
    """Adjoint of the Laplacian map: L*(V) = P_pattern(diagvec(V) 1^T - V).

    Satisfies <L*(V), W> = <V, L(W)> for every pattern-supported W.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (pattern.n, pattern.n):
        raise ValueError(f"expected {pattern.n}x{pattern.n} matrix, got {v.shape}")
    dv = np.diag(v)
    ii, jj = pattern.rows, pattern.cols
    vals = 0.5 * (dv[ii] + dv[jj]) - 0.5 * (v[ii, jj] + v[jj, ii])
    return PatternMatrix(pattern, vals)


def constraint_normal(e: PatternMatrix) -> PatternMatrix:
    """L*(L(E)) assembled in O(#edges): on edge (i,j) it is (d_i + d_j)/2 + e_ij.

    For self-loop-free patterns L*(L(E)) = P(d 1^T) + E with d = E 1.
    """
    p = e.pattern
    d = (np.bincount(p.rows, weights=e.values, minlength=p.n)
         + np.bincount(p.cols, weights=e.values, minlength=p.n))
    return PatternMatrix(p, 0.5 * (d[p.rows] + d[p.cols]) + e.values)


def frobenius_inner(a, b) -> float:
    """Trace inner product <A, B> = trace(A^T B).

    For two pattern matrices on the same pattern this equals
    2 * sum_{i<j} a_ij b_ij since every edge appears twice in the
    symmetric dense expansion.
    """
    if isinstance(a, WeightMatrix):
        a = a.as_pattern()
    if isinstance(b, WeightMatrix):
        b = b.as_pattern()
    if isinstance(a, PatternMatrix) and isinstance(b, PatternMatrix):
        if a.pattern is not b.pattern and a.pattern != b.pattern:
            raise ValueError("pattern mismatch")
        return 2.0 * float(a.values @ b.values)
    if isinstance(a, PatternMatrix) or isinstance(b, PatternMatrix):
        raise TypeError("mixed pattern/dense inner product; expand explicitly")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    return float(np.sum(a * b))


def pattern_norm(a: PatternMatrix) -> float:
    """Frobenius norm of the symmetric matrix held by a pattern matrix."""
    return float(np.sqrt(2.0) * np.linalg.norm(a.values))


# ---------------------------------------------------------------------------
# Graph file I/O: Matrix Market (symmetric coordinate) and JSON edge lists
# ---------------------------------------------------------------------------

def read_graph(path: str | Path) -> WeightMatrix:
    """Read a weight matrix from .mtx (Matrix Market) or .json edge list.

    The JSON schema is {"n": int, "edges": [[i, j, w], ...]} with 0-based
    vertex indices.  Format is chosen by file extension.
    """
    path = Path(path)
    try:
        if path.suffix == ".json":
            return _read_json(path)
        if path.suffix in (".mtx", ".mm"):
            return _read_mm(path)
        raise GraphParseError(f"unknown graph format: {path.suffix!r}")
    except GraphParseError:
        raise
    except Exception as exc:
        raise GraphParseError(f"cannot parse {path}: {exc}") from exc


def _read_json(path: Path) -> WeightMatrix:
    doc = json.loads(path.read_text())
    n = int(doc["n"])
    raw = doc["edges"]
    acc: dict[tuple[int, int], float] = {}
    for i, j, w in raw:
        i, j, w = int(i), int(j), float(w)
        if i == j:
            continue  # self-edges do not change the Laplacian
        key = (min(i, j), max(i, j))
        if key in acc and acc[key] != w:
            raise GraphParseError(f"conflicting weights for edge {key}")
        acc[key] = w
    pattern = SparsityPattern(n=n, edges=tuple(sorted(acc)))
    weights = np.array([acc[e] for e in pattern.edges])
    if np.any(weights < 0):
        raise GraphParseError("negative edge weight")
    return WeightMatrix(pattern, weights)


def _read_mm(path: Path) -> WeightMatrix:
    from scipy.io import mmread

    a = mmread(str(path)).toarray()
    if not np.allclose(a, a.T, atol=1e-12 * max(1.0, float(np.abs(a).max(initial=0.0)))):
        raise GraphParseError("matrix market file is not symmetric")
    if np.any(a[~np.eye(a.shape[0], dtype=bool)] < 0):
        raise GraphParseError("negative edge weight")
    return WeightMatrix.from_dense(a)


def write_graph(w: WeightMatrix, path: str | Path) -> None:
    """Write a weight matrix in the format selected by the file extension."""
    path = Path(path)
    if path.suffix == ".json":
        doc = {
            "n": w.pattern.n,
            "edges": [[int(i), int(j), float(v)] for (i, j), v in zip(w.pattern.edges, w.weights)],
        }
        path.write_text(json.dumps(doc, indent=1) + "\n")
    elif path.suffix in (".mtx", ".mm"):
        from scipy.io import mmwrite
        from scipy.sparse import coo_matrix

        p = w.pattern
        coo = coo_matrix((w.weights, (p.cols, p.rows)), shape=(p.n, p.n))
        mmwrite(str(path), coo, symmetry="symmetric")
    else:
        raise ValueError(f"unknown graph format: {path.suffix!r}")
