"""Sparse incidence-matrix algebra.

Builds the user-level hypergraph from group membership, its normalized
propagation operator D^-1 H B^-1 H^T, the clique projection of hyperedges,
and the triangle-motif adjacency (C C) o C used at the group level.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ContractError

# densify operators up to this many entries; beyond that stay sparse
DENSE_THRESHOLD = 4_000_000


class IncidenceMatrix:
    """Binary vertex x hyperedge matrix H.

    Hyperedge columns must be nonempty at construction time; dropout
    views pass allow_empty_edges=True because a mask can empty a column
    (the edge is kept, its degree goes to zero).
    """

    def __init__(self, matrix, allow_empty_edges=False):
        m = sparse.csr_matrix(matrix, dtype=np.float64)
        m.sum_duplicates()
        m.eliminate_zeros()
        if m.nnz and not np.all(m.data == 1.0):
            raise ContractError("incidence entries must be 0/1 with no duplicates")
        m.sort_indices()
        if not allow_empty_edges:
            empty = np.flatnonzero(m.getnnz(axis=0) == 0)
            if empty.size:
                raise ContractError(f"hyperedge {empty[0]} is empty")
        self.matrix = m

    @property
    def num_vertices(self):
        return self.matrix.shape[0]

    @property
    def num_edges(self):
        return self.matrix.shape[1]

    @property
    def nnz(self):
        return self.matrix.nnz

    def toarray(self):
        return self.matrix.toarray()

    def __repr__(self):
        return (f"IncidenceMatrix({self.num_vertices} vertices, "
                f"{self.num_edges} hyperedges, {self.nnz} incidences)")


@dataclass(frozen=True)
class DegreeVectors:
    vertex_degrees: np.ndarray  # d_v, length M
    edge_degrees: np.ndarray    # b_eps, length N


@dataclass(frozen=True)
class PropagationOperator:
    """A = D^-1 H B^-1 H^T with zero rows for isolated vertices."""

    matrix: object              # dense ndarray or csr, M x M
    isolated: np.ndarray        # vertex ids with d_v = 0

    @property
    def num_vertices(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class MotifAdjacency:
    """T = (C C) o C; T_ij counts triangles through edge (i, j)."""

    matrix: np.ndarray          # |G| x |G| int64
    degrees: np.ndarray         # row sums of T


def build_user_level(membership, num_users):
    """Incidence matrix of the user-level hypergraph: column g = group g."""
    num_groups = len(membership)
    if set(membership) != set(range(num_groups)):
        raise ContractError("membership keys must be exactly 0..num_groups-1")
    rows, cols = [], []
    for g in range(num_groups):
        members = np.asarray(membership[g], dtype=np.int64)
        if members.size == 0:
            raise ContractError(f"group {g} is empty")
        if members.min() < 0 or members.max() >= num_users:
            raise ContractError(f"group {g} has a member outside 0..{num_users - 1}")
        rows.append(members)
        cols.append(np.full(members.size, g, dtype=np.int64))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    h = sparse.coo_matrix((np.ones(rows.size), (rows, cols)),
                          shape=(num_users, num_groups))
    return IncidenceMatrix(h)


def degrees(h):
    """Vertex and hyperedge degree vectors (unit hyperedge weights)."""
    m = h.matrix
    return DegreeVectors(
        vertex_degrees=m.getnnz(axis=1).astype(np.int64),
        edge_degrees=m.getnnz(axis=0).astype(np.int64),
    )


def propagation_operator(h, dense_threshold=DENSE_THRESHOLD):
    """Row-stochastic two-hop walk D^-1 H B^-1 H^T.

    Vertices with no incident hyperedge (and hyperedges emptied by
    dropout) contribute zero rows/columns instead of dividing by zero.
    """
    deg = degrees(h)
    d = deg.vertex_degrees.astype(np.float64)
    b = deg.edge_degrees.astype(np.float64)
    dinv = np.divide(1.0, d, out=np.zeros_like(d), where=d > 0)
    binv = np.divide(1.0, b, out=np.zeros_like(b), where=b > 0)
    m = h.matrix
    a = sparse.diags(dinv) @ m @ sparse.diags(binv) @ m.T
    a = sparse.csr_matrix(a)
    if a.shape[0] * a.shape[1] <= dense_threshold:
        a = a.toarray()
    return PropagationOperator(matrix=a, isolated=np.flatnonzero(d == 0))


def project_groups(h_ul):
    """Clique projection C: groups adjacent iff they share a member."""
    overlap = (h_ul.matrix.T @ h_ul.matrix).toarray()
    c = (overlap > 0).astype(np.int64)
    np.fill_diagonal(c, 0)
    return c


def motif_adjacency(c):
    """Triangle counts per edge: T = (C C) o C."""
    c = np.asarray(c)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ContractError(f"adjacency must be square, got {c.shape}")
    if not np.array_equal(c, c.T):
        raise ContractError("adjacency must be symmetric")
    if np.any(np.diagonal(c) != 0):
        raise ContractError("adjacency diagonal must be zero")
    if not np.isin(c, (0, 1)).all():
        raise ContractError("adjacency must be binary")
    c = c.astype(np.int64)
    t = (c @ c) * c
    return MotifAdjacency(matrix=t, degrees=t.sum(axis=1))


def group_propagation_operator(t):
    """Row-normalized motif adjacency; triangle-free groups get zero rows."""
    d = t.degrees.astype(np.float64)
    dinv = np.divide(1.0, d, out=np.zeros_like(d), where=d > 0)
    return dinv[:, None] * t.matrix.astype(np.float64)
