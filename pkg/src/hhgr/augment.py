"""Double-scale node dropout on the user-level hypergraph.

Coarse: one Bernoulli keep/drop decision per vertex, applied to every
hyperedge at once.  Fine: an independent decision per (vertex, hyperedge)
incidence, so a user can vanish from one group while staying in another.
Emptied hyperedges are retained with degree zero rather than deleted.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import seeding
from .errors import ContractError
from .hypergraph import IncidenceMatrix


@dataclass(frozen=True)
class DropoutMask:
    kind: str                   # "coarse" or "fine"
    drop_rate: float
    keep: object                # coarse: (M,) 0/1 vector; fine: csr on H's pattern


def _check_rate(rate):
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"drop rate must be in [0, 1), got {rate}")


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return seeding.derive_rng(seed, seeding.MASK)


def coarse_drop(h_ul, rate, seed):
    """Drop whole vertices: a dropped user leaves all its hyperedges."""
    _check_rate(rate)
    rng = _rng(seed)
    keep = (rng.random(h_ul.num_vertices) >= rate).astype(np.float64)
    dropped = sparse.diags(keep) @ h_ul.matrix
    mask = DropoutMask(kind="coarse", drop_rate=float(rate), keep=keep)
    return IncidenceMatrix(dropped, allow_empty_edges=True), mask


def fine_drop(h_ul, rate, seed):
    """Drop single incidences: the mask vector is redrawn per hyperedge."""
    _check_rate(rate)
    rng = _rng(seed)
    m = h_ul.matrix
    keep_data = (rng.random(m.nnz) >= rate).astype(np.float64)
    keep = sparse.csr_matrix((keep_data, m.indices.copy(), m.indptr.copy()),
                             shape=m.shape)
    dropped = sparse.csr_matrix((m.data * keep_data, m.indices.copy(),
                                 m.indptr.copy()), shape=m.shape)
    mask = DropoutMask(kind="fine", drop_rate=float(rate), keep=keep)
    return IncidenceMatrix(dropped, allow_empty_edges=True), mask
