"""Independent oracles and utilities shared by the test modules.

Everything here deliberately avoids the library's own code paths: triangle
counting walks adjacency sets, metrics use Python's sort, gradients come
from central finite differences.
"""

import math

import numpy as np
from scipy import sparse

from hhgr.hypergraph import IncidenceMatrix


def triangle_counts_oracle(c):
    """T_ij = number of triangles containing edge (i, j), by enumeration."""
    c = np.asarray(c)
    n = c.shape[0]
    adj = [set(np.flatnonzero(c[i]).tolist()) for i in range(n)]
    t = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in adj[i]:
            if j <= i:
                continue
            for k in adj[i] & adj[j]:
                if k > j:
                    for a, b in ((i, j), (i, k), (j, k)):
                        t[a, b] += 1
                        t[b, a] += 1
    return t


def random_graph(rng, max_nodes=50, p_range=(0.1, 0.5)):
    """Symmetric binary adjacency with zero diagonal."""
    n = int(rng.integers(3, max_nodes + 1))
    p = rng.uniform(*p_range)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return (upper | upper.T).astype(np.int64)


def random_hypergraph(rng, max_vertices=50, max_edges=20):
    """Random incidence matrix; empty columns get one vertex added."""
    m = int(rng.integers(2, max_vertices + 1))
    n = int(rng.integers(1, max_edges + 1))
    h = (rng.random((m, n)) < rng.uniform(0.05, 0.4)).astype(float)
    for j in np.flatnonzero(h.sum(axis=0) == 0):
        h[rng.integers(m), j] = 1.0
    return IncidenceMatrix(sparse.csr_matrix(h))


def recall_oracle(scores, relevant, k, exclude=(), denominator="min"):
    banned = set(int(i) for i in exclude)
    order = sorted((i for i in range(len(scores)) if i not in banned),
                   key=lambda i: (-scores[i], i))
    rel = set(int(i) for i in relevant)
    hits = sum(1 for i in order[:k] if i in rel)
    denom = min(len(rel), k) if denominator == "min" else len(rel)
    return hits / denom


def ndcg_oracle(scores, relevant, k, exclude=()):
    banned = set(int(i) for i in exclude)
    order = sorted((i for i in range(len(scores)) if i not in banned),
                   key=lambda i: (-scores[i], i))
    rel = set(int(i) for i in relevant)
    dcg = sum(1.0 / math.log2(r + 2) for r, i in enumerate(order[:k]) if i in rel)
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(len(rel), k)))
    return dcg / idcg


def fd_gradcheck(loss_fn, named_tensors, h=1e-4, floor=1e-6):
    """Max relative error of reverse-mode vs central differences, per tensor.

    loss_fn() must rebuild the graph from the tensors' current .data and
    return the scalar loss Tensor.
    """
    loss = loss_fn()
    loss.backward()
    grads = {name: None if t.grad is None else t.grad.copy()
             for name, t in named_tensors}
    worst = {}
    for name, t in named_tensors:
        g = grads[name]
        if g is None:
            continue
        err = 0.0
        it = np.nditer(t.data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = t.data[idx]
            t.data[idx] = orig + h
            plus = float(loss_fn().data)
            t.data[idx] = orig - h
            minus = float(loss_fn().data)
            t.data[idx] = orig
            fd = (plus - minus) / (2.0 * h)
            err = max(err, abs(g[idx] - fd) / max(abs(g[idx]) + abs(fd), floor))
        worst[name] = err
    return worst


def overfit_split(ds):
    """SplitDataset with every group in train (for memorization checks)."""
    from hhgr.datasets import SplitDataset
    empty = np.empty(0, dtype=np.int64)
    return SplitDataset(train=ds, validation={}, test={}, split_seed=0,
                        train_groups=np.arange(ds.num_groups),
                        val_groups=empty, test_groups=empty, source=ds)


def train_positives(ds):
    """{group: item array} over the nonzero rows of the group-item matrix."""
    s = ds.group_item.toarray()
    return {g: np.flatnonzero(s[g]) for g in range(ds.num_groups) if s[g].any()}


def planted_assortative(num_users, num_items, num_groups, num_clusters,
                        size_range, p_ui, p_gi, noise, seed):
    """Planted instance where co-membership carries preference signal.

    Users, groups, and item blocks are assigned to clusters round-robin;
    each group draws its members from its own cluster's users, and every
    interaction row fires on the cluster's item block (plus uniform noise).
    Unlike generate_synthetic, whose memberships are uniform, members of a
    group here actually share tastes, so the hypergraph prior is informative.
    """
    from hhgr import seeding
    from hhgr.datasets import InteractionDataset

    rng = seeding.derive_rng(seed, seeding.SYNTH)
    item_blocks = np.array_split(np.arange(num_items), num_clusters)
    user_cluster = np.arange(num_users) % num_clusters
    group_cluster = np.arange(num_groups) % num_clusters

    def planted_row(block, p_in, p_out):
        row = np.zeros(num_items)
        hits = block[rng.random(block.size) < p_in]
        if hits.size == 0:
            hits = block[[rng.integers(block.size)]]
        row[hits] = 1.0
        out = rng.random(num_items) < p_out
        out[block] = False
        row[out] = 1.0
        return row

    ui = np.zeros((num_users, num_items))
    for u in range(num_users):
        ui[u] = planted_row(item_blocks[user_cluster[u]], p_ui, noise)
    gi = np.zeros((num_groups, num_items))
    membership = {}
    lo, hi = size_range
    for g in range(num_groups):
        pool = np.flatnonzero(user_cluster == group_cluster[g])
        size = min(int(rng.integers(lo, hi + 1)), pool.size)
        membership[g] = np.sort(rng.choice(pool, size=size, replace=False))
        gi[g] = planted_row(item_blocks[group_cluster[g]], p_gi, noise)
    return InteractionDataset(
        num_users=num_users, num_items=num_items, num_groups=num_groups,
        user_item=sparse.csr_matrix(ui), group_item=sparse.csr_matrix(gi),
        membership=membership).validate()
