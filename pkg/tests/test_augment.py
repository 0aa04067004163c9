"""Coarse and fine node-dropout semantics."""

import numpy as np
import pytest

from hhgr.augment import coarse_drop, fine_drop
from hhgr.errors import ContractError
from hhgr.hypergraph import build_user_level, degrees, propagation_operator

MEMBERSHIP = {0: [0, 1, 2], 1: [1, 3], 2: [0, 2, 4], 3: [3, 4]}
H = build_user_level(MEMBERSHIP, 5)


def test_rate_zero_is_identity():
    for fn in (coarse_drop, fine_drop):
        out, mask = fn(H, 0.0, seed=1)
        assert (out.matrix != H.matrix).nnz == 0


def test_rate_one_rejected():
    for fn in (coarse_drop, fine_drop):
        with pytest.raises(ContractError):
            fn(H, 1.0, seed=1)


def test_determinism():
    for fn in (coarse_drop, fine_drop):
        a, _ = fn(H, 0.4, seed=11)
        b, _ = fn(H, 0.4, seed=11)
        assert (a.matrix != b.matrix).nnz == 0


def test_coarse_rows_all_or_nothing():
    orig = H.toarray()
    for seed in range(200):
        out, mask = coarse_drop(H, 0.5, seed=seed)
        arr = out.toarray()
        for v in range(H.num_vertices):
            assert (arr[v] == orig[v]).all() or not arr[v].any()
            assert (arr[v] == orig[v] * mask.keep[v]).all()


def test_coarse_dropped_vertex_leaves_every_group():
    # find a draw that drops vertex 1 (member of groups 0 and 1)
    for seed in range(100):
        out, mask = coarse_drop(H, 0.5, seed=seed)
        if mask.keep[1] == 0:
            arr = out.toarray()
            assert not arr[1].any()
            assert arr[:, 0].sum() == 2 - (mask.keep[0] == 0) - (mask.keep[2] == 0)
            return
    raise AssertionError("no draw dropped vertex 1 in 100 seeds")


def test_fine_drop_is_local_to_one_column():
    # vertex 1 sits in groups {0, 1}; find a draw dropping exactly one of them
    for seed in range(200):
        out, _ = fine_drop(H, 0.5, seed=seed)
        arr = out.toarray()
        if arr[1, 0] == 0 and arr[1, 1] == 1:
            return
    raise AssertionError("never saw a one-sided drop for vertex 1")


def test_fine_mask_matches_output():
    out, mask = fine_drop(H, 0.4, seed=3)
    assert (out.matrix != H.matrix.multiply(mask.keep)).nnz == 0


def test_nnz_never_grows():
    for fn, rate in ((coarse_drop, 0.3), (fine_drop, 0.3)):
        for seed in range(50):
            out, _ = fn(H, rate, seed=seed)
            assert out.nnz <= H.nnz


def test_empirical_rates():
    rng = np.random.default_rng(0)
    coarse_dropped = []
    fine_dropped = []
    for _ in range(400):
        _, m = coarse_drop(H, 0.2, seed=rng)
        coarse_dropped.append(1.0 - m.keep.mean())
        _, m = fine_drop(H, 0.3, seed=rng)
        fine_dropped.append(1.0 - m.keep.data.mean())
    # 3 sigma of the per-position Bernoulli means
    sig_c = np.sqrt(0.2 * 0.8 / (400 * H.num_vertices))
    sig_f = np.sqrt(0.3 * 0.7 / (400 * H.nnz))
    assert abs(np.mean(coarse_dropped) - 0.2) < 3 * sig_c
    assert abs(np.mean(fine_dropped) - 0.3) < 3 * sig_f


def test_fine_columns_uncorrelated():
    # vertex 1's drop indicator in group 0 vs group 1 across draws
    rng = np.random.default_rng(1)
    a, b = [], []
    for _ in range(4000):
        _, m = fine_drop(H, 0.3, seed=rng)
        a.append(m.keep[1, 0])
        b.append(m.keep[1, 1])
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 0.05


def test_emptied_column_keeps_zero_degree_semantics():
    h = build_user_level({0: [0], 1: [0, 1]}, 2)
    # drop vertex 0 everywhere: column 0 becomes empty but is retained
    for seed in range(100):
        out, mask = coarse_drop(h, 0.6, seed=seed)
        if mask.keep[0] == 0:
            assert out.num_edges == 2
            assert degrees(out).edge_degrees[0] == 0
            a = np.asarray(propagation_operator(out).matrix)
            assert np.all(np.isfinite(a))
            assert not a[0].any()
            return
    raise AssertionError("vertex 0 never dropped")
