"""Forward-pass semantics: convolutions, attention, modes, score heads."""

import numpy as np
import pytest

from hhgr.autodiff import Tensor
from hhgr.datasets import generate_synthetic
from hhgr.errors import ContractError
from hhgr.hypergraph import (build_user_level, motif_adjacency, project_groups,
                             propagation_operator)
from hhgr.model import (MODES, attention_aggregate, build_graph_ops, forward,
                        forward_ssl, init_params, score_group_item,
                        score_user_item, user_conv_layer)

RNG = np.random.default_rng(42)


def tiny_setup(mode="S2", d=4, seed=0, l_u=2, l_g=1):
    ds = generate_synthetic(8, 10, 3, (2, 3), 0.5, seed=5)
    h = build_user_level(ds.membership, ds.num_users)
    ops = build_graph_ops(ds, h_ul=h, h_coarse=h, h_fine=h)
    params = init_params(8, 10, d, l_u, l_g, seed=seed)
    return ds, ops, params


def test_conv_identity():
    p = RNG.normal(size=(4, 3))
    out = user_conv_layer(np.eye(4), p, np.eye(3))
    assert np.allclose(out.data, p)


def test_conv_single_hyperedge_averages():
    h = build_user_level({0: list(range(4))}, 4)
    a = propagation_operator(h)
    p = RNG.normal(size=(4, 3))
    out = user_conv_layer(a, p, np.eye(3))
    assert np.allclose(out.data, np.tile(p.mean(axis=0), (4, 1)))


def test_conv_example_row_mixes():
    h = build_user_level({0: [0, 1], 1: [1, 2]}, 3)
    out = user_conv_layer(propagation_operator(h), np.eye(3), np.eye(3))
    assert np.allclose(out.data[1], [0.25, 0.5, 0.25])


def test_conv_is_linear():
    h = build_user_level({0: [0, 1], 1: [1, 2]}, 3)
    a = propagation_operator(h)
    p = RNG.normal(size=(3, 3))
    th = RNG.normal(size=(3, 3))
    assert np.allclose(user_conv_layer(a, 3.0 * p, th).data,
                       3.0 * user_conv_layer(a, p, th).data)


def test_conv_shape_mismatch():
    with pytest.raises(ContractError):
        user_conv_layer(np.eye(4), RNG.normal(size=(3, 2)), np.eye(2))


def test_attention_identical_members_uniform():
    p = np.tile(RNG.normal(size=(1, 4)), (3, 1))
    z, alpha = attention_aggregate(p, {0: [0, 1, 2]},
                                   RNG.normal(size=(4, 4)),
                                   RNG.normal(size=(4, 1)))
    assert np.allclose(alpha.data, 1 / 3)
    assert np.allclose(z.data[0], p[0])


def test_attention_singleton_group():
    p = RNG.normal(size=(2, 4))
    z, alpha = attention_aggregate(p, {0: [1]}, np.eye(4), np.ones((4, 1)))
    assert np.allclose(alpha.data, 1.0)
    assert np.allclose(z.data[0], p[1])


def test_attention_hand_softmax():
    # logits (ln 3, 0) -> weights (0.75, 0.25)
    p = np.array([[np.log(3.0)], [0.0]])
    z, alpha = attention_aggregate(p, {0: [0, 1]}, np.eye(1), np.ones((1, 1)))
    assert np.allclose(alpha.data.ravel(), [0.75, 0.25])
    assert np.allclose(z.data[0], 0.75 * np.log(3.0))


def test_attention_shift_invariant():
    p = RNG.normal(size=(4, 3))
    w = RNG.normal(size=(3, 3))
    x = RNG.normal(size=(3, 1))
    _, alpha = attention_aggregate(p, {0: [0, 1, 2, 3]}, w, x)
    wx = (w @ x).ravel()
    shift = p + 7.0 * wx / (wx @ wx)   # adds a constant to every logit
    _, alpha2 = attention_aggregate(shift, {0: [0, 1, 2, 3]}, w, x)
    assert np.allclose(alpha.data, alpha2.data, atol=1e-8)


def test_attention_weights_sum_to_one_per_group():
    ds, ops, params = tiny_setup()
    state = forward(params, ops, "S2")
    sums = np.zeros(ops.num_groups)
    np.add.at(sums, ops.member_groups, state.alpha.data.ravel())
    assert np.allclose(sums, 1.0, atol=1e-6)
    assert np.all(state.alpha.data > 0)


def test_s2_combines_branches():
    ds, ops, params = tiny_setup()
    state = forward(params, ops, "S2")
    assert np.allclose(state.users.data,
                       state.view_a.data + state.view_b.data)


def test_zero_rate_tied_weights_branches_equal():
    ds, ops, params = tiny_setup()
    for g, f in zip(params.gamma, params.phi):
        f.data = g.data.copy()
    state = forward(params, ops, "S2")   # ops built with full H in both views
    assert np.array_equal(state.view_a.data, state.view_b.data)
    assert np.allclose(state.users.data, 2.0 * state.view_a.data)


def test_hhgr_uses_theta_tower_only():
    ds, ops, params = tiny_setup(l_u=2)
    state = forward(params, ops, "HHGR")
    assert state.view_a is None and state.view_b is None
    p = params.user_embed.data
    for th in params.theta:
        p = np.asarray(ops.a_full) @ p @ th.data
    assert np.allclose(state.users.data, p)


def test_wg_skips_group_tower():
    ds, ops, params = tiny_setup()
    state = forward(params, ops, "HHGR-wg")
    assert np.array_equal(state.groups.data, state.z_agg.data)
    assert len(state.group_layers) == 1


def test_group_residual_combination():
    ds, ops, params = tiny_setup(l_g=1)
    state = forward(params, ops, "HHGR")
    z0 = state.z_agg.data
    z1 = np.asarray(ops.a_group) @ z0 @ params.psi[0].data
    assert np.allclose(state.groups.data, z0 + z1)


def test_wu_initializes_groups_from_interactions():
    ds, ops, params = tiny_setup()
    state = forward(params, ops, "HHGR-wu")
    assert state.z_agg is None
    z0 = ops.s_init @ params.item_embed.data
    z1 = np.asarray(ops.a_group) @ z0 @ params.psi[0].data
    assert np.allclose(state.groups.data, z0 + z1)
    assert np.array_equal(state.users.data, params.user_embed.data)


def test_missing_view_operator_errors():
    ds = generate_synthetic(8, 10, 3, (2, 3), 0.5, seed=5)
    ops = build_graph_ops(ds)   # no coarse/fine operators
    params = init_params(8, 10, 4, 2, 1, seed=0)
    with pytest.raises(ContractError, match="coarse"):
        forward(params, ops, "S2")


def test_unknown_mode_errors():
    ds, ops, params = tiny_setup()
    with pytest.raises(ContractError):
        forward(params, ops, "HHGR-xx")
    assert "HHGR-xx" not in MODES


def test_forward_ssl_wrapper_matches_forward():
    ds = generate_synthetic(8, 10, 3, (2, 3), 0.5, seed=5)
    h = build_user_level(ds.membership, ds.num_users)
    motif = motif_adjacency(project_groups(h))
    params = init_params(8, 10, 4, 2, 1, seed=0)
    state_a = forward_ssl(params, h, h, h, ds.membership, motif, "S2")
    ops = build_graph_ops(ds, h_ul=h, h_coarse=h, h_fine=h)
    state_b = forward(params, ops, "S2")
    assert np.allclose(state_a.users.data, state_b.users.data)
    assert np.allclose(state_a.groups.data, state_b.groups.data)


def test_forward_finite_with_extreme_scales():
    ds, ops, params = tiny_setup()
    for _, t in params.tensors():
        t.data *= 1e3
    for mode in MODES:
        state = forward(params, ops, mode)
        assert np.all(np.isfinite(state.users.data))
        assert np.all(np.isfinite(state.groups.data))


def test_score_heads():
    assert score_user_item([1, 0], [0, 1]) == pytest.approx(0.5)
    assert score_user_item([1, 0], [1, 0]) == pytest.approx(0.7310585786300049)
    assert score_user_item([1, 0], [-1, 0]) == pytest.approx(0.2689414213699951)
    assert score_group_item([2, 0], [1, 0]) > score_group_item([1, 0], [1, 0])


def test_init_is_deterministic_and_scaled():
    a = init_params(8, 10, 16, 2, 1, seed=3)
    b = init_params(8, 10, 16, 2, 1, seed=3)
    for (_, ta), (_, tb) in zip(a.tensors(), b.tensors()):
        assert np.array_equal(ta.data, tb.data)
    bound = 1 / np.sqrt(16)
    assert np.all(np.abs(a.user_embed.data) <= bound)


def test_init_substreams_stable_across_depths():
    # adding a group layer must not shift any other tensor's init
    a = init_params(8, 10, 4, 2, 0, seed=3)
    b = init_params(8, 10, 4, 2, 1, seed=3)
    assert np.array_equal(a.user_embed.data, b.user_embed.data)
    assert np.array_equal(a.theta[1].data, b.theta[1].data)
    assert np.array_equal(a.w_disc.data, b.w_disc.data)
