"""Parameter containers and the forward pass.

Towers are stacks of linear hypergraph convolutions P <- A P W.  The mode
decides which towers run and which pair of user views feeds the
contrastive discriminator:

  HHGR     theta tower on the full hypergraph, no views
  S2       gamma tower on the coarse view + phi tower on the fine view,
           users = P' + P'', views (P', P'')
  HHGR-C   theta tower (full) + gamma tower (coarse), views (raw, coarse)
  HHGR-F   theta tower (full) + phi tower (fine), views (raw, fine)
  HHGR-wg  like HHGR but the group-level convolution is skipped
  HHGR-wu  no user-level towers; group reps start from the group-item
           matrix instead of attention over member embeddings

Group side (all modes but HHGR-wu): attention-aggregate member embeddings
into Z~, refine through the motif operator, score with Z~ + Z^(L_g) so
triangle-free groups fall back to the aggregator output.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import seeding
from .autodiff import Tensor, gather_rows, matmul_const, segment_softmax, segment_sum
from .errors import ContractError
from .hypergraph import (IncidenceMatrix, MotifAdjacency, PropagationOperator,
                         group_propagation_operator, propagation_operator)

MODES = ("HHGR", "S2", "HHGR-wu", "HHGR-wg", "HHGR-F", "HHGR-C")

# stable per-tensor init streams: (kind, layer) keys survive changes in
# tower depth, so e.g. L_g=0 and L_g=1 runs share every other tensor's init
_KIND = {"user_embed": 0, "item_embed": 1, "theta": 2, "gamma": 3,
         "phi": 4, "psi": 5, "w_agg": 6, "attn_vec": 7, "w_disc": 8}


@dataclass(eq=False)
class ModelParams:
    user_embed: Tensor          # P~, |U| x d
    item_embed: Tensor          # Q, |I| x d
    theta: list                 # L_u of d x d
    gamma: list
    phi: list
    psi: list                   # L_g of d x d
    w_agg: Tensor               # d x d
    attn_vec: Tensor            # d x 1
    w_disc: Tensor              # d x d

    def tensors(self):
        """Canonical (name, tensor) order; also the checkpoint layout."""
        out = [("user_embed", self.user_embed), ("item_embed", self.item_embed)]
        for name, tower in (("theta", self.theta), ("gamma", self.gamma),
                            ("phi", self.phi), ("psi", self.psi)):
            out.extend((f"{name}_{l}", t) for l, t in enumerate(tower))
        out.extend([("w_agg", self.w_agg), ("attn_vec", self.attn_vec),
                    ("w_disc", self.w_disc)])
        return out

    @property
    def d(self):
        return self.user_embed.shape[1]

    def copy(self):
        def dup(t):
            return Tensor(t.data.copy(), name=t.name)
        return ModelParams(
            user_embed=dup(self.user_embed), item_embed=dup(self.item_embed),
            theta=[dup(t) for t in self.theta], gamma=[dup(t) for t in self.gamma],
            phi=[dup(t) for t in self.phi], psi=[dup(t) for t in self.psi],
            w_agg=dup(self.w_agg), attn_vec=dup(self.attn_vec),
            w_disc=dup(self.w_disc))

    def all_finite(self):
        return all(np.all(np.isfinite(t.data)) for _, t in self.tensors())


def init_params(num_users, num_items, d, l_u, l_g, seed):
    """uniform(-1/sqrt(d), 1/sqrt(d)) init, one RNG substream per tensor."""
    scale = 1.0 / np.sqrt(d)

    def make(kind, layer, shape, name):
        rng = seeding.derive_rng(seed, seeding.INIT, _KIND[kind], layer)
        return Tensor(rng.uniform(-scale, scale, size=shape), name=name)

    return ModelParams(
        user_embed=make("user_embed", 0, (num_users, d), "user_embed"),
        item_embed=make("item_embed", 0, (num_items, d), "item_embed"),
        theta=[make("theta", l, (d, d), f"theta_{l}") for l in range(l_u)],
        gamma=[make("gamma", l, (d, d), f"gamma_{l}") for l in range(l_u)],
        phi=[make("phi", l, (d, d), f"phi_{l}") for l in range(l_u)],
        psi=[make("psi", l, (d, d), f"psi_{l}") for l in range(l_g)],
        w_agg=make("w_agg", 0, (d, d), "w_agg"),
        attn_vec=make("attn_vec", 0, (d, 1), "attn_vec"),
        w_disc=make("w_disc", 0, (d, d), "w_disc"))


@dataclass(eq=False)
class GraphOps:
    """Fixed graph-side operands of one forward pass."""

    a_full: object              # user-level operator on the full hypergraph
    a_group: np.ndarray         # motif operator D_gl^-1 T
    member_groups: np.ndarray   # flattened membership, segment ids
    member_users: np.ndarray
    num_groups: int
    a_coarse: object = None     # operators on the dropped views
    a_fine: object = None
    s_init: object = None       # row-normalized group-item matrix (HHGR-wu)


def membership_arrays(membership):
    """Flatten {group: members} to parallel (group_ids, user_ids) arrays."""
    groups, users = [], []
    for g in sorted(membership):
        m = np.asarray(membership[g], dtype=np.int64)
        groups.append(np.full(m.size, g, dtype=np.int64))
        users.append(m)
    if not groups:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(groups), np.concatenate(users)


def row_normalized(mat):
    mat = sparse.csr_matrix(mat, dtype=np.float64)
    rows = np.asarray(mat.sum(axis=1)).ravel()
    inv = np.divide(1.0, rows, out=np.zeros_like(rows), where=rows > 0)
    return sparse.diags(inv) @ mat


def build_graph_ops(ds, h_ul=None, h_coarse=None, h_fine=None):
    """Assemble forward operands from a training InteractionDataset."""
    from .hypergraph import build_user_level, motif_adjacency, project_groups
    if h_ul is None:
        h_ul = build_user_level(ds.membership, ds.num_users)
    motif = motif_adjacency(project_groups(h_ul))
    groups, users = membership_arrays(ds.membership)
    return GraphOps(
        a_full=propagation_operator(h_ul).matrix,
        a_group=group_propagation_operator(motif),
        member_groups=groups, member_users=users, num_groups=ds.num_groups,
        a_coarse=None if h_coarse is None else propagation_operator(h_coarse).matrix,
        a_fine=None if h_fine is None else propagation_operator(h_fine).matrix,
        s_init=row_normalized(ds.group_item).toarray())


@dataclass(eq=False)
class ForwardState:
    users: Tensor               # final user representations P
    groups: Tensor              # final group representations for scoring
    z_agg: Tensor = None        # attention aggregate Z~
    alpha: Tensor = None        # attention weights, one row per membership
    view_a: Tensor = None       # first contrastive view (coarse / raw)
    view_b: Tensor = None       # second contrastive view (fine / dropped)
    user_layers: dict = field(default_factory=dict)   # tower name -> [P^(0..L)]
    group_layers: list = field(default_factory=list)  # [Z^(0..L_g)]


def _as_tensor(x, name=""):
    return x if isinstance(x, Tensor) else Tensor(x, name=name)


def user_conv_layer(a, p_in, theta_l):
    """One linear convolution A . P . Theta (no activation)."""
    if isinstance(a, IncidenceMatrix):
        raise ContractError("pass a propagation operator, not an incidence matrix")
    if isinstance(a, PropagationOperator):
        a = a.matrix
    p_in = _as_tensor(p_in)
    theta_l = _as_tensor(theta_l)
    if a.shape[1] != p_in.shape[0] or p_in.shape[1] != theta_l.shape[0]:
        raise ContractError(f"shape mismatch: {a.shape} x {p_in.shape} x {theta_l.shape}")
    return matmul_const(a, p_in) @ theta_l


group_conv_layer = user_conv_layer  # same linear form, group-level operands


def attention_aggregate(p, membership, w_agg, attn_vec):
    """Softmax-weighted sum of member embeddings per group (Z~, alpha).

    `membership` is either a {group: members} dict or precomputed
    (group_ids, user_ids, num_groups) arrays.
    """
    if isinstance(membership, dict):
        groups, users = membership_arrays(membership)
        num_groups = len(membership)
    else:
        groups, users, num_groups = membership
    p = _as_tensor(p)
    w_agg = _as_tensor(w_agg)
    attn_vec = _as_tensor(attn_vec)
    pm = gather_rows(p, users)
    logits = (pm @ w_agg) @ attn_vec
    alpha = segment_softmax(logits, groups, num_groups)
    z = segment_sum(alpha * pm, groups, num_groups)
    return z, alpha


def forward(params, ops, mode):
    """Run the towers selected by `mode`; see the module docstring."""
    if mode not in MODES:
        raise ContractError(f"unknown mode {mode!r}")
    towers = {}

    def run(a, weights, label):
        if a is None:
            raise ContractError(f"mode {mode} needs a {label} view operator")
        p = params.user_embed
        layers = [p]
        for w in weights:
            p = user_conv_layer(a, p, w)
            layers.append(p)
        towers[label] = layers
        return p

    view_a = view_b = None
    if mode == "S2":
        p_coarse = run(ops.a_coarse, params.gamma, "coarse")
        p_fine = run(ops.a_fine, params.phi, "fine")
        users = p_coarse + p_fine
        view_a, view_b = p_coarse, p_fine
    elif mode == "HHGR-C":
        p_raw = run(ops.a_full, params.theta, "raw")
        p_coarse = run(ops.a_coarse, params.gamma, "coarse")
        users = p_raw + p_coarse
        view_a, view_b = p_raw, p_coarse
    elif mode == "HHGR-F":
        p_raw = run(ops.a_full, params.theta, "raw")
        p_fine = run(ops.a_fine, params.phi, "fine")
        users = p_raw + p_fine
        view_a, view_b = p_raw, p_fine
    elif mode == "HHGR-wu":
        users = params.user_embed   # no user-level convolution
    else:                           # HHGR, HHGR-wg
        users = run(ops.a_full, params.theta, "raw")

    z_agg = alpha = None
    if mode == "HHGR-wu":
        z0 = matmul_const(ops.s_init, params.item_embed)
    else:
        z_agg, alpha = attention_aggregate(
            users, (ops.member_groups, ops.member_users, ops.num_groups),
            params.w_agg, params.attn_vec)
        z0 = z_agg

    group_layers = [z0]
    if mode != "HHGR-wg" and params.psi:
        z = z0
        for w in params.psi:
            z = group_conv_layer(ops.a_group, z, w)
            group_layers.append(z)
        groups = z0 + z
    else:
        groups = z0

    return ForwardState(users=users, groups=groups, z_agg=z_agg, alpha=alpha,
                        view_a=view_a, view_b=view_b,
                        user_layers=towers, group_layers=group_layers)


def forward_ssl(params, h_ul, h_c, h_f, membership, motif, mode,
                group_item=None):
    """Forward pass from raw structures (operators are built internally).

    `motif` is a MotifAdjacency; `group_item` is only needed for HHGR-wu.
    At inference time pass h_c = h_f = h_ul (zero-rate views).
    """
    if not isinstance(motif, MotifAdjacency):
        raise ContractError("motif must be a MotifAdjacency")
    groups, users = membership_arrays(membership)
    ops = GraphOps(
        a_full=propagation_operator(h_ul).matrix,
        a_group=group_propagation_operator(motif),
        member_groups=groups, member_users=users, num_groups=len(membership),
        a_coarse=None if h_c is None else propagation_operator(h_c).matrix,
        a_fine=None if h_f is None else propagation_operator(h_f).matrix,
        s_init=None if group_item is None else row_normalized(group_item).toarray())
    return forward(params, ops, mode)


def score_user_item(p_u, q_i):
    """sigma(p . q) for one user/item pair of plain vectors."""
    from scipy.special import expit
    return float(expit(np.dot(np.asarray(p_u, float).ravel(),
                              np.asarray(q_i, float).ravel())))


score_group_item = score_user_item  # same bilinear head, group operand
