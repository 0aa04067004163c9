"""Losses, optimizer, and the two-stage training schedule.

Stage 1 (S2 / HHGR-F / HHGR-C only) minimizes the contrastive loss alone
at the pretraining rate; stage 2 minimizes beta*L_UU + L_UI + L_GI at the
main rate.  Dropout views are redrawn every epoch; per-epoch logs carry
the loss breakdown and validation metrics.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .augment import coarse_drop, fine_drop
from .datasets import sample_triples, triples_to_arrays
from .errors import ContractError, DivergenceError, SamplingError
from .hypergraph import build_user_level, propagation_operator
from .model import build_graph_ops, forward, init_params
from .autodiff import gather_rows

SSL_MODES = ("S2", "HHGR-F", "HHGR-C")


@dataclass(frozen=True)
class LossBreakdown:
    l_ui: float
    l_gi: float
    l_uu: float
    beta: float
    total: float

    @classmethod
    def combine(cls, l_ui, l_gi, l_uu, beta):
        l_ui, l_gi, l_uu, beta = map(float, (l_ui, l_gi, l_uu, beta))
        return cls(l_ui=l_ui, l_gi=l_gi, l_uu=l_uu, beta=beta,
                   total=beta * l_uu + l_ui + l_gi)


def pairwise_loss(subject_emb, item_emb, subjects, pos_items, neg_items):
    """Sum over (s, i, j) of (sigma(p.q_i) - sigma(p.q_j) - 1)^2.

    Each positive expands into one term per sampled negative.
    """
    n = neg_items.shape[1]
    su = np.repeat(subjects, n)
    p = gather_rows(subject_emb, su)
    q_i = gather_rows(item_emb, np.repeat(pos_items, n))
    q_j = gather_rows(item_emb, neg_items.ravel())
    r_i = (p * q_i).sum(axis=1, keepdims=True).sigmoid()
    r_j = (p * q_j).sum(axis=1, keepdims=True).sigmoid()
    return (r_i - r_j - 1.0).square().sum()


def bilinear_logits(rows_a, rows_b, w_disc):
    """Per-row p_a W p_b^T; the discriminator is sigmoid of this."""
    return ((rows_a @ w_disc) * rows_b).sum(axis=1, keepdims=True)


def discriminator(p_a, p_b, w_disc):
    """sigma(p_a W p_b^T) for a single pair of plain vectors."""
    from scipy.special import expit
    a = np.asarray(p_a, float).ravel()
    b = np.asarray(p_b, float).ravel()
    return float(expit(a @ np.asarray(w_disc.data if hasattr(w_disc, "data")
                                      else w_disc, float) @ b))


def contrastive_loss(pos_logits, neg_logits):
    """-sum log sigma(pos) - sum log(1 - sigma(neg)) over logit tensors."""
    return -(pos_logits.logsigmoid().sum() + (-neg_logits).logsigmoid().sum())


def sample_batch_negatives(batch, n_neg, rng):
    """For each anchor, n_neg distinct other indices from the same batch."""
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size <= n_neg:
        raise SamplingError(
            f"batch of {batch.size} cannot supply {n_neg} distinct negatives")
    negs = np.empty((batch.size, n_neg), dtype=np.int64)
    for k in range(batch.size):
        pool = np.delete(batch, k)
        negs[k] = pool[rng.permutation(pool.size)[:n_neg]]
    return negs


def loss_uu(view_a, view_b, w_disc, n_neg, rng, batch=None):
    """Contrastive loss over user views.

    Positives pair the same user's two views; negatives pair view_a of a
    sampled other user j with view_b of the anchor (Eq-style (p'_j, p''_i)).
    """
    if view_a is None or view_b is None:
        raise ContractError("contrastive loss needs both user views")
    if batch is None:
        batch = np.arange(view_a.shape[0])
    batch = np.asarray(batch, dtype=np.int64)
    negs = sample_batch_negatives(batch, n_neg, rng)
    pa = gather_rows(view_a, batch)
    pb = gather_rows(view_b, batch)
    pos = bilinear_logits(pa, pb, w_disc)
    na = gather_rows(view_a, negs.ravel())
    nb = gather_rows(view_b, np.repeat(batch, n_neg))
    neg = bilinear_logits(na, nb, w_disc)
    return contrastive_loss(pos, neg)


@dataclass(eq=False)
class StepBatch:
    """Index arrays consumed by one optimization step."""

    user_subjects: np.ndarray = None
    user_pos: np.ndarray = None
    user_neg: np.ndarray = None          # (B, n)
    group_subjects: np.ndarray = None
    group_pos: np.ndarray = None
    group_neg: np.ndarray = None
    uu_batch: np.ndarray = None          # user ids entering L_UU
    uu_neg: np.ndarray = None            # (K, n) batch positions... user ids


def total_loss(params, ops, mode, batch, beta):
    """Joint objective beta*L_UU + L_UI + L_GI for one step.

    Missing components contribute exactly zero.  Returns the scalar graph
    node and the float breakdown (total recomputed from the parts, so the
    decomposition identity holds to the last bit).
    """
    state = forward(params, ops, mode)
    parts = []
    l_ui = l_gi = l_uu = 0.0
    if batch.user_subjects is not None and batch.user_subjects.size:
        t = pairwise_loss(state.users, params.item_embed, batch.user_subjects,
                          batch.user_pos, batch.user_neg)
        parts.append(t)
        l_ui = float(t.data)
    if batch.group_subjects is not None and batch.group_subjects.size:
        t = pairwise_loss(state.groups, params.item_embed, batch.group_subjects,
                          batch.group_pos, batch.group_neg)
        parts.append(t)
        l_gi = float(t.data)
    if beta != 0.0 and batch.uu_batch is not None and batch.uu_batch.size:
        pa = gather_rows(state.view_a, batch.uu_batch)
        pb = gather_rows(state.view_b, batch.uu_batch)
        na = gather_rows(state.view_a, batch.uu_neg.ravel())
        nb = gather_rows(state.view_b, np.repeat(batch.uu_batch,
                                                 batch.uu_neg.shape[1]))
        t = contrastive_loss(bilinear_logits(pa, pb, params.w_disc),
                             bilinear_logits(na, nb, params.w_disc))
        parts.append(t * beta)
        l_uu = float(t.data)
    if not parts:
        raise ContractError("empty training step: no loss components")
    total = parts[0]
    for t in parts[1:]:
        total = total + t
    return total, LossBreakdown.combine(l_ui, l_gi, l_uu, beta)


@dataclass(eq=False)
class OptimizerState:
    """Adam accumulators (lazily allocated per parameter tensor)."""

    lr_pretrain: float
    lr_main: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params, lr):
    """Bias-corrected Adam update on every tensor that received a gradient."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, tensor in params.tensors():
        g = tensor.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in {name}",
                                  last_good=params)
        if name not in state.m:
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        tensor.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def _chunks(arr, size):
    """Split into batches of `size`; a short remainder joins the last batch."""
    n = len(arr)
    if n == 0:
        return []
    out = [arr[i:i + size] for i in range(0, n, size)]
    if len(out) > 1 and len(out[-1]) < size // 2:
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def _draw_views(h_ul, cfg, mode, stage, epoch):
    """Per-epoch dropout views for the SSL modes; None where unused."""
    h_c = h_f = None
    if mode in ("S2", "HHGR-C"):
        rng = seeding.derive_rng(cfg.seed, seeding.MASK, stage, epoch, 0)
        h_c, _ = coarse_drop(h_ul, cfg.coarse_rate, rng)
    if mode in ("S2", "HHGR-F"):
        rng = seeding.derive_rng(cfg.seed, seeding.MASK, stage, epoch, 1)
        h_f, _ = fine_drop(h_ul, cfg.fine_rate, rng)
    return h_c, h_f


def _epoch_ops(base_ops, h_ul, cfg, mode, stage, epoch):
    if mode not in SSL_MODES:
        return base_ops
    h_c, h_f = _draw_views(h_ul, cfg, mode, stage, epoch)
    ops = base_ops.__class__(**vars(base_ops))
    ops.a_coarse = None if h_c is None else propagation_operator(h_c).matrix
    ops.a_fine = None if h_f is None else propagation_operator(h_f).matrix
    return ops


def _uu_batches(num_users, cfg, stage, epoch):
    rng = seeding.derive_rng(cfg.seed, seeding.SHUFFLE, stage, epoch, 1)
    order = rng.permutation(num_users)
    batches = _chunks(order, cfg.batch_size)
    neg_rng = seeding.derive_rng(cfg.seed, seeding.SAMPLE, stage, epoch, 2)
    return [(b, sample_batch_negatives(b, cfg.n_neg, neg_rng)) for b in batches]


def _triple_batches(ds, kind, cfg, stage, epoch):
    rng = seeding.derive_rng(cfg.seed, seeding.SAMPLE, stage, epoch,
                             0 if kind == "user" else 1)
    subjects, pos, neg = triples_to_arrays(
        sample_triples(ds, kind, cfg.n_neg, rng))
    idx = _chunks(np.arange(subjects.size), cfg.batch_size)
    return [(subjects[i], pos[i], neg[i]) for i in idx]


def _check_finite(bd, params):
    if not np.isfinite(bd.total):
        raise DivergenceError(f"training loss diverged (total={bd.total})",
                              last_good=params)


def train(split, cfg, log_hook=None):
    """Run the configured schedule; returns (params, per-epoch records).

    Raises DivergenceError (carrying the last finite parameters) if the
    loss or any gradient goes non-finite.
    """
    mode = cfg.mode
    if mode not in ("HHGR", "S2", "HHGR-wu", "HHGR-wg", "HHGR-F", "HHGR-C"):
        raise ContractError(f"unknown mode {mode!r}")
    ds = split.train
    ssl = mode in SSL_MODES
    beta = cfg.beta if ssl else 0.0

    params = init_params(ds.num_users, ds.num_items, cfg.d, cfg.l_u, cfg.l_g,
                         cfg.seed)
    h_ul = build_user_level(ds.membership, ds.num_users)
    base_ops = build_graph_ops(ds, h_ul=h_ul)
    opt = OptimizerState(lr_pretrain=cfg.lr_pretrain, lr_main=cfg.lr_main)
    records = []

    def log(record):
        records.append(record)
        if log_hook is not None:
            log_hook(record)

    # stage 1: contrastive pretraining of the user views
    if ssl and cfg.epochs_pretrain > 0:
        for epoch in range(cfg.epochs_pretrain):
            t0 = time.perf_counter()
            ops = _epoch_ops(base_ops, h_ul, cfg, mode, 1, epoch)
            sums = np.zeros(3)
            for ub, un in _uu_batches(ds.num_users, cfg, 1, epoch):
                batch = StepBatch(uu_batch=ub, uu_neg=un)
                loss, bd = total_loss(params, ops, mode, batch, beta=1.0)
                _check_finite(bd, params)
                loss.backward()
                adam_step(opt, params, cfg.lr_pretrain)
                sums += (bd.l_ui, bd.l_gi, bd.l_uu)
            bd = LossBreakdown.combine(*sums, beta=1.0)
            log({"stage": 1, "epoch": epoch, "l_ui": bd.l_ui, "l_gi": bd.l_gi,
                 "l_uu": bd.l_uu, "beta": bd.beta, "total": bd.total,
                 "seconds": round(time.perf_counter() - t0, 4)})

    # stage 2: joint objective
    best = None
    best_metric = -np.inf
    bad_epochs = 0
    watch = cfg.patience > 0 and len(split.validation) > 0
    for epoch in range(cfg.epochs_main):
        t0 = time.perf_counter()
        ops = _epoch_ops(base_ops, h_ul, cfg, mode, 2, epoch)
        user_b = _triple_batches(ds, "user", cfg, 2, epoch)
        group_b = _triple_batches(ds, "group", cfg, 2, epoch)
        uu_b = _uu_batches(ds.num_users, cfg, 2, epoch) if ssl and beta != 0 else []
        sums = np.zeros(3)
        for k in range(max(len(user_b), len(group_b), len(uu_b))):
            batch = StepBatch()
            if k < len(user_b):
                batch.user_subjects, batch.user_pos, batch.user_neg = user_b[k]
            if k < len(group_b):
                batch.group_subjects, batch.group_pos, batch.group_neg = group_b[k]
            if k < len(uu_b):
                batch.uu_batch, batch.uu_neg = uu_b[k]
            loss, bd = total_loss(params, ops, mode, batch, beta=beta)
            _check_finite(bd, params)
            loss.backward()
            adam_step(opt, params, cfg.lr_main)
            sums += (bd.l_ui, bd.l_gi, bd.l_uu)
        bd = LossBreakdown.combine(*sums, beta=beta)
        record = {"stage": 2, "epoch": epoch, "l_ui": bd.l_ui, "l_gi": bd.l_gi,
                  "l_uu": bd.l_uu, "beta": bd.beta, "total": bd.total,
                  "seconds": round(time.perf_counter() - t0, 4)}
        if watch:
            from .evaluation import holdout_metrics
            report = holdout_metrics(params, split, split.validation,
                                     ks=(cfg.ks[0],), mode=mode,
                                     recall_denominator=cfg.recall_denominator,
                                     ops=base_ops)
            metric = report.ndcg[cfg.ks[0]]
            record["val_ndcg"] = metric
            record["val_recall"] = report.recall[cfg.ks[0]]
            if metric > best_metric + 1e-12:
                best_metric = metric
                best = params.copy()
                bad_epochs = 0
            else:
                bad_epochs += 1
        log(record)
        if watch and bad_epochs >= cfg.patience:
            break
    if watch and best is not None:
        params = best
    if not params.all_finite():
        raise DivergenceError("non-finite parameters after training",
                              last_good=params)
    return params, records
