"""Top-K ranking metrics over held-out group-item interactions.

Rankings cover all items minus the group's training positives, ordered by
score with ties broken toward the lower item id.  Recall uses a
min(|relevant|, K) denominator by default (switchable to |relevant|).
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError
from .model import build_graph_ops, forward


@dataclass(frozen=True)
class RankedList:
    group_id: int
    items: np.ndarray           # candidate items, best first
    relevant: np.ndarray        # held-out positives


@dataclass(eq=False)
class MetricsReport:
    ks: tuple
    ndcg: dict                  # K -> mean over groups
    recall: dict
    num_groups: int
    num_skipped: int = 0
    buckets: dict = None        # label -> MetricsReport

    def to_dict(self):
        out = {"ks": list(self.ks),
               "ndcg": {str(k): v for k, v in self.ndcg.items()},
               "recall": {str(k): v for k, v in self.recall.items()},
               "num_groups": self.num_groups,
               "num_skipped": self.num_skipped}
        if self.buckets:
            out["buckets"] = {name: r.to_dict() for name, r in self.buckets.items()}
        return out


def rank_candidates(scores, exclude=None):
    """Item ids by descending score, lower id first on ties."""
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.arange(scores.size)
    if exclude is not None and len(exclude):
        mask = np.ones(scores.size, dtype=bool)
        mask[np.asarray(exclude, dtype=np.int64)] = False
        candidates = candidates[mask]
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order]


def recall_at_k(ranked, k, denominator="min"):
    """Fraction of relevant items retrieved in the top K."""
    if k < 1:
        raise ContractError(f"K must be >= 1, got {k}")
    relevant = set(int(i) for i in ranked.relevant)
    if not relevant:
        raise ContractError(f"group {ranked.group_id} has no relevant items")
    hits = sum(1 for i in ranked.items[:k] if int(i) in relevant)
    denom = min(len(relevant), k) if denominator == "min" else len(relevant)
    return hits / denom


def ndcg_at_k(ranked, k):
    """Binary-gain DCG@K normalized by the ideal DCG@K."""
    if k < 1:
        raise ContractError(f"K must be >= 1, got {k}")
    relevant = set(int(i) for i in ranked.relevant)
    if not relevant:
        raise ContractError(f"group {ranked.group_id} has no relevant items")
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    gains = np.fromiter((int(i) in relevant for i in ranked.items[:k]),
                        dtype=np.float64, count=min(k, len(ranked.items)))
    dcg = float(gains @ discounts[:gains.size])
    ideal = float(discounts[:min(len(relevant), k)].sum())
    return dcg / ideal


def group_scores(params, split, mode, ops=None):
    """Score matrix (|G| x |I|) from a zero-dropout forward pass."""
    if ops is None:
        ops = build_graph_ops(split.train)
    ops = replace(ops, a_coarse=ops.a_full, a_fine=ops.a_full)
    state = forward(params, ops, mode)
    # sigmoid is monotone; raw dot products give the same ranking
    return state.groups.data @ params.item_embed.data.T


def ranked_lists(scores, holdout, train_group_item=None):
    """One RankedList per held-out group, skipping empty relevance sets."""
    out = []
    skipped = 0
    for g in sorted(holdout):
        relevant = np.asarray(holdout[g], dtype=np.int64)
        if relevant.size == 0:
            skipped += 1
            warnings.warn(f"group {g} has no held-out positives, skipped")
            continue
        exclude = None
        if train_group_item is not None:
            row = train_group_item.getrow(g)
            exclude = row.indices if row.nnz else None
        out.append(RankedList(group_id=int(g),
                              items=rank_candidates(scores[g], exclude),
                              relevant=relevant))
    return out, skipped


def _aggregate(lists, ks, denominator, skipped=0):
    ndcg = {k: float(np.mean([ndcg_at_k(r, k) for r in lists])) if lists else 0.0
            for k in ks}
    recall = {k: float(np.mean([recall_at_k(r, k, denominator) for r in lists]))
              if lists else 0.0 for k in ks}
    return MetricsReport(ks=tuple(ks), ndcg=ndcg, recall=recall,
                         num_groups=len(lists), num_skipped=skipped)


def holdout_metrics(params, split, holdout, ks, mode, recall_denominator="min",
                    ops=None, exclude_train=True):
    """Mean NDCG@K / Recall@K over one holdout map (validation or test)."""
    scores = group_scores(params, split, mode, ops=ops)
    train_s = split.train.group_item if exclude_train else None
    lists, skipped = ranked_lists(scores, holdout, train_s)
    return _aggregate(lists, ks, recall_denominator, skipped)


def evaluate(params, split, ks=(20, 50), mode="S2", recall_denominator="min",
             num_buckets=0, ops=None):
    """Test-set report; optionally with sparsity-bucket sub-reports."""
    report = holdout_metrics(params, split, split.test, ks, mode,
                             recall_denominator, ops=ops)
    if num_buckets and len(split.test):
        report.buckets = sparsity_buckets(split, params, num_buckets, ks, mode,
                                          recall_denominator, ops=ops)
    return report


def sparsity_buckets(split, params, num_buckets=4, ks=(20, 50), mode="S2",
                     recall_denominator="min", ops=None):
    """Test groups quartiled by interaction count, sparsest bucket first.

    Under group-level holdout every test group has zero *training*
    interactions, so bucketing uses the held-out interaction count.
    """
    holdout = {g: v for g, v in split.test.items() if len(v)}
    if not holdout:
        return {}
    counts = np.array([len(holdout[g]) for g in sorted(holdout)])
    gids = np.array(sorted(holdout))
    if len(gids) < num_buckets:
        warnings.warn(f"only {len(gids)} test groups for {num_buckets} buckets")
        num_buckets = len(gids)
    if np.all(counts == counts[0]) and num_buckets > 1:
        warnings.warn("all test groups have the same interaction count; "
                      "using a single bucket")
        num_buckets = 1
    order = np.lexsort((gids, counts))
    scores = group_scores(params, split, mode, ops=ops)
    out = {}
    for b, chunk in enumerate(np.array_split(gids[order], num_buckets)):
        sub = {int(g): holdout[int(g)] for g in chunk}
        lists, skipped = ranked_lists(scores, sub, split.train.group_item)
        out[f"Q{b + 1}"] = _aggregate(lists, ks, recall_denominator, skipped)
    return out
