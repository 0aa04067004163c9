"""Dataset ingestion, splitting, negative sampling, synthetic generation.

File format: two tab-separated non-negative integer ids per line.  Lines
starting with `#` are comments; an optional `% users=.. items=.. groups=..`
line declares entity counts (otherwise counts are inferred as max id + 1
across all three files).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import seeding
from .errors import (GenerationError, ParseError, SamplingError, SplitError,
                     ValidationError)

_HEADER_KEYS = ("users", "items", "groups")


@dataclass(eq=False)
class InteractionDataset:
    """User-item matrix R, group-item matrix S, and group membership."""

    num_users: int
    num_items: int
    num_groups: int
    user_item: sparse.csr_matrix    # |U| x |I|, binary
    group_item: sparse.csr_matrix   # |G| x |I|, binary
    membership: dict                # group id -> sorted ndarray of user ids

    def validate(self):
        if set(self.membership) != set(range(self.num_groups)):
            missing = sorted(set(range(self.num_groups)) - set(self.membership))
            raise ValidationError(f"group {missing[0]} has no members")
        for g, members in self.membership.items():
            if len(members) == 0:
                raise ValidationError(f"group {g} has no members")
            if int(members[-1]) >= self.num_users or int(members[0]) < 0:
                bad = members[-1] if members[-1] >= self.num_users else members[0]
                raise ValidationError(f"group {g} references unknown user {bad}")
        for name, mat, shape in (("user_item", self.user_item, (self.num_users, self.num_items)),
                                 ("group_item", self.group_item, (self.num_groups, self.num_items))):
            if mat.shape != shape:
                raise ValidationError(f"{name} shape {mat.shape} != {shape}")
            if mat.nnz and not np.all(mat.data == 1.0):
                raise ValidationError(f"{name} must be binary without duplicates")
        return self


def _pairs_to_csr(pairs, shape):
    if pairs:
        arr = np.array(sorted(pairs), dtype=np.int64)
        rows, cols = arr[:, 0], arr[:, 1]
    else:
        rows = cols = np.empty(0, dtype=np.int64)
    m = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=shape)
    m.sort_indices()
    return m


def make_dataset(num_users, num_items, num_groups, user_item_pairs,
                 group_item_pairs, membership_pairs):
    """Build and validate an InteractionDataset from id-pair collections."""
    membership = {}
    for g, u in membership_pairs:
        membership.setdefault(int(g), set()).add(int(u))
    membership = {g: np.array(sorted(us), dtype=np.int64)
                  for g, us in membership.items()}
    ds = InteractionDataset(
        num_users=num_users, num_items=num_items, num_groups=num_groups,
        user_item=_pairs_to_csr(user_item_pairs, (num_users, num_items)),
        group_item=_pairs_to_csr(group_item_pairs, (num_groups, num_items)),
        membership=membership)
    return ds.validate()


def _read_pairs(path):
    """Parse one TSV file -> (set of id pairs, declared-count dict)."""
    pairs, declared = set(), {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if text.startswith("%"):
                for token in text[1:].split():
                    key, _, value = token.partition("=")
                    if key not in _HEADER_KEYS or not value.isdigit():
                        raise ParseError(f"{path}:{lineno}: bad header token {token!r}")
                    declared[key] = int(value)
                continue
            parts = text.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected two tab-separated ids")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer id") from None
            if a < 0 or b < 0:
                raise ParseError(f"{path}:{lineno}: negative id")
            pairs.add((a, b))
    return pairs, declared


def _count(declared, key, inferred):
    if key in declared:
        return declared[key]
    return inferred


def load_dataset(user_item_path, group_item_path, membership_path):
    """Read the three TSV files into a validated InteractionDataset."""
    ui_pairs, decl_ui = _read_pairs(user_item_path)
    gi_pairs, decl_gi = _read_pairs(group_item_path)
    mb_pairs, decl_mb = _read_pairs(membership_path)

    declared = {}
    for src in (decl_ui, decl_gi, decl_mb):
        for key, value in src.items():
            if declared.get(key, value) != value:
                raise ValidationError(f"conflicting header counts for {key}")
            declared[key] = value

    def top(*id_iters):
        ids = [i for it in id_iters for i in it]
        return max(ids) + 1 if ids else 0

    num_users = _count(declared, "users",
                       top((u for u, _ in ui_pairs), (u for _, u in mb_pairs)))
    num_items = _count(declared, "items",
                       top((i for _, i in ui_pairs), (i for _, i in gi_pairs)))
    num_groups = _count(declared, "groups",
                        top((g for g, _ in gi_pairs), (g for g, _ in mb_pairs)))

    for u, i in ui_pairs:
        if u >= num_users:
            raise ValidationError(f"{user_item_path}: unknown user {u}")
        if i >= num_items:
            raise ValidationError(f"{user_item_path}: unknown item {i}")
    for g, i in gi_pairs:
        if g >= num_groups:
            raise ValidationError(f"{group_item_path}: unknown group {g}")
        if i >= num_items:
            raise ValidationError(f"{group_item_path}: unknown item {i}")
    for g, u in mb_pairs:
        if g >= num_groups:
            raise ValidationError(f"{membership_path}: unknown group {g}")
        if u >= num_users:
            raise ValidationError(f"{membership_path}: unknown user {u}")

    return make_dataset(num_users, num_items, num_groups,
                        ui_pairs, gi_pairs, mb_pairs)


def save_dataset(ds, user_item_path, group_item_path, membership_path):
    """Write the three TSV files (with count headers, sorted lines)."""
    header = f"% users={ds.num_users} items={ds.num_items} groups={ds.num_groups}\n"

    def write(path, pairs):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header)
            for a, b in sorted(pairs):
                fh.write(f"{a}\t{b}\n")

    write(user_item_path, zip(*ds.user_item.nonzero()))
    write(group_item_path, zip(*ds.group_item.nonzero()))
    write(membership_path,
          ((g, int(u)) for g in range(ds.num_groups) for u in ds.membership[g]))


@dataclass(eq=False)
class SplitDataset:
    """Group-level holdout: test/validation groups keep their membership in
    the training hypergraph but their group-item rows are hidden."""

    train: InteractionDataset
    validation: dict            # group id -> ndarray of held-out item ids
    test: dict
    split_seed: int
    train_groups: np.ndarray
    val_groups: np.ndarray
    test_groups: np.ndarray
    source: InteractionDataset = field(repr=False, default=None)


def split_groups(ds, ratios, seed):
    """Randomly partition groups into train/validation/test by `ratios`."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0:
        raise SplitError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must sum to 1, got {sum(ratios)}")
    g = ds.num_groups
    n_val = round(ratios[1] * g)
    n_test = round(ratios[2] * g)
    n_train = g - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise SplitError(f"{g} groups cannot fill partitions "
                         f"({n_train}, {n_val}, {n_test})")
    perm = seeding.derive_rng(seed, seeding.SPLIT).permutation(g)
    train_g = np.sort(perm[:n_train])
    val_g = np.sort(perm[n_train:n_train + n_val])
    test_g = np.sort(perm[n_train + n_val:])

    s = ds.group_item.toarray()
    holdout = {}
    for name, ids in (("validation", val_g), ("test", test_g)):
        holdout[name] = {int(gid): np.flatnonzero(s[gid]) for gid in ids
                         if s[gid].any()}
    s_train = s.copy()
    s_train[val_g] = 0
    s_train[test_g] = 0
    train_ds = InteractionDataset(
        num_users=ds.num_users, num_items=ds.num_items, num_groups=ds.num_groups,
        user_item=ds.user_item, group_item=sparse.csr_matrix(s_train),
        membership=ds.membership).validate()
    return SplitDataset(train=train_ds, validation=holdout["validation"],
                        test=holdout["test"], split_seed=int(seed),
                        train_groups=train_g, val_groups=val_g,
                        test_groups=test_g, source=ds)


@dataclass(frozen=True)
class TrainingTriple:
    subject: int                # user or group id
    positive: int
    negatives: np.ndarray       # n_neg item ids, each non-interacted


def sample_triples(ds, subject_kind, n_neg, rng):
    """Yield one TrainingTriple per observed positive, in shuffled order.

    Negatives are uniform (with replacement) over the subject's
    non-interacted items.
    """
    if n_neg < 1:
        raise SamplingError(f"n_neg must be >= 1, got {n_neg}")
    if not isinstance(rng, np.random.Generator):
        rng = seeding.derive_rng(rng, seeding.SAMPLE)
    mat = {"user": ds.user_item, "group": ds.group_item}[subject_kind]
    mat = sparse.csr_matrix(mat)
    subjects, positives = mat.nonzero()
    all_items = np.arange(ds.num_items)
    pools = {}
    for s in np.unique(subjects):
        pool = np.setdiff1d(all_items, mat.indices[mat.indptr[s]:mat.indptr[s + 1]],
                            assume_unique=True)
        if pool.size == 0:
            raise SamplingError(f"{subject_kind} {s} has no non-interacted items")
        pools[s] = pool
    for k in rng.permutation(subjects.size):
        s, i = int(subjects[k]), int(positives[k])
        pool = pools[s]
        negs = pool[rng.integers(0, pool.size, size=n_neg)]
        yield TrainingTriple(subject=s, positive=i, negatives=negs)


def triples_to_arrays(triples):
    """Stack a triple list into (subjects, positives, negatives[B, n]) arrays."""
    triples = list(triples)
    if not triples:
        return (np.empty(0, np.int64), np.empty(0, np.int64),
                np.empty((0, 1), np.int64))
    return (np.array([t.subject for t in triples], dtype=np.int64),
            np.array([t.positive for t in triples], dtype=np.int64),
            np.stack([t.negatives for t in triples]).astype(np.int64))


def generate_synthetic(num_users, num_items, num_groups, group_size_range,
                       density, seed):
    """Planted-preference dataset: each group prefers a latent item cluster.

    Members inherit their group's cluster for user-item rows (light
    cross-cluster noise keeps the ranking problem nontrivial), so the
    group signal is learnable by construction.
    """
    lo, hi = int(group_size_range[0]), int(group_size_range[1])
    if min(num_users, num_items, num_groups) < 1:
        raise GenerationError("all counts must be >= 1")
    if not 0.0 < density <= 1.0:
        raise GenerationError(f"density must be in (0, 1], got {density}")
    if lo < 1 or hi < lo:
        raise GenerationError(f"bad group size range ({lo}, {hi})")
    if hi > num_users:
        raise GenerationError(f"group size {hi} exceeds {num_users} users")

    rng = seeding.derive_rng(seed, seeding.SYNTH)
    stride = num_items / num_groups
    width = min(num_items, max(2, int(round(stride))))
    clusters = [(int(g * stride) + np.arange(width)) % num_items
                for g in range(num_groups)]

    membership_pairs = []
    home = {}
    for g in range(num_groups):
        size = int(rng.integers(lo, hi + 1))
        members = rng.choice(num_users, size=size, replace=False)
        for u in members:
            membership_pairs.append((g, int(u)))
            home.setdefault(int(u), g)
    for u in range(num_users):
        if u not in home:
            home[u] = int(rng.integers(num_groups))

    def planted_row(cluster, p_in, p_out):
        inside = cluster[rng.random(cluster.size) < p_in]
        if inside.size == 0:
            inside = cluster[[rng.integers(cluster.size)]]
        outside = np.setdiff1d(np.arange(num_items), cluster, assume_unique=False)
        noise = outside[rng.random(outside.size) < p_out]
        return np.concatenate([inside, noise])

    gi_pairs = set()
    for g in range(num_groups):
        for item in planted_row(clusters[g], density, density / 50):
            gi_pairs.add((g, int(item)))
    ui_pairs = set()
    for u in range(num_users):
        for item in planted_row(clusters[home[u]], density, density / 10):
            ui_pairs.add((u, int(item)))

    return make_dataset(num_users, num_items, num_groups,
                        ui_pairs, gi_pairs, membership_pairs)


def dataset_stats(ds):
    """Counts for the summary table."""
    sizes = [len(m) for m in ds.membership.values()]
    return {
        "users": ds.num_users,
        "items": ds.num_items,
        "groups": ds.num_groups,
        "ui_feedback": int(ds.user_item.nnz),
        "gi_feedback": int(ds.group_item.nnz),
        "avg_group_size": float(np.mean(sizes)) if sizes else 0.0,
    }
