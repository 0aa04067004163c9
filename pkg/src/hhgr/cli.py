"""Command-line interface.

Subcommands: train, evaluate, ablate, synth, stats, dump-hypergraph.
Exit codes: 0 success, 1 runtime failure (divergence), 2 usage or
validation errors.  HHGR_THREADS caps BLAS threads (applied before numpy
is imported), HHGR_SEED overrides every configured seed.
"""

import argparse
import os
import sys
from pathlib import Path

from .errors import DivergenceError, HHGRError

DATA_FILES = ("users.tsv", "groups_items.tsv", "membership.tsv")


def _apply_thread_env():
    n = os.environ.get("HHGR_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _add_data_flags(p):
    p.add_argument("--data", help="directory holding users.tsv, "
                   "groups_items.tsv, membership.tsv")
    p.add_argument("--user-item", help="user-item TSV path")
    p.add_argument("--group-item", help="group-item TSV path")
    p.add_argument("--membership", help="membership TSV path")


def _add_train_flags(p):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--mode")
    p.add_argument("--seed", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--l-u", type=int, dest="l_u")
    p.add_argument("--l-g", type=int, dest="l_g")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--n-neg", type=int, dest="n_neg")
    p.add_argument("--lr-pretrain", type=float, dest="lr_pretrain")
    p.add_argument("--lr-main", type=float, dest="lr_main")
    p.add_argument("--epochs-pretrain", type=int, dest="epochs_pretrain")
    p.add_argument("--epochs-main", type=int, dest="epochs_main")
    p.add_argument("--patience", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--coarse-rate", type=float, dest="coarse_rate")
    p.add_argument("--fine-rate", type=float, dest="fine_rate")
    p.add_argument("--ks", help="comma-separated cutoffs, e.g. 20,50")
    p.add_argument("--split", help="train,val,test ratios, e.g. 0.7,0.1,0.2")
    p.add_argument("--out", dest="out_dir", help="output root directory")
    p.add_argument("--run", dest="run_name", help="run (sub)directory name")


def _build_config(args):
    from .config import load_config, validate_config
    overrides = {}
    for field in ("mode", "seed", "d", "l_u", "l_g", "batch_size", "n_neg",
                  "lr_pretrain", "lr_main", "epochs_pretrain", "epochs_main",
                  "patience", "beta", "coarse_rate", "fine_rate",
                  "out_dir", "run_name", "user_item", "group_item",
                  "membership"):
        value = getattr(args, field, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "ks", None):
        overrides["ks"] = tuple(int(k) for k in args.ks.split(","))
    if getattr(args, "split", None):
        overrides["split"] = tuple(float(r) for r in args.split.split(","))
    cfg = load_config(getattr(args, "config", None), overrides)
    if getattr(args, "data", None):
        names = dict(zip(("user_item", "group_item", "membership"), DATA_FILES))
        for field, filename in names.items():
            if getattr(cfg, field) is None:
                setattr(cfg, field, str(Path(args.data) / filename))
    env_seed = os.environ.get("HHGR_SEED")
    if env_seed is not None:
        cfg.seed = int(env_seed)
    return validate_config(cfg)


def _load_dataset(cfg):
    from .datasets import load_dataset
    from .errors import ConfigError
    missing = [n for n in ("user_item", "group_item", "membership")
               if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(f"no path for {', '.join(missing)}; "
                          "pass --data or set them in [data]")
    return load_dataset(cfg.user_item, cfg.group_item, cfg.membership)


def cmd_train(args):
    from . import reports
    from .checkpoint import save_checkpoint
    from .config import config_meta, echo_config
    from .datasets import split_groups
    from .training import train

    cfg = _build_config(args)
    ds = _load_dataset(cfg)
    split = split_groups(ds, cfg.split, cfg.seed)
    out = Path(cfg.out_dir) / cfg.run_name
    out.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out / "config.echo")

    records = []
    meta = config_meta(cfg)
    meta["num_groups"] = ds.num_groups
    try:
        params, records = train(split, cfg, log_hook=records.append)
    except DivergenceError as e:
        reports.write_train_log(records, out / "train_log.jsonl")
        if e.last_good is not None:
            save_checkpoint(out / "checkpoint.bin", e.last_good, meta)
            print(f"diverged; last-good checkpoint kept at {out / 'checkpoint.bin'}",
                  file=sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return 1
    reports.write_train_log(records, out / "train_log.jsonl")
    save_checkpoint(out / "checkpoint.bin", params, meta)
    if records:
        reports.plot_training_curves(records, out / "train_curves.png")
    print(f"trained {cfg.mode} for {len(records)} epochs; "
          f"checkpoint at {out / 'checkpoint.bin'}")
    return 0


def cmd_evaluate(args):
    from . import reports
    from .checkpoint import load_checkpoint
    from .datasets import load_dataset, split_groups
    from .evaluation import evaluate

    params, meta = load_checkpoint(args.checkpoint)
    if args.data:
        paths = [Path(args.data) / n for n in DATA_FILES]
    else:
        paths = [args.user_item, args.group_item, args.membership]
        if any(p is None for p in paths):
            print("error: pass --data or all three dataset paths",
                  file=sys.stderr)
            return 2
    ds = load_dataset(*paths)
    expected = (meta["num_users"], meta["num_items"], meta["num_groups"])
    got = (ds.num_users, ds.num_items, ds.num_groups)
    if expected != got:
        print(f"error: checkpoint built for (users, items, groups)={expected} "
              f"but dataset has {got}", file=sys.stderr)
        return 2
    split = split_groups(ds, meta["split"], meta["seed"])
    ks = tuple(int(k) for k in args.ks.split(",")) if args.ks else tuple(meta["ks"])
    report = evaluate(params, split, ks=ks, mode=meta["mode"],
                      recall_denominator=meta.get("recall_denominator", "min"),
                      num_buckets=args.buckets)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    reports.write_metrics_json(report, out / "metrics.json")
    reports.write_metrics_tsv(report, out / "metrics.tsv")
    reports.plot_metrics(report, out / "metrics.png",
                         title=f"{meta['mode']} test metrics")
    print(reports.render_metrics_table(report))
    return 0


def cmd_ablate(args):
    import dataclasses

    from . import reports
    from .config import validate_config
    from .datasets import split_groups
    from .evaluation import evaluate
    from .model import MODES
    from .training import train

    cfg = _build_config(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = [v for v in variants if v not in MODES]
    if unknown:
        print(f"error: unknown variant {unknown[0]!r} "
              f"(choose from {', '.join(MODES)})", file=sys.stderr)
        return 2
    ds = _load_dataset(cfg)
    split = split_groups(ds, cfg.split, cfg.seed)
    out = Path(cfg.out_dir) / cfg.run_name
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for variant in variants:
        vcfg = validate_config(dataclasses.replace(cfg, mode=variant))
        params, _ = train(split, vcfg)
        report = evaluate(params, split, ks=cfg.ks, mode=variant,
                          recall_denominator=cfg.recall_denominator)
        rows.append((variant, report))
        print(f"{variant}: done")
    reports.write_ablation_tsv(rows, cfg.ks, out / "ablation.tsv")
    reports.plot_ablation(rows, cfg.ks, out / "ablation.png")
    print(reports.render_ablation_table(rows, cfg.ks))
    return 0


def cmd_synth(args):
    from . import reports
    from .datasets import dataset_stats, generate_synthetic, save_dataset

    lo, hi = (int(x) for x in args.group_size.split(","))
    ds = generate_synthetic(args.users, args.items, args.groups, (lo, hi),
                            args.density, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, *(out / n for n in DATA_FILES))
    print(f"wrote {', '.join(DATA_FILES)} to {out}")
    print(reports.render_stats_table(dataset_stats(ds), name=out.name))
    return 0


def cmd_stats(args):
    from . import reports
    from .datasets import dataset_stats, load_dataset

    if args.data:
        paths = [Path(args.data) / n for n in DATA_FILES]
        name = Path(args.data).name or "dataset"
    else:
        paths = [args.user_item, args.group_item, args.membership]
        name = "dataset"
        if any(p is None for p in paths):
            print("error: pass --data or all three dataset paths",
                  file=sys.stderr)
            return 2
    ds = load_dataset(*paths)
    print(reports.render_stats_table(dataset_stats(ds), name=name))
    return 0


def cmd_dump_hypergraph(args):
    from .datasets import load_dataset
    from .hypergraph import build_user_level, motif_adjacency, project_groups
    from .reports import write_coordinate_file

    if args.data:
        paths = [Path(args.data) / n for n in DATA_FILES]
    else:
        paths = [args.user_item, args.group_item, args.membership]
        if any(p is None for p in paths):
            print("error: pass --data or all three dataset paths",
                  file=sys.stderr)
            return 2
    ds = load_dataset(*paths)
    h = build_user_level(ds.membership, ds.num_users)
    c = project_groups(h)
    t = motif_adjacency(c)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_coordinate_file(out / "h_ul.coo", h.matrix)
    write_coordinate_file(out / "clique.coo", c)
    write_coordinate_file(out / "motif.coo", t.matrix)
    print(f"wrote h_ul.coo, clique.coo, motif.coo to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hhgr",
        description="Hierarchical hypergraph group recommender (HHGR / S2-HHGR)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_train_flags(p)
    _add_data_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="rank held-out groups from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    _add_data_flags(p)
    p.add_argument("--ks", help="comma-separated cutoffs")
    p.add_argument("--buckets", type=int, default=4,
                   help="sparsity buckets (0 disables)")
    p.add_argument("--out", help="report directory (default: checkpoint dir)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train + evaluate several variants")
    p.add_argument("--variants", required=True,
                   help="comma-separated modes, e.g. HHGR,HHGR-wg,S2")
    _add_train_flags(p)
    _add_data_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="generate a planted synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--groups", type=int, default=80)
    p.add_argument("--group-size", default="2,5", dest="group_size")
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="print dataset summary counts")
    _add_data_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("dump-hypergraph",
                       help="write H, clique projection, and motif matrix")
    _add_data_flags(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_dump_hypergraph)
    return parser


def main(argv=None):
    _apply_thread_env()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (HHGRError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
