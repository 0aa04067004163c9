"""Tables, delimited reports, and figures.

Every report path writes a TSV (or JSON) plus a matching PNG figure next
to it; the aligned-text renderers feed stdout.  matplotlib is imported
lazily with the Agg backend so headless runs work.
"""

import json
from pathlib import Path

import numpy as np


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_table(headers, rows):
    """Column-aligned text table."""
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(headers))]
    lines = []
    for i, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def render_stats_table(stats, name="dataset"):
    headers = ["Dataset", "#Users", "#Items", "#Groups",
               "#U-I interactions", "#G-I interactions", "Avg. group size"]
    row = [name, stats["users"], stats["items"], stats["groups"],
           stats["ui_feedback"], stats["gi_feedback"],
           f"{stats['avg_group_size']:.2f}"]
    return render_table(headers, [row])


def _metric_columns(ks):
    return [f"N@{k}" for k in ks] + [f"R@{k}" for k in ks]


def _metric_row(report):
    return ([f"{report.ndcg[k]:.4f}" for k in report.ks]
            + [f"{report.recall[k]:.4f}" for k in report.ks])


def render_metrics_table(report, name="test"):
    rows = [[name] + _metric_row(report)]
    if report.buckets:
        for label, sub in report.buckets.items():
            rows.append([f"{name}/{label}"] + _metric_row(sub))
    return render_table(["Groups"] + _metric_columns(report.ks), rows)


def write_metrics_tsv(report, path, name="test"):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["groups"] + _metric_columns(report.ks)) + "\n")
        fh.write("\t".join([name] + _metric_row(report)) + "\n")
        if report.buckets:
            for label, sub in report.buckets.items():
                fh.write("\t".join([f"{name}/{label}"] + _metric_row(sub)) + "\n")


def write_metrics_json(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_metrics(report, path, title="Test metrics"):
    plt = _plt()
    ks = list(report.ks)
    labels = _metric_columns(ks)
    values = [report.ndcg[k] for k in ks] + [report.recall[k] for k in ks]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(len(labels))
    ax.bar(x, values, color=["#4878cf"] * len(ks) + ["#6acc65"] * len(ks))
    ax.set_xticks(x, labels)
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    ax.set_title(title)
    for xi, v in zip(x, values):
        ax.text(xi, v + 0.02, f"{v:.3f}", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training_curves(records, path):
    """Loss components per epoch (both stages) and validation NDCG if logged."""
    plt = _plt()
    stages = sorted({r["stage"] for r in records})
    fig, axes = plt.subplots(1, len(stages) or 1, figsize=(6 * max(len(stages), 1), 3.5),
                             squeeze=False)
    for ax, stage in zip(axes[0], stages):
        rs = [r for r in records if r["stage"] == stage]
        epochs = [r["epoch"] for r in rs]
        for key, style in (("total", "-"), ("l_ui", "--"), ("l_gi", ":"),
                           ("l_uu", "-.")):
            series = [r[key] for r in rs]
            if any(v != 0 for v in series) or key == "total":
                ax.plot(epochs, series, style, label=key)
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss (sum)")
        ax.set_title(f"stage {stage}")
        if any("val_ndcg" in r for r in rs):
            twin = ax.twinx()
            twin.plot(epochs, [r.get("val_ndcg", np.nan) for r in rs],
                      color="tab:red", alpha=0.6, label="val NDCG")
            twin.set_ylabel("val NDCG", color="tab:red")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_ablation_table(rows, ks):
    """rows: list of (variant, MetricsReport)."""
    table = [[variant] + _metric_row(report) for variant, report in rows]
    return render_table(["Variant"] + _metric_columns(ks), table)


def write_ablation_tsv(rows, ks, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["variant"] + _metric_columns(ks)) + "\n")
        for variant, report in rows:
            fh.write("\t".join([variant] + _metric_row(report)) + "\n")


def plot_ablation(rows, ks, path):
    plt = _plt()
    labels = _metric_columns(ks)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    width = 0.8 / max(len(rows), 1)
    x = np.arange(len(labels))
    for i, (variant, report) in enumerate(rows):
        values = [report.ndcg[k] for k in ks] + [report.recall[k] for k in ks]
        ax.bar(x + i * width, values, width, label=variant)
    ax.set_xticks(x + width * (len(rows) - 1) / 2, labels)
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    ax.set_title("Variant comparison")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_coordinate_file(path, matrix):
    """Sparse-triplet text dump `row<TAB>col<TAB>value` for oracle checks."""
    from scipy import sparse
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {coo.shape[0]} x {coo.shape[1]}, {coo.nnz} nonzeros\n")
        for i in order:
            v = coo.data[i]
            text = f"{v:g}"
            fh.write(f"{coo.row[i]}\t{coo.col[i]}\t{text}\n")


def write_train_log(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
