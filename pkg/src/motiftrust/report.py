"""Run reports: delimited metrics output plus rendered matplotlib figures."""

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

METRIC_ROWS = ("f1", "acc", "ap", "recall")
METRIC_LABELS = {"f1": "F1", "acc": "Acc", "ap": "Ap", "recall": "Recall"}


def write_metrics_csv(report, path) -> None:
    """One row per (repeat, epoch) with train loss and both split metrics."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["rep", "seed", "epoch", "train_loss",
                    "valid_f1", "valid_acc", "valid_ap", "valid_recall",
                    "test_f1", "test_acc", "test_ap", "test_recall"])
        for r, rep in enumerate(report["reps"]):
            for e in rep["epochs"]:
                w.writerow([r, rep["seed"], e["epoch"], e["train_loss"]]
                           + [e["valid"][m] for m in METRIC_ROWS]
                           + [e["test"][m] for m in METRIC_ROWS])


def results_table(columns: dict) -> str:
    """Metrics-by-model text table (models as columns, metrics as rows)."""
    names = list(columns)
    width = max(8, *(len(n) + 2 for n in names))
    lines = ["".ljust(8) + "".join(n.rjust(width) for n in names)]
    for m in METRIC_ROWS:
        cells = []
        for n in names:
            v = columns[n].get(m)
            cells.append(("-" if v is None else f"{v:.3f}").rjust(width))
        lines.append(METRIC_LABELS[m].ljust(8) + "".join(cells))
    return "\n".join(lines) + "\n"


def training_curves(report, path) -> None:
    fig, (ax_loss, ax_f1) = plt.subplots(1, 2, figsize=(10, 4))
    for rep in report["reps"]:
        xs = [e["epoch"] for e in rep["epochs"]]
        ax_loss.plot(xs, [e["train_loss"] for e in rep["epochs"]],
                     lw=1, label=f"seed {rep['seed']}")
        ax_f1.plot(xs, [e["valid"]["f1"] for e in rep["epochs"]], lw=1,
                   label=f"valid s{rep['seed']}")
        ax_f1.plot(xs, [e["test"]["f1"] for e in rep["epochs"]], lw=1,
                   ls="--", label=f"test s{rep['seed']}")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss")
    ax_loss.set_title(f"{report['model']}: training loss")
    ax_f1.set_xlabel("epoch")
    ax_f1.set_ylabel("F1")
    ax_f1.set_title("validation / test F1")
    if len(report["reps"]) <= 3:
        ax_loss.legend(fontsize=8)
        ax_f1.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def ablation_chart(results: dict, path) -> None:
    """Bar chart of seed-averaged test F1 per model variant."""
    names = list(results)
    f1s = [results[n]["aggregate"]["f1"] for n in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(names, f1s, color="#4878a8")
    for b, v in zip(bars, f1s):
        ax.text(b.get_x() + b.get_width() / 2, v, f"{v:.3f}",
                ha="center", va="bottom", fontsize=9)
    ax.set_ylabel("test F1 (seed-averaged)")
    ax.set_title("component ablations")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
