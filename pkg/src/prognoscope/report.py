"""Run-directory artifacts: delimited tables, JSON summaries, and figures.

Every writer here is deterministic byte-for-byte given the same inputs:
no timestamps, sorted JSON keys, fixed float formatting, and fixed
matplotlib settings (Agg backend, pinned dpi).
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

DPI = 120


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def write_csv(path, header, rows) -> None:
    def fmt(v):
        if isinstance(v, float):
            return format(v, ".10g")
        return str(v)

    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _new_fig(width=7.0, height=4.5):
    return plt.subplots(figsize=(width, height), dpi=DPI)


def _save(fig, path):
    fig.savefig(path, dpi=DPI, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)


def fig_fold_history(histories, path) -> None:
    """Per-fold train/validation loss curves."""
    fig, ax = _new_fig()
    for i, h in enumerate(histories):
        epochs = range(1, len(h.val_loss) + 1)
        ax.plot(epochs, h.train_loss, alpha=0.6, label=f"fold {i} train")
        ax.plot(epochs, h.val_loss, linestyle="--", alpha=0.8, label=f"fold {i} val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=7, ncol=2)
    _save(fig, path)


def fig_roc(fpr, tpr, auc, path, operating_points=None) -> None:
    """ROC staircase; optional labelled operating points."""
    fig, ax = _new_fig(5.2, 5.0)
    ax.plot(fpr, tpr, color="tab:blue", label=f"model (AUC {auc:.3f})")
    ax.plot([0, 1], [0, 1], color="gray", linestyle=":", linewidth=0.8)
    if operating_points:
        for name, (x, y) in sorted(operating_points.items()):
            color = "tab:blue" if name == "machine" else "tab:orange"
            ax.scatter([x], [y], color=color, zorder=5)
            ax.annotate(name, (x, y), textcoords="offset points", xytext=(6, -4), fontsize=8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    _save(fig, path)


def fig_ranked_bars(rows, path, xlabel="AUC") -> None:
    """Horizontal mean +- sd bars, ranked best first (view sweeps)."""
    rows = sorted(rows, key=lambda r: -r[1])
    names = [r[0] for r in rows]
    means = [r[1] for r in rows]
    sds = [r[2] for r in rows]
    fig, ax = _new_fig(7.0, 0.42 * len(rows) + 1.2)
    y = range(len(rows))
    ax.barh(list(y), means, xerr=sds, color="tab:blue", alpha=0.85, capsize=3)
    ax.set_yticks(list(y))
    ax.set_yticklabels(names, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel(xlabel)
    ax.set_xlim(0.0, 1.0)
    _save(fig, path)


def fig_horizons(rows, path) -> None:
    """Mean +- sd AUC against the follow-up horizon."""
    fig, ax = _new_fig(5.6, 4.2)
    xs = range(len(rows))
    ax.errorbar(list(xs), [r[1] for r in rows], yerr=[r[2] for r in rows],
                fmt="o-", color="tab:blue", capsize=4)
    ax.set_xticks(list(xs))
    ax.set_xticklabels([r[0] for r in rows])
    ax.set_xlabel("survival horizon")
    ax.set_ylabel("AUC")
    ax.set_ylim(0.5, 1.0)
    _save(fig, path)


def fig_learning_curve(series, path) -> None:
    """AUC against training-set size, one line per input configuration."""
    fig, ax = _new_fig(6.4, 4.4)
    for name, pairs in sorted(series.items()):
        ax.plot([p[0] for p in pairs], [p[1] for p in pairs], "o-", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("training set size")
    ax.set_ylabel("holdout AUC")
    ax.legend(fontsize=8)
    _save(fig, path)


def fig_reader_comparison(report, path) -> None:
    """Accuracy bars with sensitivity/specificity marks, next to the machine
    ROC with every responder's operating point."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.5, 4.6), dpi=DPI)
    responders = report["responders"]
    names = [r["id"] for r in responders]
    xs = range(len(names))
    ax1.bar(list(xs), [r["accuracy"] for r in responders], color="lightgray",
            edgecolor="black", width=0.6)
    ax1.scatter(list(xs), [r["sensitivity"] for r in responders], color="red",
                marker="^", label="sensitivity", zorder=5)
    ax1.scatter(list(xs), [r["specificity"] for r in responders], color="green",
                marker="v", label="specificity", zorder=5)
    ax1.set_xticks(list(xs))
    ax1.set_xticklabels(names, fontsize=8)
    ax1.set_ylim(0, 1.05)
    ax1.set_ylabel("proportion")
    ax1.legend(fontsize=8)
    roc = report["machine_roc"]
    ax2.plot(roc["fpr"], roc["tpr"], color="tab:blue",
             label=f"machine (AUC {roc['auc']:.3f})")
    ax2.plot([0, 1], [0, 1], color="gray", linestyle=":", linewidth=0.8)
    op = report["machine_operating_point"]
    ax2.scatter([op["fpr"]], [op["tpr"]], color="tab:blue", zorder=5, label="machine @0.5")
    for r in responders:
        if r["kind"] != "reviewer":
            continue
        ax2.scatter([1.0 - r["specificity"]], [r["sensitivity"]], color="tab:orange", zorder=5)
        ax2.annotate(r["id"], (1.0 - r["specificity"], r["sensitivity"]),
                     textcoords="offset points", xytext=(6, -4), fontsize=8)
    ax2.set_xlabel("false positive rate")
    ax2.set_ylabel("true positive rate")
    ax2.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    _save(fig, path)
