"""Plain-text tables and matplotlib figures for evaluation, ablation, training and corpus reports.

Figures are drawn on standalone ``Figure`` objects (no pyplot state) and saved
as PNG without volatile metadata, so repeated runs write identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import numpy as np
from matplotlib.figure import Figure

from .evaluation import EvalReport
from .model import VARIANT_LABELS

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}
COLORS = {"harmful": "#1f77b4", "not_harmful": "#ff7f0e"}
SCENARIO_ORDER = ("A", "B", "C", "validation", "pooled")


def _order(keys) -> list[str]:
    return sorted(keys, key=lambda k: (SCENARIO_ORDER.index(k) if k in SCENARIO_ORDER else 99, k))


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def _new(figsize=(6.0, 3.4), ncols=1, nrows=1):
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=figsize, layout="constrained")
        axes = fig.subplots(nrows, ncols, squeeze=False)
    return fig, axes


# -- tables ------------------------------------------------------------------

def format_report_table(reports: Mapping[str, EvalReport], title: str = "") -> str:
    """Scenario rows with Acc / Prec / Rec / F1 and per-class P/R, four decimals."""
    head = f"{'Scenario':<12}{'N':>6}{'Acc':>9}{'Prec':>9}{'Rec':>9}{'F1':>9}  {'NH-P':>8}{'NH-R':>8}  {'H-P':>8}{'H-R':>8}"
    lines = [title] if title else []
    lines += [head, "-" * len(head)]
    for s in _order(reports):
        r = reports[s]
        (nhp, nhr), (hp, hr) = r.per_class["not_harmful"], r.per_class["harmful"]
        lines.append(f"{s:<12}{r.n:>6}{r.accuracy:>9.4f}{r.macro_precision:>9.4f}{r.macro_recall:>9.4f}"
                     f"{r.macro_f1:>9.4f}  {nhp:>8.4f}{nhr:>8.4f}  {hp:>8.4f}{hr:>8.4f}")
    return "\n".join(lines) + "\n"


def format_ablation_table(rows: Sequence[tuple[str, Mapping[str, EvalReport] | None]],
                          scenarios: Sequence[str] = ("A", "B", "C")) -> str:
    """One row per variant: F1 and per-class P/R for each scenario; failed variants are marked."""
    cell = 6 * 5
    head1 = f"{'Approach':<20}" + "".join(f"| {'Test Set ' + s:<{cell}}" for s in scenarios)
    head2 = f"{'':<20}" + "".join(f"| {'F1':>6}{'NH-P':>6}{'NH-R':>6}{'H-P':>6}{'H-R':>6}" for _ in scenarios)
    lines = [head1, head2, "-" * len(head2)]
    for variant, reports in rows:
        name = VARIANT_LABELS.get(variant, variant)
        parts = []
        for s in scenarios:
            r = (reports or {}).get(s)
            if r is None:
                parts.append(f"| {'--':>6}{'':>24}" if reports is not None else f"| {'failed':>6}{'':>24}")
                continue
            (nhp, nhr), (hp, hr) = r.per_class["not_harmful"], r.per_class["harmful"]
            parts.append(f"| {r.macro_f1:>6.4f}{nhp:>6.2f}{nhr:>6.2f}{hp:>6.2f}{hr:>6.2f}")
        lines.append(f"{name:<20}" + "".join(parts))
    return "\n".join(lines) + "\n"


# -- figures -----------------------------------------------------------------

def plot_scenario_scores(reports: Mapping[str, EvalReport], path) -> Path:
    keys = _order(reports)
    metrics = [("accuracy", "Acc"), ("macro_precision", "Prec"), ("macro_recall", "Rec"), ("macro_f1", "F1")]
    fig, ax = _new()
    ax = ax[0, 0]
    x = np.arange(len(keys))
    w = 0.8 / len(metrics)
    for j, (attr, label) in enumerate(metrics):
        ax.bar(x + (j - 1.5) * w, [getattr(reports[k], attr) for k in keys], w, label=label)
    ax.set_xticks(x, keys)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend(ncols=4, loc="upper center", frameon=False)
    return _save(fig, path)


def plot_confusions(reports: Mapping[str, EvalReport], path) -> Path:
    keys = _order(reports)
    fig, axes = _new(figsize=(2.4 * len(keys), 2.6), ncols=len(keys))
    for ax, k in zip(axes[0], keys):
        cm = np.asarray(reports[k].confusion)
        ax.imshow(cm, cmap="Blues", vmin=0)
        for (i, j), v in np.ndenumerate(cm):
            ax.text(j, i, str(v), ha="center", va="center")
        ax.set_xticks([0, 1], ["NH", "H"])
        ax.set_yticks([0, 1], ["NH", "H"])
        ax.set_xlabel("predicted")
        ax.set_title(k)
    axes[0, 0].set_ylabel("true")
    return _save(fig, path)


def plot_history(history: Mapping, path) -> Path:
    epochs = [r["epoch"] for r in history["epochs"]]
    fig, axes = _new(figsize=(6.0, 2.8), ncols=2)
    a, b = axes[0]
    a.plot(epochs, [r["train_loss"] for r in history["epochs"]], marker=".")
    a.set_xlabel("epoch")
    a.set_ylabel("training loss")
    b.plot(epochs, [r["val_macro_f1"] for r in history["epochs"]], marker=".", color="C2")
    if history.get("best_epoch"):
        b.axvline(history["best_epoch"], color="0.6", ls="--", lw=0.8)
    b.set_xlabel("epoch")
    b.set_ylabel("validation macro-F1")
    b.set_ylim(0, 1.05)
    return _save(fig, path)


def plot_ablation(rows: Sequence[tuple[str, Mapping[str, EvalReport] | None]], path,
                  scenarios: Sequence[str] = ("A", "B", "C")) -> Path:
    names = [VARIANT_LABELS.get(v, v) for v, _ in rows]
    fig, ax = _new(figsize=(7.0, 3.6))
    ax = ax[0, 0]
    y = np.arange(len(rows))
    h = 0.8 / len(scenarios)
    for j, s in enumerate(scenarios):
        vals = [((r or {}).get(s).macro_f1 if (r or {}).get(s) else 0.0) for _, r in rows]
        ax.barh(y + (j - (len(scenarios) - 1) / 2) * h, vals, h, label=f"Test Set {s}")
    ax.set_yticks(y, names)
    ax.invert_yaxis()
    ax.set_xlim(0, 1.0)
    ax.set_xlabel("macro-F1")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_length_histograms(stats, path) -> Path:
    edges = np.asarray(stats.bin_edges)
    centers = (edges[:-1] + edges[1:]) / 2
    width = (edges[1] - edges[0]) * 0.4 if len(edges) > 1 else 1
    fig, ax = _new()
    ax = ax[0, 0]
    for j, cls in enumerate(("harmful", "not_harmful")):
        ax.bar(centers + (j - 0.5) * width, stats.histograms[cls], width, color=COLORS[cls], label=cls.replace("_", "-"))
    ax.set_xlabel("meme text length (tokens)")
    ax.set_ylabel("memes")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_top_entities(stats, path) -> Path:
    cats = sorted({c for by in stats.top.values() for c in by})
    fig, axes = _new(figsize=(3.0 * max(len(cats), 1), 3.0), ncols=max(len(cats), 1))
    for ax, cat in zip(axes[0], cats):
        names = []
        for cls in ("harmful", "not_harmful"):
            names += [n for n, _ in stats.top[cls].get(cat, []) if n not in names]
        y = np.arange(len(names))
        for j, cls in enumerate(("harmful", "not_harmful")):
            counts = dict(stats.top[cls].get(cat, []))
            ax.barh(y + (j - 0.5) * 0.4, [counts.get(n, 0) for n in names], 0.4,
                    color=COLORS[cls], label=cls.replace("_", "-"))
        ax.set_yticks(y, names)
        ax.invert_yaxis()
        ax.set_title(cat)
        ax.set_xlabel("count")
    axes[0, 0].legend(frameon=False)
    return _save(fig, path)


def plot_entity_lengths(stats, path, max_panels: int = 6) -> Path:
    ents = list(stats.entity_lengths)[:max_panels]
    n = max(len(ents), 1)
    ncols = min(3, n)
    nrows = (n + ncols - 1) // ncols
    fig, axes = _new(figsize=(3.0 * ncols, 2.4 * nrows), ncols=ncols, nrows=nrows)
    edges = stats.bin_edges
    for k, ax in enumerate(axes.ravel()):
        if k >= len(ents):
            ax.set_visible(False)
            continue
        for cls in ("harmful", "not_harmful"):
            ax.hist(stats.entity_lengths[ents[k]][cls], bins=edges, alpha=0.6, color=COLORS[cls],
                    label=cls.replace("_", "-"))
        ax.set_title(ents[k])
        ax.set_xlabel("tokens")
    axes[0, 0].legend(frameon=False)
    return _save(fig, path)
