"""Tables (JSON + CSV) and figures for evaluation reports."""
from __future__ import annotations

from pathlib import Path as FsPath

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..instrgen import LANGUAGES  # noqa: E402
from ..metrics import METRICS, EvalReport  # noqa: E402
from .data import write_csv, write_json  # noqa: E402
from .diagnostics import gap_report  # noqa: E402

COLUMNS = ("avg",) + LANGUAGES


def table_header() -> list[str]:
    """Metric-major columns: SR avg, SR L1, ..., SDTW L3."""
    return ["run", "split"] + [f"{m}_{c}" for m in METRICS for c in COLUMNS]


def table_row(run: str, split: str, rep: EvalReport) -> list:
    row: list = [run, split]
    for m in METRICS:
        row.append(rep.aggregate[m])
        for lang in LANGUAGES:
            row.append(rep.per_language.get(lang, {}).get(m, ""))
    return row


def write_tables(outdir, runs: dict[str, dict[str, EvalReport]]) -> dict[str, FsPath]:
    """``runs`` maps run name -> split -> report."""
    out = FsPath(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [table_row(run, split, rep) for run in runs for split, rep in sorted(runs[run].items())]
    write_csv(out / "table.csv", table_header(), rows)
    gaps = {run: gap_report(r["val-seen"], r["val-unseen"]) for run, r in runs.items()
            if "val-seen" in r and "val-unseen" in r}
    if gaps:
        write_csv(out / "gaps.csv", ["run"] + list(METRICS), [[run] + [g[m] for m in METRICS] for run, g in gaps.items()])
    write_json(out / "report.json", "report", {
        "runs": {run: {s: rep.to_dict() for s, rep in sorted(r.items())} for run, r in runs.items()},
        "gaps": gaps,
    })
    paths = {"table": out / "table.csv", "json": out / "report.json"}
    if gaps:
        paths["gaps"] = out / "gaps.csv"
    paths.update(plot_reports(out, runs))
    return paths


def plot_reports(outdir, runs: dict[str, dict[str, EvalReport]]) -> dict[str, FsPath]:
    out = FsPath(outdir)
    files = {}
    names = list(runs)
    splits = sorted({s for r in runs.values() for s in r})
    fig, axes = plt.subplots(1, len(METRICS), figsize=(4 * len(METRICS), 3.6), sharey=True)
    width = 0.8 / max(len(names) * len(splits), 1)
    x = np.arange(len(COLUMNS))
    for ax, m in zip(np.atleast_1d(axes), METRICS):
        k = 0
        for run in names:
            for split in splits:
                rep = runs[run].get(split)
                if rep is None:
                    continue
                vals = [rep.aggregate[m]] + [rep.per_language.get(lang, {}).get(m, 0.0) for lang in LANGUAGES]
                ax.bar(x + k * width, vals, width, label=f"{run} / {split}")
                k += 1
        ax.set_xticks(x + width * (k - 1) / 2, COLUMNS)
        ax.set_title(m)
        ax.set_ylim(0, 100)
    np.atleast_1d(axes)[0].set_ylabel("percent")
    np.atleast_1d(axes)[-1].legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    files["metrics_png"] = out / "metrics.png"
    fig.savefig(files["metrics_png"], dpi=100)
    plt.close(fig)
    gaps = {run: gap_report(r["val-seen"], r["val-unseen"]) for run, r in runs.items()
            if "val-seen" in r and "val-unseen" in r}
    if gaps:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for i, run in enumerate(gaps):
            ax.bar(np.arange(len(METRICS)) + i * 0.8 / len(gaps), [gaps[run][m] for m in METRICS],
                   0.8 / len(gaps), label=run)
        ax.set_xticks(np.arange(len(METRICS)) + 0.4 - 0.4 / len(gaps), METRICS)
        ax.set_ylabel("|seen - unseen|")
        ax.legend(fontsize=7)
        fig.tight_layout()
        files["gaps_png"] = out / "gaps.png"
        fig.savefig(files["gaps_png"], dpi=100)
        plt.close(fig)
    return files


def plot_history(path, history: list[dict], keys=("loss", "il", "rl")) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for key in keys:
        pts = [(r["iter"], r[key]) for r in history if r.get(key) is not None]
        if pts:
            it, val = zip(*pts)
            ax.plot(it, val, label=key, lw=1)
    ax.set_xlabel("iteration")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
