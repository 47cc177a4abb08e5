"""Report rendering: delimited tables, markdown summaries, and figures.

Measured results are always kept separate from the full-scale reference
numbers (REFERENCE_* below), which come from much larger corpora and are
included for orientation only, never reproduced at desk scale.

All rendering is deterministic: rows are sorted, no timestamps are written,
and figure metadata is pinned, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

_SAVEFIG_KW = {"dpi": 120, "metadata": {"Software": "advleak"}}

# Full-scale reference results (Twitter corpora, 160K+ training tweets).
# Not desk-reproducible; rendered beside measured numbers with this label.
REFERENCE_LABEL = "full-scale reference (not reproduced here)"

REFERENCE_DIRECT = [
    # corpus, task, accuracy
    ("DIAL", "sentiment", 67.4),
    ("DIAL", "mention", 81.2),
    ("DIAL", "race (protected)", 83.9),
    ("PAN16", "mention", 77.5),
    ("PAN16", "gender (protected)", 67.7),
    ("PAN16", "age (protected)", 64.8),
]

REFERENCE_LEAKAGE = [
    # corpus, task, protected, balanced (task acc, leakage), unbalanced (task acc, leakage)
    ("DIAL", "sentiment", "race", 67.4, 64.5, 79.5, 73.5),
    ("DIAL", "mention", "race", 81.2, 71.5, 86.0, 73.8),
    ("PAN16", "mention", "gender", 77.5, 60.1, 76.8, 64.0),
    ("PAN16", "mention", "age", 74.7, 59.4, 77.5, 59.7),
]

REFERENCE_ADVERSARIAL = [
    # corpus, task, protected, task acc, attacker acc, delta
    ("DIAL", "sentiment", "race", 64.7, 56.0, 5.0),
    ("DIAL", "mention", "race", 81.5, 63.1, 9.2),
    ("PAN16", "mention", "gender", 75.6, 58.5, 8.0),
    ("PAN16", "mention", "age", 72.5, 57.3, 6.9),
]

REFERENCE_FUSION = [
    # rnn source, embedding source, attacker accuracy
    ("leaky", "leaky", 64.5),
    ("leaky", "guarded", 67.8),
    ("guarded", "leaky", 59.3),
    ("guarded", "guarded", 54.8),
]

REFERENCE_OVERFIT_DELTA = [
    ("DIAL", "sentiment", "race", 12.2),
    ("DIAL", "mention", "race", 14.3),
    ("PAN16", "mention", "gender", 8.1),
    ("PAN16", "mention", "age", 9.7),
]


def _fmt(v, digits=1):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def markdown_table(headers, rows):
    lines = ["| " + " | ".join(headers) + " |"]
    lines.append("|" + "|".join("---" for _ in headers) + "|")
    for row in rows:
        lines.append("| " + " | ".join(str(c) for c in row) + " |")
    return "\n".join(lines) + "\n"


def leakage_table_rows(entries, bold_best=True):
    """Table rows in the mitigation-summary layout.

    Each entry: dict with method, parameter, task_acc, abs_leakage, delta,
    and optional unstable flag. Within each method the smallest |leakage|
    (the most oblivious classifier) is bolded.
    """
    entries = sorted(entries, key=lambda e: (e["method"], str(e["parameter"])))
    best = {}
    for e in entries:
        leak = e.get("abs_leakage")
        if leak is None:
            continue
        cur = best.get(e["method"])
        if cur is None or leak < cur:
            best[e["method"]] = leak
    rows = []
    for e in entries:
        leak = e.get("abs_leakage")
        leak_s = _fmt(None if leak is None else 100 * leak)
        if (
            bold_best
            and leak is not None
            and best.get(e["method"]) == leak
        ):
            leak_s = f"**{leak_s}**"
        if e.get("unstable"):
            leak_s += " (unstable)"
        rows.append(
            (
                e["method"],
                _fmt(e["parameter"]),
                _fmt(100 * e["task_acc"]) if e.get("task_acc") is not None else "-",
                leak_s,
                _fmt(None if e.get("delta") is None else 100 * e["delta"]),
            )
        )
    return rows


LEAKAGE_HEADERS = ("Method", "Parameter", "Task Acc", "|Leakage| x100", "Delta x100")


def write_delimited(path, headers, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(headers)
        for row in rows:
            w.writerow(row)


def fig_training_curves(stats, path, title="training curves"):
    """Per-epoch main-task and adversary dev accuracy (the accuracy-curve figure)."""
    epochs = [r["epoch"] for r in stats]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [r["dev_acc"] for r in stats], label="main task (dev)")
    ax.plot(epochs, [r["train_acc"] for r in stats], label="main task (train)", ls="--")
    n_adv = len(stats[0]["adv_dev_acc"]) if stats else 0
    for j in range(n_adv):
        ax.plot(
            epochs,
            [r["adv_dev_acc"][j] for r in stats],
            label=f"adversary {j} (dev)",
            alpha=0.8,
        )
    ax.axhline(0.5, color="gray", lw=0.8, ls=":")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KW)
    plt.close(fig)


def fig_leakage_bars(entries, path, title="attacker recovery beyond chance"):
    entries = sorted(entries, key=lambda e: (e["method"], str(e["parameter"])))
    labels = [f"{e['method']}\n{e['parameter']}" for e in entries]
    values = [100 * (e.get("abs_leakage") or 0.0) for e in entries]
    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(entries)), 4))
    ax.bar(range(len(entries)), values, color="#4878b0")
    ax.set_xticks(range(len(entries)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("|leakage| x100")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KW)
    plt.close(fig)


def load_run(run_dir):
    """Collect whatever artifacts a run directory holds."""
    out = {"run_dir": run_dir, "name": os.path.basename(os.path.normpath(run_dir))}
    stats_path = os.path.join(run_dir, "stats.jsonl")
    if os.path.exists(stats_path):
        with open(stats_path, encoding="utf-8") as f:
            out["stats"] = [json.loads(line) for line in f if line.strip()]
    audit_path = os.path.join(run_dir, "audit.json")
    if os.path.exists(audit_path):
        with open(audit_path, encoding="utf-8") as f:
            out["audit"] = json.load(f)
    cfg_path = os.path.join(run_dir, "config.txt")
    if os.path.exists(cfg_path):
        with open(cfg_path, encoding="utf-8") as f:
            out["config_text"] = f.read()
    return out


def render_report(run_dirs, out_dir):
    """Consolidated markdown + CSV + figures for a set of completed runs."""
    os.makedirs(out_dir, exist_ok=True)
    runs = [load_run(d) for d in sorted(run_dirs)]
    written = []
    md = ["# Leakage audit report", ""]
    if not runs:
        md.append("No runs found.")
    entries = []
    missing = []
    for run in runs:
        if "audit" not in run and "stats" not in run:
            missing.append(run["run_dir"])
            continue
        md.append(f"## Run `{run['name']}`")
        md.append("")
        if "stats" in run and run["stats"]:
            fig_path = os.path.join(out_dir, f"{run['name']}_curves.png")
            fig_training_curves(run["stats"], fig_path, title=run["name"])
            written.append(fig_path)
            md.append(f"![training curves]({os.path.basename(fig_path)})")
            md.append("")
            last = run["stats"][-1]
            md.append(
                f"Final epoch {last['epoch']}: main dev acc {_fmt(100 * last['dev_acc'])}, "
                f"adversary dev acc "
                f"{', '.join(_fmt(100 * a) for a in last['adv_dev_acc']) or '-'}"
            )
            md.append("")
        if "audit" in run:
            a = run["audit"]
            entries.append(
                {
                    "method": a.get("method", run["name"]),
                    "parameter": a.get("parameter", "-"),
                    "task_acc": a.get("main_task_acc"),
                    "abs_leakage": a.get("abs_leakage"),
                    "delta": a.get("delta"),
                    "unstable": a.get("unstable", False),
                }
            )
    if entries:
        rows = leakage_table_rows(entries)
        md.append("## Measured leakage")
        md.append("")
        md.append(markdown_table(LEAKAGE_HEADERS, rows))
        csv_path = os.path.join(out_dir, "leakage.csv")
        write_delimited(csv_path, LEAKAGE_HEADERS, leakage_table_rows(entries, bold_best=False))
        written.append(csv_path)
        bars_path = os.path.join(out_dir, "leakage_bars.png")
        fig_leakage_bars(entries, bars_path)
        written.append(bars_path)
        md.append(f"![leakage]({os.path.basename(bars_path)})")
        md.append("")
    if missing:
        md.append("## Missing artifacts")
        md.extend(f"- {m}" for m in missing)
        md.append("")
    md.append(f"## {REFERENCE_LABEL}")
    md.append("")
    md.append("### Direct single-task training")
    md.append(
        markdown_table(
            ("Corpus", "Task", "Accuracy"),
            [(c, t, _fmt(a)) for c, t, a in REFERENCE_DIRECT],
        )
    )
    md.append("### Leakage without an adversary")
    md.append(
        markdown_table(
            (
                "Corpus",
                "Task",
                "Protected",
                "Task Acc (bal)",
                "Leakage (bal)",
                "Task Acc (unbal)",
                "Leakage (unbal)",
            ),
            [tuple(map(_fmt, row)) for row in REFERENCE_LEAKAGE],
        )
    )
    md.append("### Adversarial training")
    md.append(
        markdown_table(
            ("Corpus", "Task", "Protected", "Task Acc", "Attacker", "Delta"),
            [tuple(map(_fmt, row)) for row in REFERENCE_ADVERSARIAL],
        )
    )
    md.append("### Encoder fusion (attacker accuracy)")
    md.append(
        markdown_table(
            ("RNN source", "Embedding source", "Attacker Acc"),
            [tuple(map(_fmt, row)) for row in REFERENCE_FUSION],
        )
    )
    md.append("### Train-set 90/10 held-out attacker deltas")
    md.append(
        markdown_table(
            ("Corpus", "Task", "Protected", "Delta"),
            [tuple(map(_fmt, row)) for row in REFERENCE_OVERFIT_DELTA],
        )
    )
    report_path = os.path.join(out_dir, "report.md")
    with open(report_path, "w", encoding="utf-8") as f:
        f.write("\n".join(md))
    written.append(report_path)
    return written
