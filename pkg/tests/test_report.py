"""Report building blocks: tables, bolding rule, reference constants,
figure/file determinism."""

import json

import pytest

from advleak.report import (
    LEAKAGE_HEADERS,
    REFERENCE_ADVERSARIAL,
    REFERENCE_DIRECT,
    REFERENCE_FUSION,
    REFERENCE_LABEL,
    REFERENCE_LEAKAGE,
    REFERENCE_OVERFIT_DELTA,
    fig_leakage_bars,
    fig_training_curves,
    leakage_table_rows,
    markdown_table,
    render_report,
    write_delimited,
)


def test_markdown_table_layout():
    md = markdown_table(("A", "B"), [(1, 2), ("x", "y")])
    lines = md.splitlines()
    assert lines[0] == "| A | B |"
    assert lines[1] == "|---|---|"
    assert lines[2] == "| 1 | 2 |"


def test_leakage_rows_bold_min_per_method_and_unstable_flag():
    entries = [
        {"method": "adversary", "parameter": "1.0", "task_acc": 0.85,
         "abs_leakage": 0.06, "delta": 0.05},
        {"method": "adversary", "parameter": "2.0", "task_acc": 0.84,
         "abs_leakage": 0.04, "delta": 0.03, "unstable": True},
        {"method": "no adversary", "parameter": "-", "task_acc": 0.86,
         "abs_leakage": 0.09, "delta": None},
    ]
    rows = leakage_table_rows(entries)
    by_param = {r[1]: r for r in rows}
    assert by_param["2.0"][3] == "**4.0** (unstable)"  # min within its method
    assert by_param["1.0"][3] == "6.0"
    assert by_param["-"][3] == "**9.0**"  # sole entry of its method
    assert by_param["-"][4] == "-"  # missing delta renders as dash


def test_write_delimited_csv(tmp_path):
    p = tmp_path / "t.csv"
    write_delimited(p, ("a", "b"), [(1, 2)])
    assert p.read_bytes() == b"a,b\r\n1,2\r\n"


def test_reference_constants_full_scale_values():
    # Static full-scale reference numbers, clearly labeled as not reproduced.
    assert "not reproduced" in REFERENCE_LABEL
    direct = {(c, t): a for c, t, a in REFERENCE_DIRECT}
    assert direct[("DIAL", "sentiment")] == 67.4
    assert direct[("DIAL", "mention")] == 81.2
    assert direct[("DIAL", "race (protected)")] == 83.9
    assert direct[("PAN16", "mention")] == 77.5
    assert direct[("PAN16", "gender (protected)")] == 67.7
    assert direct[("PAN16", "age (protected)")] == 64.8
    adv = {(c, t, p): (ta, at, d) for c, t, p, ta, at, d in REFERENCE_ADVERSARIAL}
    assert adv[("DIAL", "sentiment", "race")] == (64.7, 56.0, 5.0)
    fusion = dict(((r, e), a) for r, e, a in REFERENCE_FUSION)
    assert fusion[("leaky", "guarded")] == 67.8
    assert fusion[("guarded", "leaky")] == 59.3
    assert fusion[("leaky", "leaky")] == 64.5
    assert fusion[("guarded", "guarded")] == 54.8
    overfit = {(c, t, p): d for c, t, p, d in REFERENCE_OVERFIT_DELTA}
    assert overfit[("DIAL", "sentiment", "race")] == 12.2
    assert overfit[("PAN16", "mention", "age")] == 9.7
    bal = {(c, t, p): (tb, lb) for c, t, p, tb, lb, tu, lu in REFERENCE_LEAKAGE}
    assert bal[("DIAL", "sentiment", "race")] == (67.4, 64.5)
    assert bal[("PAN16", "mention", "gender")] == (77.5, 60.1)


def fake_stats(n_adv=1):
    return [
        {
            "epoch": e,
            "train_loss": 0.7 - 0.01 * e,
            "train_acc": 0.5 + 0.02 * e,
            "dev_loss": 0.7,
            "dev_acc": 0.5 + 0.015 * e,
            "adv_dev_acc": [0.5] * n_adv,
            "seconds": 1.0,
            "unstable": False,
        }
        for e in range(4)
    ]


def test_figures_are_deterministic_bytes(tmp_path):
    stats = fake_stats(n_adv=2)
    p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
    fig_training_curves(stats, p1)
    fig_training_curves(stats, p2)
    assert p1.read_bytes() == p2.read_bytes()
    entries = [
        {"method": "adversary", "parameter": "1.0", "abs_leakage": 0.05},
        {"method": "no adversary", "parameter": "-", "abs_leakage": 0.09},
    ]
    b1, b2 = tmp_path / "c.png", tmp_path / "d.png"
    fig_leakage_bars(entries, b1)
    fig_leakage_bars(entries, b2)
    assert b1.read_bytes() == b2.read_bytes()


def test_render_report_from_run_dirs(tmp_path):
    run = tmp_path / "run1"
    run.mkdir()
    with open(run / "stats.jsonl", "w") as f:
        for rec in fake_stats():
            f.write(json.dumps(rec) + "\n")
    with open(run / "audit.json", "w") as f:
        json.dump(
            {
                "method": "adversary",
                "parameter": "300/1.0/1",
                "main_task_acc": 0.84,
                "abs_leakage": 0.05,
                "delta": 0.04,
                "unstable": False,
            },
            f,
        )
    empty = tmp_path / "empty_run"
    empty.mkdir()
    out = tmp_path / "report"
    written = render_report([str(run), str(empty)], str(out))
    names = {p.split("/")[-1] for p in written}
    assert "report.md" in names and "leakage.csv" in names
    md = (out / "report.md").read_text()
    assert "run1" in md
    assert "Missing artifacts" in md and "empty_run" in md
    assert REFERENCE_LABEL in md
    assert (out / "run1_curves.png").exists()
    assert (out / "leakage_bars.png").exists()
