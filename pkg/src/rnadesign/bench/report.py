"""Text tables and figures for benchmark reports."""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .harness import EvalReport


def default_time_points(timeout: float) -> list[float]:
    pts = [p for p in (1, 10, 60, 600, 1800, 3600, 4 * 3600, 24 * 3600) if p < timeout]
    return pts + [timeout]


def _fmt_time(t: float) -> str:
    if t >= 3600 and t % 3600 == 0:
        return f"{int(t // 3600)}h"
    if t >= 60 and t % 60 == 0:
        return f"{int(t // 60)}min"
    return f"{t:g}s"


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def solved_at_least_table(report: EvalReport, t: Optional[float] = None) -> str:
    ks = list(range(1, report.runs + 1))
    header = ["k"] + [str(k) if k < report.runs else f"all ({k})" for k in ks]
    counts = [report.solved_in_at_least(k, t) for k in ks]
    pct = [f"{100.0 * c / report.n_targets:.0f}%" for c in counts]
    return _table(header, [["solved"] + counts, ["percent"] + pct])


def solved_by_time_table(report: EvalReport, time_points: Optional[Sequence[float]] = None) -> str:
    time_points = list(time_points or default_time_points(report.timeout))
    ks = list(range(1, report.runs + 1))
    header = ["time"] + [f">={k}" for k in ks] + ["solved runs"]
    rows = [[_fmt_time(t)] + [report.solved_in_at_least(k, t) for k in ks] + [report.total_solved_runs(t)]
            for t in time_points]
    return _table(header, rows)


def per_target_table(report: EvalReport) -> str:
    rows = []
    for i in range(report.n_targets):
        recs = [r for r in report.records if r.target_index == i]
        solved = [r for r in recs if r.solved]
        best_time = min((r.solve_time for r in solved), default=None)
        rows.append([i, len(recs[0].target) if recs else "", f"{len(solved)}/{report.runs}",
                     f"{best_time:.2f}" if best_time is not None else "-",
                     min((r.distance for r in recs), default="")])
    return _table(["id", "length", "solved", "best time (s)", "min distance"], rows)


def report_tables(report: EvalReport, time_points=None) -> str:
    parts = [
        f"benchmark {report.benchmark}  solver {report.solver}  targets {report.n_targets}  "
        f"runs {report.runs}  timeout {_fmt_time(report.timeout)}",
        "",
        "Targets solved in at least k runs",
        solved_at_least_table(report),
        "",
        "Targets solved in at least k runs, by time",
        solved_by_time_table(report, time_points),
        "",
        "Per target",
        per_target_table(report),
    ]
    return "\n".join(parts) + "\n"


def solved_curve(report: EvalReport, k: int = 1, n_points: int = 200):
    """(times, counts) for the solved-in-at-least-k step curve."""
    times = sorted(r.solve_time for r in report.records if r.solved)
    grid = np.unique(np.concatenate([[0.0], times, [report.timeout]]))
    if len(grid) > n_points:
        grid = np.unique(np.concatenate([np.geomspace(max(grid[1], 1e-3), report.timeout, n_points), [0.0]]))
    return grid, np.array([report.solved_in_at_least(k, t) for t in grid])


def render_figures(report: EvalReport, out_dir, prefix: str = "report") -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for k in sorted({1, max(1, (report.runs + 1) // 2), report.runs}):
        t, c = solved_curve(report, k)
        ax.step(np.maximum(t, 1e-3), c, where="post", label=f"solved in >= {k} runs")
    ax.set_xscale("log")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("targets solved")
    ax.set_ylim(0, report.n_targets * 1.05)
    ax.set_title(f"{report.benchmark} ({report.solver})")
    ax.legend(frameon=False)
    fig.tight_layout()
    p = out_dir / f"{prefix}_solved_by_time.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ks = np.arange(1, report.runs + 1)
    ax.bar(ks, [report.solved_in_at_least(int(k)) for k in ks], color="0.4")
    ax.set_xlabel("k")
    ax.set_ylabel("targets solved in >= k runs")
    ax.set_xticks(ks)
    fig.tight_layout()
    p = out_dir / f"{prefix}_solved_at_least_k.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths


def write_report(report: EvalReport, out_dir, prefix: str = "report", figures: bool = True) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = out_dir / f"{prefix}_records.jsonl"
    report.to_jsonl(records)
    tables = out_dir / f"{prefix}_tables.txt"
    tables.write_text(report_tables(report))
    out = {"records": records, "tables": tables}
    if figures:
        out["figures"] = render_figures(report, out_dir, prefix)
    return out
