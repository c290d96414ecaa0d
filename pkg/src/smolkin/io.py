"""CSV / JSON writers for run reports and benchmark tables."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List

import numpy as np

from .simulator import RunReport, moments

OBSERVABLE_COLUMNS = ("t", "tau", "N", "M1", "M2", "err", "rhs_evals", "rejects")
ABORT_MARKER = "run.aborted"


def fmt(x: float) -> str:
    return f"{x:.16e}"


def snapshot_name(t: float) -> str:
    return f"snapshot_t{t:.10g}.csv"


def write_observables(report: RunReport, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(OBSERVABLE_COLUMNS) + "\n")
        for r in report.records:
            fh.write(",".join([fmt(r.t), fmt(r.tau), fmt(r.N), fmt(r.M1), fmt(r.M2),
                               fmt(r.err), str(r.rhs_evals), str(r.rejects)]) + "\n")


def write_snapshot(n: np.ndarray, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("k,n_k\n")
        for k, v in enumerate(n, start=1):
            fh.write(f"{k},{fmt(v)}\n")


def read_snapshot(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return data[:, 1]


def read_observables(path) -> Dict[str, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(OBSERVABLE_COLUMNS)}


def summary_dict(report: RunReport) -> dict:
    N, M1, M2 = moments(report.final_state)
    out = {
        "termination": report.termination.value,
        "final_t": fmt(report.final_t),
        "accepted_steps": report.accepted,
        "rejected_steps": report.rejected,
        "rhs_evals": report.rhs_evals,
        "final_N": fmt(N),
        "final_M1": fmt(M1),
        "final_M2": fmt(M2),
        "wall_seconds": round(report.wall_seconds, 6),
    }
    if report.abort_reason is not None:
        out["abort_reason"] = report.abort_reason
        out["abort_tau"] = fmt(report.abort_tau)
    return out


def write_run(report: RunReport, outdir) -> List[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [outdir / "observables.csv", outdir / "summary.json"]
    write_observables(report, written[0])
    for t, n in sorted(report.snapshots.items()):
        p = outdir / snapshot_name(t)
        write_snapshot(n, p)
        written.append(p)
    written[1].write_text(json.dumps(summary_dict(report), indent=2) + "\n")
    marker = outdir / ABORT_MARKER
    if not report.completed:
        marker.write_text(f"{report.abort_reason} at t={fmt(report.final_t)}\n")
        written.append(marker)
    elif marker.exists():
        marker.unlink()
    return written


def format_table(rows: List[str], cols: List[str], cells: Dict[tuple, str], corner="scheme") -> str:
    widths = [max(len(corner), *(len(r) for r in rows))]
    widths += [max(len(c), *(len(cells.get((r, c), "-")) for r in rows)) for c in cols]
    lines = ["  ".join(s.ljust(w) for s, w in zip([corner] + cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        vals = [r] + [cells.get((r, c), "-") for c in cols]
        lines.append("  ".join(s.ljust(w) for s, w in zip(vals, widths)))
    return "\n".join(lines) + "\n"
