"""Deterministic report emission: CSV tables, markdown tables, run metadata.

Numbers are formatted with a fixed '%.6g' so reports are byte-identical under
fixed seeds. Wall-clock timings never enter these files; they go to the
separate timings.csv sidecar.
"""

from __future__ import annotations

import json
import os
import subprocess

__all__ = ["fmt", "write_csv", "write_markdown_table", "write_run_meta",
           "write_timings", "report_header_lines"]


def fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> list[str]:
    """One metric per column; returns the column order used."""
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    with open(path, "w") as f:
        f.write(",".join(columns) + "\n")
        for r in rows:
            f.write(",".join(fmt(r.get(c, "")) for c in columns) + "\n")
    return columns


def write_markdown_table(path, rows: list[dict], columns: list[str] | None = None,
                         title: str = "", header_notes: list[str] | None = None) -> None:
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w") as f:
        if title:
            f.write(f"# {title}\n\n")
        for note in header_notes or []:
            f.write(f"> {note}\n")
        if header_notes:
            f.write("\n")
        f.write("| " + " | ".join(columns) + " |\n")
        f.write("|" + "|".join("---" for _ in columns) + "|\n")
        for r in rows:
            f.write("| " + " | ".join(fmt(r.get(c, "")) for c in columns) + " |\n")


def report_header_lines(tol=None) -> list[str]:
    lines = [
        "conventions: detection over positive clips; false alarms per clip over "
        "negative clips only; where/when over all detections on positive clips "
        "(matched greedily by onset then region hop distance); what-errors over "
        "matched pairs; torque direction is planar-degenerate (0/180 by sign).",
    ]
    if tol is not None:
        lines.append(
            f"tolerances: +-{tol.link_hops} link (tree hops), "
            f"+-{tol.time_frames} frames, delta={tol.delta}, "
            f"min_duration={tol.min_duration} frames.")
    return lines


def git_describe(cwd=None) -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, cwd=cwd, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def write_run_meta(out_dir, command: str, seed: int, config_snapshot: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config_snapshot.json"), "w") as f:
        json.dump(config_snapshot, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, "run_meta.json"), "w") as f:
        json.dump({"command": command, "seed": seed, "git": git_describe()},
                  f, indent=2, sort_keys=True)
        f.write("\n")


def write_timings(out_dir, rows: list[dict]) -> None:
    if rows:
        write_csv(os.path.join(out_dir, "timings.csv"), rows)
