"""Writing run artifacts: trajectory, events, diagnostics, report and summary.

Floats are written with ``repr`` (shortest round-trip decimal), so reading a
CSV back gives the in-memory samples bit for bit.
"""

from __future__ import annotations

import csv
import json
import subprocess
from pathlib import Path

import numpy as np

from .integrator import EventKind, Run


def _num(x) -> str:
    return repr(float(x))


def build_identifier() -> str:
    """``git describe`` of the source tree, or "unknown" outside a repository."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def trajectory_header(n: int, d: int) -> list[str]:
    xs = [f"x_{i}_{c}" for i in range(n) for c in range(d)]
    vs = [f"v_{i}_{c}" for i in range(n) for c in range(d)]
    return ["t"] + xs + vs


def write_trajectory(path: Path, times, positions, velocities) -> None:
    times = np.asarray(times)
    n, d = positions.shape[1], positions.shape[2]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(n, d))
        for t, X, V in zip(times, positions, velocities):
            w.writerow([_num(t)] + [_num(v) for v in X.ravel()] + [_num(v) for v in V.ravel()])


def read_trajectory(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(times, positions, velocities) from a trajectory.csv."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = header[1:]
    n = 1 + max(int(c.split("_")[1]) for c in cols)
    d = 1 + max(int(c.split("_")[2]) for c in cols)
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), 1 + 2 * n * d)
    return data[:, 0], data[:, 1 : 1 + n * d].reshape(-1, n, d), data[:, 1 + n * d :].reshape(-1, n, d)


def event_lines(run: Run) -> list[str]:
    lines = []
    for e in run.events:
        obj = {"t": float(e.t), "kind": e.kind.value, "members": [int(m) for m in e.members]}
        if e.kind is EventKind.STICKING and e.t_detect is not None:
            obj["t_detect"] = float(e.t_detect)
        lines.append(json.dumps(obj))
    return lines


def write_diagnostics(path: Path, run: Run) -> None:
    s = run.series
    d = s.momentum_series.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "r", "R"] + [f"momentum_{c}" for c in range(d)] + ["max_speed"])
        for k, t in enumerate(s.times):
            w.writerow(
                [_num(t), _num(s.r_series[k]), _num(s.R_series[k])]
                + [_num(p) for p in s.momentum_series[k]]
                + [_num(s.max_speed_series[k])]
            )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def export(run: Run, report: dict | None, directory, config=None, extra: dict | None = None) -> Path:
    """Write all artifacts of ``run`` into ``directory`` (created if missing)."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        traj = run.trajectory
        write_trajectory(out / "trajectory.csv", traj.times, traj.positions, traj.velocities)
        with open(out / "events.jsonl", "w", encoding="utf-8") as fh:
            for line in event_lines(run):
                fh.write(line + "\n")
        write_diagnostics(out / "diagnostics.csv", run)
        if report is not None:
            write_json(out / "report.json", report)
        config = config if config is not None else run.config
        summary = {
            "build": build_identifier(),
            "config": config.to_dict() if config is not None else None,
            "completed": run.completed,
            "n_steps": run.n_steps,
            "n_rejected": run.n_rejected,
            "n_events": len(run.events),
            "n_sticking": len(run.sticking_events),
            "n_collisions": len(run.collision_events),
            "passed": None if report is None else report.get("passed"),
        }
        if extra:
            summary.update(extra)
        write_json(out / "summary.json", summary)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write run artifacts: {exc.strerror}", exc.filename or str(out)) from exc
    return out
