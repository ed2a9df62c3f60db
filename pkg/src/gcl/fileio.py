"""CSV and JSON persistence.

Formats:
  point pattern      header x1..xd, one point per row
  marked pattern     center_1..center_d, cluster_index, offset_1..offset_d,
                     one row per offset; an empty cluster keeps a single row
                     with empty offset fields
  ensembles          the pattern formats with a leading sample_index column
  trajectory         time column plus one column per recorded statistic

All writers are deterministic: repeatable float formatting, sorted JSON
keys, and no timestamps, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .configurations import (
    ClusterVector,
    GroundConfiguration,
    MarkedConfiguration,
    MarkedPoint,
    Window,
)

__all__ = [
    "write_pattern_csv",
    "read_pattern_csv",
    "write_ensemble_csv",
    "read_ensemble_csv",
    "write_marked_csv",
    "read_marked_csv",
    "write_marked_ensemble_csv",
    "read_marked_ensemble_csv",
    "write_trajectory_csv",
    "write_json",
    "read_json",
]


def _fmt(v: float) -> str:
    # repr of a Python float is the shortest round-trip decimal
    return repr(float(v))


def _pattern_header(d: int) -> list[str]:
    return [f"x{a + 1}" for a in range(d)]


def _marked_header(d: int) -> list[str]:
    return (
        [f"center_{a + 1}" for a in range(d)]
        + ["cluster_index"]
        + [f"offset_{a + 1}" for a in range(d)]
    )


def write_pattern_csv(path, config: GroundConfiguration) -> None:
    d = config.window.dimension
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_pattern_header(d))
        for row in config.points:
            w.writerow([_fmt(v) for v in row])


def read_pattern_csv(path, window: Window) -> GroundConfiguration:
    d = window.dimension
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != _pattern_header(d):
            raise ValueError(f"unexpected pattern header {header}")
        rows = [[float(v) for v in row] for row in r]
    pts = np.asarray(rows) if rows else np.empty((0, d))
    return GroundConfiguration(pts, window)


def write_ensemble_csv(path, ensemble) -> None:
    d = ensemble[0].window.dimension
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index"] + _pattern_header(d))
        for i, config in enumerate(ensemble):
            for row in config.points:
                w.writerow([i] + [_fmt(v) for v in row])


def read_ensemble_csv(path, window: Window, n_samples: int | None = None):
    """Samples with no points leave no rows, so the sample count comes from
    run metadata when trailing empties must survive a round trip."""
    d = window.dimension
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["sample_index"] + _pattern_header(d):
            raise ValueError(f"unexpected ensemble header {header}")
        by_sample: dict[int, list] = {}
        for row in r:
            by_sample.setdefault(int(row[0]), []).append([float(v) for v in row[1:]])
    n = n_samples if n_samples is not None else (max(by_sample) + 1 if by_sample else 0)
    out = []
    for i in range(n):
        rows = by_sample.get(i, [])
        pts = np.asarray(rows) if rows else np.empty((0, d))
        out.append(GroundConfiguration(pts, window))
    return out


def _marked_rows(marked: MarkedConfiguration, prefix: list) -> list:
    rows = []
    for ci, mp in enumerate(marked.marked_points):
        center = [_fmt(v) for v in mp.center]
        if mp.cluster.size == 0:
            rows.append(prefix + center + [ci] + [""] * len(center))
        else:
            for off in mp.cluster.offsets:
                rows.append(prefix + center + [ci] + [_fmt(v) for v in off])
    return rows


def write_marked_csv(path, marked: MarkedConfiguration) -> None:
    d = marked.window.dimension
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_marked_header(d))
        w.writerows(_marked_rows(marked, []))


def _assemble_marked(groups: dict, window: Window) -> MarkedConfiguration:
    d = window.dimension
    mps = []
    for _, (center, offs) in sorted(groups.items()):
        arr = np.asarray(offs) if offs else np.empty((0, d))
        mps.append(MarkedPoint(np.asarray(center), ClusterVector(arr, dimension=d)))
    return MarkedConfiguration(mps, window)


def read_marked_csv(path, window: Window) -> MarkedConfiguration:
    d = window.dimension
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != _marked_header(d):
            raise ValueError(f"unexpected marked header {header}")
        groups: dict[int, tuple] = {}
        for row in r:
            center = [float(v) for v in row[:d]]
            ci = int(row[d])
            entry = groups.setdefault(ci, (center, []))
            if row[d + 1] != "":
                entry[1].append([float(v) for v in row[d + 1:]])
    return _assemble_marked(groups, window)


def write_marked_ensemble_csv(path, marked_list) -> None:
    d = marked_list[0].window.dimension
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index"] + _marked_header(d))
        for i, marked in enumerate(marked_list):
            w.writerows(_marked_rows(marked, [i]))


def read_marked_ensemble_csv(path, window: Window, n_samples: int | None = None):
    d = window.dimension
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["sample_index"] + _marked_header(d):
            raise ValueError(f"unexpected marked ensemble header {header}")
        by_sample: dict[int, dict] = {}
        for row in r:
            si = int(row[0])
            center = [float(v) for v in row[1:1 + d]]
            ci = int(row[1 + d])
            entry = by_sample.setdefault(si, {}).setdefault(ci, (center, []))
            if row[2 + d] != "":
                entry[1].append([float(v) for v in row[2 + d:]])
    n = n_samples if n_samples is not None else (max(by_sample) + 1 if by_sample else 0)
    return [_assemble_marked(by_sample.get(i, {}), window) for i in range(n)]


def write_trajectory_csv(path, summary) -> None:
    k = summary.stats.shape[1]
    header = ["time"] + [f"stat_{j + 1}" for j in range(k)]
    if summary.energies is not None:
        header.append("energy")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(summary.times):
            row = [_fmt(t)] + [_fmt(v) for v in summary.stats[i]]
            if summary.energies is not None:
                row.append(_fmt(summary.energies[i]))
            w.writerow(row)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
