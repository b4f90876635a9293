"""CSV conventions: header row always, floats at 17 significant digits so
values round-trip exactly through text."""

from __future__ import annotations

import csv

import numpy as np

__all__ = ["fmt", "write_rows", "write_points", "read_points",
           "save_run_record", "CsvFormatError"]


class CsvFormatError(ValueError):
    """Malformed CSV input; the message carries the offending line number."""


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if value is None:
        return ""
    return str(value)


def write_rows(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_points(path, points: np.ndarray, labels=None) -> None:
    """Point-set dump with columns x, y and an optional label column."""
    points = np.asarray(points)
    if labels is None:
        write_rows(path, ["x", "y"], points)
    else:
        write_rows(path, ["x", "y", "label"],
                   [(p[0], p[1], l) for p, l in zip(points, labels)])


def read_points(path) -> np.ndarray:
    """Read the x, y columns of a sample CSV; errors carry line numbers."""
    points = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}:1: empty file, header expected")
        try:
            ix, iy = header.index("x"), header.index("y")
        except ValueError:
            raise CsvFormatError(
                f"{path}:1: header {header!r} lacks x and y columns")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                points.append((float(row[ix]), float(row[iy])))
            except (ValueError, IndexError):
                raise CsvFormatError(f"{path}:{lineno}: bad row {row!r}")
    return np.asarray(points, dtype=np.float64).reshape(-1, 2)


def save_run_record(path, record) -> None:
    """Per-iteration trajectory of one chain: iteration, reward, x, y.

    Requires a record produced with ``keep_trajectory``.
    """
    traj = record.chain.trajectory
    if traj is None:
        raise ValueError("record has no trajectory; rerun with keep_trajectory")
    write_rows(path, ["iteration", "reward", "x", "y"],
               [(i, r, p[0], p[1]) for i, (r, p) in
                enumerate(zip(record.chain.reward_history, traj))])
