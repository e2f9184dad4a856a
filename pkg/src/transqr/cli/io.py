"""Dataset and result tables as CSV files."""

from __future__ import annotations

import csv
import math

import numpy as np

from ..core import DomainDataset, InvalidInputError


class DatasetParseError(InvalidInputError):
    pass


RESULT_HEADER = ("method", "tau", "h", "num_transferable", "replication", "l2_error",
                 "detection_correct", "runtime_ms")


def fmt(x: float) -> str:
    """Shortest text that parses back to the same double."""
    return repr(float(x))


def write_dataset_csv(dataset: DomainDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y"] + [f"z{j}" for j in range(1, dataset.p + 1)])
        for yi, zi in zip(dataset.y, dataset.Z):
            w.writerow([fmt(yi)] + [fmt(v) for v in zi])


def load_dataset_csv(path, domain_id: int = 0) -> DomainDataset:
    """Read a ``y,z1,...,zp`` file; errors name the offending line."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetParseError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    p = len(header) - 1
    if p < 1 or header != ["y"] + [f"z{j}" for j in range(1, p + 1)]:
        raise DatasetParseError(f"{path}:1: header must be y,z1,...,zp")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != p + 1:
            raise DatasetParseError(f"{path}:{lineno}: expected {p + 1} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise DatasetParseError(f"{path}:{lineno}: non-numeric cell") from None
        if not all(math.isfinite(v) for v in vals):
            raise DatasetParseError(f"{path}:{lineno}: NaN or infinite value")
        values.append(vals)
    if not values:
        raise DatasetParseError(f"{path}: no data rows")
    arr = np.array(values)
    return DomainDataset(arr[:, 0], arr[:, 1:], domain_id)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    return "nan" if math.isnan(x) else fmt(x)


def emit_csv(rows, path) -> None:
    """Result rows in the given order, fixed header, round-trippable numbers."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for r in rows:
            w.writerow([r.method, _cell(r.tau), _cell(r.h), _cell(r.num_transferable),
                        _cell(r.replication), _cell(r.l2_error), _cell(r.detection_correct),
                        _cell(r.runtime_ms)])


def read_results_csv(path) -> list:
    from .experiment import ExperimentRow

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RESULT_HEADER:
            raise DatasetParseError(f"{path}:1: unexpected results header")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RESULT_HEADER):
                raise DatasetParseError(f"{path}:{lineno}: expected {len(RESULT_HEADER)} fields")
            try:
                out.append(ExperimentRow(
                    method=row[0], tau=float(row[1]), h=float(row[2]),
                    num_transferable=int(row[3]), replication=int(row[4]),
                    l2_error=float(row[5]),
                    detection_correct=None if row[6] == "" else row[6] == "1",
                    runtime_ms=None if row[7] == "" else float(row[7])))
            except ValueError:
                raise DatasetParseError(f"{path}:{lineno}: malformed row") from None
        return out
