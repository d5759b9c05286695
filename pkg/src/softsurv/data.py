"""Delimited-text observation files.

Header ``cluster,left,right,x1,...,xp``.  The window columns encode the
censoring type exactly as the model consumes it: ``left == right`` is an
exact event time, an empty or ``inf`` right field is right censoring at
``left``, ``left == 0`` with finite right is left censoring, anything else
an interval.  Cluster labels are opaque tokens.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from .augment import SubjectRecord

__all__ = ["DataFormatError", "read_records", "write_records", "read_covariates"]


class DataFormatError(ValueError):
    """Malformed observation or covariate file."""


def _parse_float(token: str, where: str) -> float:
    try:
        return float(token)
    except ValueError as exc:
        raise DataFormatError(f"{where}: not a number: {token!r}") from exc


def read_records(path) -> list[SubjectRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:3] != ["cluster", "left", "right"] or len(header) < 4:
        raise DataFormatError(
            f"{path}: header must be cluster,left,right,x1,...  got {','.join(header)}"
        )
    p = len(header) - 3
    records = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3 + p:
            raise DataFormatError(f"{path}:{ln}: expected {3 + p} fields, got {len(row)}")
        where = f"{path}:{ln}"
        left = _parse_float(row[1], where)
        right_tok = row[2].strip().lower()
        right = math.inf if right_tok in ("", "inf") else _parse_float(row[2], where)
        x = np.array([_parse_float(tok, where) for tok in row[3:]])
        try:
            records.append(SubjectRecord(row[0].strip(), left, right, x))
        except ValueError as exc:
            raise DataFormatError(f"{where}: {exc}") from exc
    if not records:
        raise DataFormatError(f"{path}: no observations")
    return records


def write_records(path, records: list[SubjectRecord]) -> None:
    p = len(records[0].x) if records else 0
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["cluster", "left", "right"] + [f"x{i + 1}" for i in range(p)])
        for rec in records:
            right = "inf" if math.isinf(rec.upper) else repr(float(rec.upper))
            out.writerow(
                [rec.cluster, repr(float(rec.lower)), right] + [repr(float(v)) for v in rec.x]
            )


def read_covariates(path) -> np.ndarray:
    """Covariate-only file with header ``x1,...,xp``; one row per subject."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header != [f"x{i + 1}" for i in range(len(header))]:
        raise DataFormatError(f"{path}: header must be x1,...,xp, got {','.join(header)}")
    body = [row for row in rows[1:] if row and any(tok.strip() for tok in row)]
    if not body:
        raise DataFormatError(f"{path}: no covariate rows")
    mat = []
    for ln, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataFormatError(f"{path}:{ln}: expected {len(header)} fields")
        mat.append([_parse_float(tok, f"{path}:{ln}") for tok in row])
    return np.array(mat)
