"""Family trait datasets and their CSV readers.

Twin files carry the columns ``y1,y2,zygosity`` (zygosity ``MZ`` or ``DZ``,
any case).  Trio files carry ``mother,father,child``.  Other columns are
ignored.  Rows with a missing or non-numeric required field are dropped and
counted, never imputed.
"""

from __future__ import annotations

import csv
import math
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DataError

TWIN_COLUMNS = ("y1", "y2", "zygosity")
TRIO_COLUMNS = ("mother", "father", "child")


@dataclass(frozen=True)
class TwinDataset:
    """MZ and DZ pairs as ``(n, 2)`` arrays."""

    mz: np.ndarray
    dz: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        for name in ("mz", "dz"):
            a = np.asarray(getattr(self, name), dtype=float).reshape(-1, 2)
            if not np.all(np.isfinite(a)):
                raise DataError(f"{name} pairs contain non-finite values")
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        """Number of families (pairs) of both zygosities."""
        return len(self.mz) + len(self.dz)

    @property
    def sizes(self) -> dict[str, int]:
        return {"MZ": len(self.mz), "DZ": len(self.dz)}

    def values(self) -> np.ndarray:
        """Every trait value, pooled."""
        return np.concatenate([self.mz.ravel(), self.dz.ravel()])


@dataclass(frozen=True)
class TrioDataset:
    """Trios as an ``(n, 3)`` array with columns mother, father, child.

    ``shift`` is the amount subtracted from mothers and added to fathers by
    :func:`standardize_trios` (zero when not standardized).
    """

    y: np.ndarray
    dropped: int = 0
    standardized: bool = False
    shift: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.y, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(a)):
            raise DataError("trio values contain non-finite entries")
        object.__setattr__(self, "y", a)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def sizes(self) -> dict[str, int]:
        return {"trios": len(self.y)}

    def values(self) -> np.ndarray:
        return self.y.ravel()


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(s)
    return v


def _rows(path, required):
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        header = [h.strip().lower() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing required column(s) {', '.join(missing)}")
        reader.fieldnames = header
        for row in reader:
            yield row


def read_twins(path) -> TwinDataset:
    """Read a twin CSV file."""
    pairs = {"MZ": [], "DZ": []}
    dropped = 0
    for row in _rows(path, TWIN_COLUMNS):
        try:
            y1, y2 = _float(row["y1"]), _float(row["y2"])
            zyg = (row["zygosity"] or "").strip().upper()
            pairs[zyg].append((y1, y2))
        except (TypeError, ValueError, KeyError, AttributeError):
            dropped += 1
    if not pairs["MZ"] and not pairs["DZ"]:
        raise DataError(f"{path}: no usable rows ({dropped} dropped)")
    return TwinDataset(np.array(pairs["MZ"]), np.array(pairs["DZ"]), dropped)


def read_trios(path) -> TrioDataset:
    """Read a mother-father-child CSV file."""
    trios = []
    dropped = 0
    for row in _rows(path, TRIO_COLUMNS):
        try:
            trios.append(tuple(_float(row[c]) for c in TRIO_COLUMNS))
        except (TypeError, ValueError):
            dropped += 1
    if not trios:
        raise DataError(f"{path}: no usable rows ({dropped} dropped)")
    return TrioDataset(np.array(trios), dropped)


def standardize_trios(data: TrioDataset) -> TrioDataset:
    """Equalize parental means by moving half their difference onto each parent.

    ``D = (mean(mother) - mean(father)) / 2`` is subtracted from every mother
    and added to every father; children are untouched.
    """
    if data.n == 0:
        raise DataError("cannot standardize an empty trio dataset")
    shift = 0.5 * (data.y[:, 0].mean() - data.y[:, 1].mean())
    y = data.y.copy()
    y[:, 0] -= shift
    y[:, 1] += shift
    return replace(data, y=y, standardized=True, shift=data.shift + float(shift))


@contextmanager
def _sink(target):
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="", encoding="utf-8") as fh:
            yield fh


def write_twins(target, data: TwinDataset, labels=None):
    """Write pairs in the format :func:`read_twins` accepts.

    ``target`` is a path or an open text stream.
    """
    with _sink(target) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(TWIN_COLUMNS) + (["component"] if labels is not None else []))
        rows = [(a, b, "MZ") for a, b in data.mz] + [(a, b, "DZ") for a, b in data.dz]
        for i, (a, b, z) in enumerate(rows):
            extra = [int(labels[i])] if labels is not None else []
            w.writerow([repr(float(a)), repr(float(b)), z] + extra)


def write_trios(target, data: TrioDataset, labels=None):
    """Write trios in the format :func:`read_trios` accepts."""
    with _sink(target) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(TRIO_COLUMNS) + (["component"] if labels is not None else []))
        for i, row in enumerate(data.y):
            extra = [int(labels[i])] if labels is not None else []
            w.writerow([repr(float(v)) for v in row] + extra)
