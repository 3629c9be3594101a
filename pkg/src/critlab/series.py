"""Uniformly sampled time series and the Gaussian noise description."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian white noise with ``E[eta(t) eta(t')] = sigma**2 delta(t - t')``."""

    sigma: float
    kind: str = "gaussian-white"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.kind != "gaussian-white":
            raise ValueError(f"unsupported noise kind {self.kind!r}")


@dataclass
class TimeSeries:
    dt: float
    values: np.ndarray
    labels: Sequence[str] | None = field(default=None)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValueError("values must be a sequence of equal-length vectors")
        self.values = v
        if self.labels is not None and len(self.labels) != v.shape[1]:
            raise ValueError("one label per component expected")

    def __len__(self):
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def component(self, i: int = 0) -> np.ndarray:
        return self.values[:, i]

    def column_names(self) -> list[str]:
        if self.labels is not None:
            return list(self.labels)
        return [f"x{i}" for i in range(self.dim)]

    def to_csv(self, path: str | Path) -> None:
        """Write ``t,x0,x1,...`` with ``t = i*dt`` at full precision."""
        write_columns(path, ["t", *self.column_names()], [self.times, *self.values.T])

    @classmethod
    def from_csv(cls, path: str | Path) -> TimeSeries:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
        labels = header[1:]
        if labels == [f"x{i}" for i in range(len(labels))]:
            labels = None
        return cls(dt, data[:, 1:], labels)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_columns(path: str | Path, header: Sequence[str], columns: Sequence[Sequence]) -> None:
    """Write equal-length columns as CSV, floats in round-trip precision."""
    cols = [np.asarray(c) for c in columns]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns must share one length")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        fmts = [_column_formatter(c) for c in cols]
        for i in range(n):
            fh.write(",".join(f(c[i]) for f, c in zip(fmts, cols)) + "\n")


def _column_formatter(col: np.ndarray):
    if col.dtype == bool:
        return lambda x: "1" if x else "0"
    if np.issubdtype(col.dtype, np.integer):
        return lambda x: str(int(x))
    if np.issubdtype(col.dtype, np.floating):
        return lambda x: repr(float(x))
    return _fmt
