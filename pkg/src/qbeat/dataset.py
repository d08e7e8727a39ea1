"""Polarization-vs-delay datasets and their CSV format.

File format::

    # optional comment lines, e.g. "# t_sigma_ns: 0.16"
    index,t_ns,PL_percent,sigma_percent
    1,0.9,13.0,1.0

Polarization values are percent on disk and fractions in memory.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

__all__ = [
    "HEADER",
    "BeatPoint",
    "BeatDataset",
    "load_dataset",
    "parse_dataset",
    "format_dataset",
    "write_dataset",
    "load_table1",
]

HEADER = ("index", "t_ns", "PL_percent", "sigma_percent")
DEFAULT_T_SIGMA = 0.16
_TABLE1 = "cs8p_table1.csv"


@dataclass(frozen=True)
class BeatPoint:
    index: int
    t: float  # ns
    pl: float  # fraction
    sigma: float  # fraction


@dataclass(frozen=True)
class BeatDataset:
    """Ordered measurement records; file order is preserved.

    ``t_sigma`` is the common delay uncertainty in ns. It is carried as
    metadata and does not enter the chi-squared.
    """

    points: tuple[BeatPoint, ...]
    t_sigma: float = DEFAULT_T_SIGMA

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        seen = set()
        for p in self.points:
            if not p.sigma > 0:
                raise ValidationError(f"point {p.index}: sigma must be > 0, got {p.sigma}")
            if p.index in seen:
                raise ValidationError(f"duplicate index {p.index}")
            seen.add(p.index)

    @classmethod
    def from_arrays(cls, t, pl, sigma, index=None, t_sigma=DEFAULT_T_SIGMA) -> "BeatDataset":
        t = np.asarray(t, dtype=float)
        pl = np.asarray(pl, dtype=float)
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), t.shape)
        if index is None:
            index = range(1, len(t) + 1)
        return cls(
            tuple(BeatPoint(int(i), float(a), float(b), float(c))
                  for i, a, b, c in zip(index, t, pl, sigma)),
            t_sigma,
        )

    def __len__(self):
        return len(self.points)

    @property
    def index(self) -> np.ndarray:
        return np.array([p.index for p in self.points], dtype=int)

    @property
    def t(self) -> np.ndarray:
        return np.array([p.t for p in self.points])

    @property
    def pl(self) -> np.ndarray:
        return np.array([p.pl for p in self.points])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([p.sigma for p in self.points])

    def subset(self, order: Sequence[int]) -> "BeatDataset":
        """Dataset with points taken at positions ``order``."""
        return BeatDataset(tuple(self.points[k] for k in order), self.t_sigma)

    def scaled_sigma(self, factor: float) -> "BeatDataset":
        return BeatDataset(
            tuple(BeatPoint(p.index, p.t, p.pl, p.sigma * factor) for p in self.points),
            self.t_sigma,
        )


def _parse_meta(comment: str, meta: dict):
    body = comment.lstrip("#").strip()
    key, sep, value = body.partition(":")
    if sep and key.strip() == "t_sigma_ns":
        try:
            meta["t_sigma"] = float(value)
        except ValueError:
            pass


def parse_dataset(lines: Iterable[str]) -> BeatDataset:
    meta: dict = {}
    header_seen = False
    points = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            _parse_meta(line, meta)
            continue
        fields = next(csv.reader([line]))
        if not header_seen:
            if tuple(f.strip() for f in fields) != HEADER:
                raise ParseError(f"expected header {','.join(HEADER)!r}, got {line!r}", lineno, 1)
            header_seen = True
            continue
        if len(fields) != len(HEADER):
            raise ParseError(f"expected {len(HEADER)} fields, got {len(fields)}", lineno,
                             min(len(fields), len(HEADER)) + 1)
        try:
            index = int(fields[0])
        except ValueError:
            raise ParseError(f"bad index {fields[0]!r}", lineno, 1) from None
        values = []
        for col, text in enumerate(fields[1:], start=2):
            try:
                values.append(float(text))
            except ValueError:
                raise ParseError(f"bad number {text!r}", lineno, col) from None
        t, pl_pct, sig_pct = values
        points.append(BeatPoint(index, t, pl_pct / 100.0, sig_pct / 100.0))
    if not header_seen:
        raise ParseError("empty dataset: no header line", 1, 1)
    if not points:
        raise ParseError("dataset has a header but no rows")
    return BeatDataset(tuple(points), meta.get("t_sigma", DEFAULT_T_SIGMA))


def load_dataset(path: str | os.PathLike) -> BeatDataset:
    """Read a dataset CSV, converting percent columns to fractions."""
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_dataset(fh)


def load_table1() -> BeatDataset:
    """The bundled 37-point Cs 8p 2P3/2 dataset."""
    text = resources.files("qbeat.data").joinpath(_TABLE1).read_text(encoding="utf-8")
    return parse_dataset(io.StringIO(text))


def format_dataset(records, comments: Sequence[str] = ()) -> str:
    """Render ``(index, t_ns, pl_fraction, sigma_fraction)`` records as CSV text."""
    out = io.StringIO()
    for c in comments:
        out.write(f"# {c}\n")
    out.write(",".join(HEADER) + "\n")
    for index, t, pl, sigma in records:
        # shortest round-trip float repr, locale independent
        out.write(f"{int(index)},{float(t)!r},{100.0 * float(pl)!r},{100.0 * float(sigma)!r}\n")
    return out.getvalue()


def write_dataset(path: str | os.PathLike, records, comments: Sequence[str] = ()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(format_dataset(records, comments))
