"""Tabular series ingestion, task masks, and sliding windows.

Timesteps are 0-based internally.  A mask value of 1 means "generate this",
0 means "observed".
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

WILDCARD = "*"


@dataclass
class SeriesDataset:
    """Metadata columns (root first) plus an (M, C) signal matrix sharing one timeline."""

    metadata: list[list[str]]
    signals: np.ndarray
    metadata_columns: list[str]
    channel_columns: list[str]

    def __post_init__(self):
        self.signals = np.asarray(self.signals, dtype=np.float64)
        if self.signals.ndim != 2:
            raise ValueError("signals must be a 2-D (M, C) array")
        if len(self.metadata) != len(self.metadata_columns):
            raise ValueError("one metadata value list per metadata column required")
        for name, col in zip(self.metadata_columns, self.metadata):
            if len(col) != self.signals.shape[0]:
                raise ValueError(f"metadata column {name!r} length differs from signal rows")
        if self.signals.shape[1] != len(self.channel_columns):
            raise ValueError("channel name count differs from signal width")

    @property
    def M(self) -> int:
        return self.signals.shape[0]

    @property
    def L(self) -> int:
        return len(self.metadata_columns)

    @property
    def C(self) -> int:
        return self.signals.shape[1]

    def rows(self, index: np.ndarray) -> "SeriesDataset":
        index = np.asarray(index)
        return SeriesDataset(
            [[col[i] for i in index] for col in self.metadata],
            self.signals[index],
            list(self.metadata_columns),
            list(self.channel_columns),
        )


def load_csv(path, metadata_columns: Sequence[str], channel_columns: Sequence[str]) -> SeriesDataset:
    """Read a header-first CSV, keeping file order as the timeline."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row expected") from None
        missing = [c for c in list(metadata_columns) + list(channel_columns) if c not in header]
        if missing:
            raise ValueError(f"{path}: missing column(s) {missing}")
        meta_idx = [header.index(c) for c in metadata_columns]
        chan_idx = [header.index(c) for c in channel_columns]
        metadata: list[list[str]] = [[] for _ in meta_idx]
        signals: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: ragged row ({len(row)} fields, header has {len(header)})")
            for out, i in zip(metadata, meta_idx):
                out.append(row[i].strip())
            vals = []
            for name, i in zip(channel_columns, chan_idx):
                cell = row[i].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {name!r}"
                    ) from None
                if not math.isfinite(v):
                    raise ValueError(f"{path}:{lineno}: non-finite value in column {name!r}")
                vals.append(v)
            signals.append(vals)
    arr = np.asarray(signals, dtype=np.float64).reshape(len(signals), len(channel_columns))
    return SeriesDataset(metadata, arr, list(metadata_columns), list(channel_columns))


def write_csv(data: SeriesDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.metadata_columns + data.channel_columns)
        for i in range(data.M):
            w.writerow([col[i] for col in data.metadata] + [repr(float(v)) for v in data.signals[i]])


def split_by_root(data: SeriesDataset, root_value: str) -> tuple[SeriesDataset, SeriesDataset]:
    """Rows whose root metadata equals ``root_value`` form the test split."""
    root = np.asarray(data.metadata[0])
    hit = root == str(root_value)
    if not hit.any():
        raise ValueError(f"root value {root_value!r} not found in column {data.metadata_columns[0]!r}")
    if hit.all():
        raise ValueError("every row shares the selected root value; training split would be empty")
    return data.rows(np.flatnonzero(~hit)), data.rows(np.flatnonzero(hit))


# -- conditions and masks ---------------------------------------------------

def parse_condition(text: str) -> tuple[str | None, ...]:
    """Parse ``"(2018, *, *, 6)"`` into ``("2018", None, None, "6")``."""
    body = text.strip()
    if body.startswith("(") and body.endswith(")"):
        body = body[1:-1]
    parts = [p.strip() for p in body.split(",")]
    if not parts or any(p == "" for p in parts):
        raise ValueError(f"malformed condition {text!r}")
    return tuple(None if p in (WILDCARD, "∗") else p for p in parts)


def format_condition(cond: Sequence[str | None]) -> str:
    return "(" + ", ".join(WILDCARD if c is None else c for c in cond) + ")"


def _same_category(a: str, b: str) -> bool:
    if a == b:
        return True
    try:
        return float(a) == float(b)
    except ValueError:
        return False


def condition_to_mask(data: SeriesDataset, cond: Sequence[str | None]) -> np.ndarray:
    """1 at every row whose metadata matches all fixed entries of ``cond``."""
    if len(cond) != data.L:
        raise ValueError(f"condition has {len(cond)} entries, dataset has {data.L} metadata columns")
    mask = np.ones(data.M, dtype=bool)
    for col, (name, want) in enumerate(zip(data.metadata_columns, cond)):
        if want is None:
            continue
        values = data.metadata[col]
        uniq = set(values)
        matches = {v for v in uniq if _same_category(v, str(want))}
        if not matches:
            log.warning("condition value %r not present in column %r; mask is empty", want, name)
            return np.zeros(data.M, dtype=np.int8)
        mask &= np.fromiter((v in matches for v in values), dtype=bool, count=data.M)
    return mask.astype(np.int8)


def union_masks(*masks: np.ndarray) -> np.ndarray:
    out = np.zeros_like(masks[0], dtype=np.int8)
    for m in masks:
        out |= np.asarray(m, dtype=np.int8)
    return out


def random_mask(M: int, fraction: float, seed: int) -> np.ndarray:
    """Mask exactly round-half-up(fraction * M) rows, chosen without replacement."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    k = int(math.floor(fraction * M + 0.5))
    rng = np.random.default_rng(seed)
    mask = np.zeros(M, dtype=np.int8)
    mask[rng.choice(M, size=k, replace=False)] = 1
    return mask


# -- windows ----------------------------------------------------------------

def window_count(M: int, w: int, s: int) -> int:
    return -(-(M - w) // s) + 1


def window_starts(M: int, w: int, s: int) -> np.ndarray:
    if w > M:
        raise ValueError(f"window width {w} exceeds sequence length {M}")
    if w < 1 or s < 1:
        raise ValueError("window width and stride must be >= 1")
    if s > w:
        raise ValueError(f"stride {s} larger than window width {w} leaves gaps")
    J = window_count(M, w, s)
    return np.minimum(np.arange(J) * s, M - w)


@dataclass
class WindowSet:
    w: int
    s: int
    M: int
    starts: np.ndarray
    x: np.ndarray     # (J, w, C) signal views (values at masked rows are ignored)
    a: np.ndarray     # (J, w, 2L) encoded metadata
    m: np.ndarray     # (J, w, C) mask, 1 = generate

    @property
    def J(self) -> int:
        return len(self.starts)

    def overlap(self, j: int) -> tuple[int, int]:
        """(length, offset into window j-1) of the overlap between windows j-1 and j."""
        if j == 0:
            return 0, 0
        d = int(self.starts[j] - self.starts[j - 1])
        return max(self.w - d, 0), d


def _expand_mask(mask: np.ndarray, M: int, C: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape == (M,):
        mask = np.repeat(mask[:, None], C, axis=1)
    if mask.shape != (M, C):
        raise ValueError(f"mask shape {mask.shape} matches neither ({M},) nor ({M}, {C})")
    return mask


def make_windows(x: np.ndarray, a: np.ndarray | None, mask: np.ndarray, w: int, s: int) -> WindowSet:
    x = np.asarray(x, dtype=np.float64)
    M, C = x.shape
    starts = window_starts(M, w, s)
    if a is None:
        a = np.zeros((M, 0))
    if a.shape[0] != M:
        raise ValueError("metadata rows differ from signal rows")
    m = _expand_mask(mask, M, C)
    idx = starts[:, None] + np.arange(w)[None, :]
    return WindowSet(w, s, M, starts, x[idx], np.asarray(a, dtype=np.float64)[idx], m[idx])


def merge_windows(windows: np.ndarray, starts: np.ndarray, M: int, rule: str = "first") -> np.ndarray:
    """Stitch (J, w, C) window estimates back into an (M, C) sequence.

    ``rule="first"`` keeps window 1 whole and appends only the timesteps each
    later window adds beyond its predecessor's end.  ``rule="last"`` takes
    every timestep from the covering window with the largest start.
    """
    windows = np.asarray(windows, dtype=np.float64)
    starts = np.asarray(starts)
    if windows.ndim != 3 or windows.shape[0] != len(starts):
        raise ValueError("need one (w, C) estimate per window start")
    J, w, C = windows.shape
    if J == 0 or starts[0] != 0 or starts[-1] + w != M:
        raise ValueError("window starts do not cover the sequence")
    out = np.empty((M, C), dtype=np.float64)
    if rule == "first":
        out[:w] = windows[0]
        end = w
        for j in range(1, J):
            new_end = starts[j] + w
            if new_end > end:
                out[end:new_end] = windows[j][end - starts[j]:]
                end = new_end
        if end != M:
            raise ValueError("window starts leave a gap")
    elif rule == "last":
        for j in range(J):
            out[starts[j]:starts[j] + w] = windows[j]
    else:
        raise ValueError(f"unknown merge rule {rule!r}")
    return out
