"""Cyclic encoding of categorical metadata and per-channel signal scaling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def cyclic_encode(k: int, K: int) -> tuple[float, float]:
    """Place category ``k`` of ``K`` on the unit circle; returns (sin, cos)."""
    if K < 1:
        raise ValueError("cardinality must be >= 1")
    if not 0 <= k < K:
        raise ValueError(f"category index {k} outside [0, {K})")
    theta = 2.0 * math.pi * k / K
    return math.sin(theta), math.cos(theta)


def _category_order(values: Sequence[str]) -> list[str]:
    # numeric columns (Year, Hour, ...) sort numerically, anything else keeps
    # first-appearance order, which for calendar-ordered files is the natural one
    seen = list(dict.fromkeys(values))
    try:
        return sorted(seen, key=float)
    except ValueError:
        return seen


@dataclass
class MetadataCodec:
    columns: list[str]
    categories: list[list[str]]
    index: list[dict[str, int]] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = [{c: i for i, c in enumerate(cats)} for cats in self.categories]

    @classmethod
    def fit(cls, columns: Sequence[str], table: Sequence[Sequence[str]]) -> "MetadataCodec":
        """``table`` holds one sequence of string values per column."""
        if len(columns) != len(table):
            raise ValueError("one value column per metadata column expected")
        return cls(list(columns), [_category_order(list(col)) for col in table])

    @property
    def cardinalities(self) -> list[int]:
        return [len(c) for c in self.categories]

    @property
    def width(self) -> int:
        return 2 * len(self.columns)

    def lookup(self, col: int, value: str) -> int:
        try:
            return self.index[col][value]
        except KeyError:
            raise KeyError(
                f"unseen category {value!r} in metadata column {self.columns[col]!r}"
            ) from None

    def to_dict(self) -> dict:
        return {"columns": self.columns, "categories": self.categories}

    @classmethod
    def from_dict(cls, d: dict) -> "MetadataCodec":
        return cls(list(d["columns"]), [list(c) for c in d["categories"]])


def encode_metadata(table: Sequence[Sequence[str]], codec: MetadataCodec) -> np.ndarray:
    """Encode column-major string table into an (M, 2L) array of (sin, cos) pairs."""
    if len(table) != len(codec.columns):
        raise ValueError(f"expected {len(codec.columns)} metadata columns, got {len(table)}")
    M = len(table[0]) if table else 0
    out = np.empty((M, codec.width), dtype=np.float64)
    for col, values in enumerate(table):
        K = len(codec.categories[col])
        lut = np.array([cyclic_encode(k, K) for k in range(K)], dtype=np.float64)
        idx = np.fromiter((codec.lookup(col, v) for v in values), dtype=np.int64, count=M)
        out[:, 2 * col: 2 * col + 2] = lut[idx]
    return out


def decode_metadata(encoded: np.ndarray, codec: MetadataCodec) -> np.ndarray:
    """Nearest-angle inverse of :func:`encode_metadata`; returns category indices."""
    M = encoded.shape[0]
    out = np.empty((M, len(codec.columns)), dtype=np.int64)
    for col, cats in enumerate(codec.categories):
        K = len(cats)
        theta = np.arctan2(encoded[:, 2 * col], encoded[:, 2 * col + 1])
        out[:, col] = np.rint(theta / (2.0 * np.pi) * K).astype(np.int64) % K
    return out


@dataclass
class SignalScaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SignalScaler":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_scaler(train_signals: np.ndarray) -> SignalScaler:
    x = np.asarray(train_signals, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty training split")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return SignalScaler(mean, std)


def apply_scaler(x: np.ndarray, scaler: SignalScaler) -> np.ndarray:
    return scaler.transform(x)


def invert_scaler(z: np.ndarray, scaler: SignalScaler) -> np.ndarray:
    return scaler.inverse(z)
