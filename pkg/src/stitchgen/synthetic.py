"""Small synthetic datasets with an Entity -> Month -> Day metadata hierarchy."""
from __future__ import annotations

import numpy as np

from .dataset import SeriesDataset

KINDS = ("calendar-sines", "ar1-hierarchy")
DAY_PERIOD = 30
MONTH_PERIOD = 12


def entity_names(n: int) -> list[str]:
    return [chr(ord("A") + i) if n <= 26 else f"E{i}" for i in range(n)]


def channel_phase(c: int) -> float:
    return c * np.pi / 4


def entity_amplitude(e: int) -> float:
    return 1.0 + 0.5 * e


def _calendar(entities: int, months: int, days: int):
    ent, mon, day = np.meshgrid(np.arange(entities), np.arange(months), np.arange(days), indexing="ij")
    return ent.ravel(), mon.ravel(), day.ravel()


def calendar_sines(entities: int = 3, months: int = 12, days: int = 30, channels: int = 2,
                   noise: float = 0.1, seed: int = 0) -> SeriesDataset:
    """Per entity e and channel c::

        A_e * sin(2 pi d / 30 + phi_c) + 0.5 A_e * sin(2 pi m / 12 + phi_c) + noise * N(0, 1)

    with A_e = 1 + 0.5 e and phi_c = c pi / 4.
    """
    rng = np.random.default_rng(seed)
    ent, mon, day = _calendar(entities, months, days)
    amp = 1.0 + 0.5 * ent
    cols = []
    for c in range(channels):
        phi = channel_phase(c)
        clean = amp * np.sin(2 * np.pi * day / DAY_PERIOD + phi) + 0.5 * amp * np.sin(
            2 * np.pi * mon / MONTH_PERIOD + phi)
        cols.append(clean)
    signals = np.stack(cols, axis=1) + noise * rng.standard_normal((len(ent), channels))
    return _wrap(ent, mon, day, signals, entities)


def ar1_hierarchy(entities: int = 3, months: int = 12, days: int = 30, channels: int = 2,
                  phi: float = 0.8, noise: float = 0.3, seed: int = 0) -> SeriesDataset:
    """Entity level plus a monthly sinusoid plus AR(1) noise shared across channels."""
    rng = np.random.default_rng(seed)
    ent, mon, day = _calendar(entities, months, days)
    n = len(ent)
    common = np.empty(n)
    state = 0.0
    shocks = rng.standard_normal(n)
    for i in range(n):
        state = phi * state + noise * shocks[i]
        common[i] = state
    cols = []
    for c in range(channels):
        own = 0.5 * noise * rng.standard_normal(n)
        cols.append(ent * 1.0 + 0.5 * np.sin(2 * np.pi * mon / MONTH_PERIOD + channel_phase(c)) + common + own)
    return _wrap(ent, mon, day, np.stack(cols, axis=1), entities)


def _wrap(ent, mon, day, signals, entities) -> SeriesDataset:
    names = entity_names(entities)
    metadata = [
        [names[e] for e in ent],
        [str(m + 1) for m in mon],
        [str(d + 1) for d in day],
    ]
    return SeriesDataset(metadata, signals, ["Entity", "Month", "Day"],
                         [f"ch{c}" for c in range(signals.shape[1])])


def make_data(kind: str, entities: int = 3, months: int = 12, days: int = 30,
              channels: int = 2, seed: int = 0, length: int | None = None) -> SeriesDataset:
    if kind == "calendar-sines":
        data = calendar_sines(entities, months, days, channels, seed=seed)
    elif kind == "ar1-hierarchy":
        data = ar1_hierarchy(entities, months, days, channels, seed=seed)
    else:
        raise ValueError(f"unknown dataset kind {kind!r}; choose from {KINDS}")
    if length is not None:
        data = data.rows(np.arange(min(length, data.M)))
    return data
