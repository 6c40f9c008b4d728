"""Imputation and generation-quality metrics: masked MSE, ACD, x-Corr."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class MetricConfig:
    max_lag: int = 100
    scope: str = "masked"  # or "full"

    def __post_init__(self):
        if self.max_lag < 1:
            raise ValueError("max_lag must be >= 1")
        if self.scope not in ("masked", "full"):
            raise ValueError("scope must be 'masked' or 'full'")


def _pair(generated, truth):
    # contiguous copies keep BLAS reductions independent of the caller's memory layout
    g = np.ascontiguousarray(generated, dtype=np.float64)
    r = np.ascontiguousarray(truth, dtype=np.float64)
    if g.shape != r.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {r.shape}")
    if g.ndim == 1:
        g, r = g[:, None], r[:, None]
    return g, r


def masked_mse(generated, truth, mask) -> float:
    """Mean squared error over entries with mask == 1."""
    g, r = _pair(generated, truth)
    m = np.asarray(mask)
    if m.ndim == 1:
        m = m[:, None]
    m = np.broadcast_to(m, g.shape) > 0
    if not m.any():
        raise ValueError("mask selects no entries; nothing to score")
    return float(np.mean((g[m] - r[m]) ** 2))


def acf(series, lag: int) -> float:
    """Biased sample autocorrelation: sum_i (x_i - mean)(x_{i+lag} - mean) / sum_i (x_i - mean)^2."""
    x = np.asarray(series, dtype=np.float64)
    M = len(x)
    if not 0 <= lag < M:
        raise ValueError(f"lag {lag} outside [0, {M})")
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        log.warning("zero-variance series; autocorrelation defined as 0")
        return 0.0
    return float(np.dot(xc[: M - lag], xc[lag:]) / denom)


def acf_profile(series, max_lag: int) -> np.ndarray:
    """acf at lags 1..max_lag."""
    x = np.asarray(series, dtype=np.float64)
    M = len(x)
    if max_lag >= M:
        raise ValueError(f"max lag {max_lag} needs a series longer than {max_lag} (got {M})")
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        log.warning("zero-variance series; autocorrelation defined as 0")
        return np.zeros(max_lag)
    return np.array([np.dot(xc[: M - k], xc[k:]) for k in range(1, max_lag + 1)]) / denom


def acd(real, synth, max_lag: int = 100) -> float:
    """Mean |ACF_real - ACF_synth| over channels and lags 1..max_lag."""
    r, s = _pair(real, synth)
    gaps = [np.abs(acf_profile(r[:, c], max_lag) - acf_profile(s[:, c], max_lag)) for c in range(r.shape[1])]
    return float(np.mean(gaps))


def _corr_matrix(x: np.ndarray) -> np.ndarray:
    xc = x - x.mean(axis=0)
    norms = np.sqrt(np.sum(xc * xc, axis=0))
    const = norms == 0
    if const.any():
        log.warning("constant channel(s) %s; their correlations are treated as 0", np.flatnonzero(const).tolist())
    safe = np.where(const, 1.0, norms)
    corr = (xc.T @ xc) / np.outer(safe, safe)
    corr[const, :] = 0.0
    corr[:, const] = 0.0
    return corr


def xcorr_diff(real, synth) -> float:
    """Mean |corr_real - corr_synth| over unordered channel pairs."""
    r, s = _pair(real, synth)
    C = r.shape[1]
    if C < 2:
        raise ValueError("cross-correlation needs at least two channels")
    iu = np.triu_indices(C, k=1)
    return float(np.mean(np.abs(_corr_matrix(r)[iu] - _corr_matrix(s)[iu])))


def evaluate(generated, truth, mask, cfg: MetricConfig | None = None) -> dict:
    """All metrics in a fixed key order; ``xcorr`` is omitted for one channel."""
    cfg = cfg or MetricConfig()
    g, r = _pair(generated, truth)
    M, C = g.shape
    if cfg.scope == "masked":
        mse = masked_mse(g, r, mask)
    else:
        mse = float(np.mean((g - r) ** 2))
    lag = min(cfg.max_lag, M - 1)
    out = {"mse": mse, "acd": acd(r, g, lag)}
    if C >= 2:
        out["xcorr"] = xcorr_diff(r, g)
    out["max_lag"] = lag
    out["mse_scope"] = cfg.scope
    out["rows"] = M
    out["channels"] = C
    return out


def format_kv(values: dict) -> str:
    lines = []
    for k, v in values.items():
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def write_metrics(path, values: dict) -> None:
    Path(path).write_text(format_kv(values))


def read_kv(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out
