"""Run configuration: defaults < config file < command-line flags.

Config files are flat ``key = value`` lines; ``#`` starts a comment.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data
    data: str = ""
    metadata_columns: str = "Entity,Month,Day"
    channel_columns: str = "ch0,ch1"
    test_root: str = ""
    # task: a condition tuple such as "(C, *, 15)", or a missingness fraction
    condition: str = ""
    missing_frac: float = -1.0
    # schedule
    T: int = 200
    alpha_first: float = 0.9999
    alpha_last: float = 0.98
    sigma_convention: str = "variance"
    # denoiser / training (training stride is always 1)
    window: int = 32
    hidden: int = 64
    step_dim: int = 16
    mix_width: int = 5
    activation: str = "silu"
    epochs: int = 50
    train_batch: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    # sampler
    stride: int = 8
    batch: int = 64
    mode: str = "parallel"
    eta: float = 0.1
    stitch_metric: str = "mse"
    grad_mode: str = "exact"
    symmetric_stitch: bool = False
    merge_rule: str = "first"
    workers: int = 1
    # metrics
    max_lag: int = 100
    mse_scope: str = "masked"
    # run
    seed: int = 0
    checkpoint: str = ""
    out: str = "run"

    @property
    def metadata_list(self) -> list[str]:
        return [c.strip() for c in self.metadata_columns.split(",") if c.strip()]

    @property
    def channel_list(self) -> list[str]:
        return [c.strip() for c in self.channel_columns.split(",") if c.strip()]

    def to_text(self) -> str:
        lines = ["# fully resolved run configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key} (expected {kind})") from None
    return raw


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def resolve(config_path: str | None = None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if config_path:
        try:
            text = Path(config_path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        cfg = dataclasses.replace(cfg, **parse_config_text(text))
    if overrides:
        clean = {}
        for k, v in overrides.items():
            if v is None:
                continue
            clean[k] = _coerce(k, v) if isinstance(v, str) else v
        cfg = dataclasses.replace(cfg, **clean)
    return cfg
