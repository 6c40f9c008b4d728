"""Metadata-conditioned noise predictor and its training loop.

The reference network works timestep-wise on ``[x_t | metadata | step emb]``
rows, with one fixed moving-average mixing layer between the two hidden
layers so each output sees a few neighbouring timesteps::

    h1  = silu(in @ W1 + b1)
    mix = A @ h1                      # A: (w, w) centred moving average
    h2  = silu([h1 | mix] @ W2 + b2)
    out = h2 @ W3 + b3
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .encoding import MetadataCodec, SignalScaler
from .schedule import NoiseSchedule, forward_noise_to, linear_schedule

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "stitchgen-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class DenoiserConfig:
    window: int = 32
    channels: int = 1
    meta_width: int = 0
    step_dim: int = 16
    hidden: int = 64
    mix_width: int = 5
    activation: str = "silu"

    def __post_init__(self):
        if self.step_dim % 2:
            raise ValueError("step embedding dimension must be even")
        if self.activation not in ("silu", "tanh"):
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.window < 1 or self.channels < 1:
            raise ValueError("window and channels must be positive")

    @property
    def in_width(self) -> int:
        return self.channels + self.meta_width + self.step_dim


class StepEmbedding:
    """Sinusoidal diffusion-step embedding with geometric frequencies."""

    def __init__(self, dim: int = 16, max_period: float = 10000.0):
        if dim % 2:
            raise ValueError("embedding dimension must be even")
        self.dim = dim
        half = dim // 2
        self.freqs = np.exp(-np.log(max_period) * np.arange(half) / half)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        ang = t[..., None] * self.freqs
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


def moving_average_matrix(w: int, width: int) -> np.ndarray:
    """Row-normalised centred box filter, truncated at the window edges."""
    half = width // 2
    A = np.zeros((w, w))
    for i in range(w):
        lo, hi = max(0, i - half), min(w, i + half + 1)
        A[i, lo:hi] = 1.0 / (hi - lo)
    return A


class Denoiser:
    def __init__(self, config: DenoiserConfig, seed: int = 0):
        self.config = config
        self.embed = StepEmbedding(config.step_dim)
        self.mix = moving_average_matrix(config.window, config.mix_width)
        self.store = nx.ParameterStore()
        rng = np.random.default_rng(seed)
        H = config.hidden
        shapes = {
            "W1": (config.in_width, H), "b1": (H,),
            "W2": (2 * H, H), "b2": (H,),
            "W3": (H, config.channels), "b3": (config.channels,),
        }
        for name, shape in shapes.items():
            if name.startswith("W"):
                value = rng.standard_normal(shape) / np.sqrt(shape[0])
            else:
                value = np.zeros(shape)
            self.store.add(name, value)

    def _act(self, node):
        return nx.silu(node) if self.config.activation == "silu" else nx.tanh(node)

    def forward(self, graph: nx.Graph, a, x_t: nx.Node, t, params: dict | None = None) -> nx.Node:
        """Predict the noise in ``x_t`` (shape (B, w, C)) and return the output node.

        ``a`` is an array or node of shape (B, w, 2L); ``t`` an int or one int
        per window.  ``params`` are pre-bound parameter nodes (training);
        otherwise the parameters enter the graph as constants.
        """
        cfg = self.config
        if x_t.value.ndim != 3 or x_t.value.shape[1:] != (cfg.window, cfg.channels):
            raise ValueError(f"x_t must have shape (B, {cfg.window}, {cfg.channels}), got {x_t.shape}")
        B = x_t.value.shape[0]
        a_val = a.value if isinstance(a, nx.Node) else np.asarray(a, dtype=np.float64)
        if a_val.shape != (B, cfg.window, cfg.meta_width):
            raise ValueError(f"metadata must have shape ({B}, {cfg.window}, {cfg.meta_width}), got {a_val.shape}")
        t = np.asarray(t)
        if t.ndim == 0:
            t = np.full(B, int(t))
        if t.shape != (B,):
            raise ValueError("need one diffusion step per window")
        emb = np.broadcast_to(self.embed(t)[:, None, :], (B, cfg.window, cfg.step_dim))
        p = params if params is not None else self.store.bind(graph, trainable=False)
        a_node = a if isinstance(a, nx.Node) else graph.constant(a_val)
        inp = nx.concat([x_t, a_node, graph.constant(emb)], axis=-1)
        h1 = self._act(inp @ p["W1"] + p["b1"])
        mixed = graph.constant(self.mix) @ h1
        h2 = self._act(nx.concat([h1, mixed], axis=-1) @ p["W2"] + p["b2"])
        return h2 @ p["W3"] + p["b3"]

    def predict(self, a: np.ndarray, x_t: np.ndarray, t) -> np.ndarray:
        """Gradient-free convenience wrapper around :meth:`forward`."""
        g = nx.Graph()
        return self.forward(g, a, g.constant(x_t), t).value


def denoiser_forward(model: Denoiser, a_window, x_t, t):
    """Single-window forward; returns (eps_hat, graph, x_t node) for gradient requests."""
    g = nx.Graph()
    x_node = g.input(np.asarray(x_t, dtype=np.float64)[None])
    out = model.forward(g, np.asarray(a_window, dtype=np.float64)[None], x_node, t)
    return out.value[0], g, x_node, out


def training_windows(M: int, w: int) -> np.ndarray:
    if w > M:
        raise ValueError(f"window width {w} exceeds training length {M}")
    return np.arange(M - w + 1)


def train(model: Denoiser, x: np.ndarray, a: np.ndarray, sched: NoiseSchedule,
          epochs: int = 50, batch_size: int = 64, lr: float = 1e-3, seed: int = 0,
          optimizer: str = "adam") -> list[float]:
    """Fit ``model`` on stride-1 windows of the (M, C) training signal.

    Each minibatch draws t ~ U{1..T} per window and eps ~ N(0, I), noises the
    windows in closed form, and regresses the noise with MSE.  Returns the
    mean loss of every epoch.
    """
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("empty training split")
    w = model.config.window
    starts = training_windows(x.shape[0], w)
    offs = np.arange(w)
    rng = np.random.default_rng(seed)
    store = model.store
    store.lr = lr
    if store.optimizer != optimizer:
        store.optimizer = optimizer
    trace: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(starts)
        losses = []
        for lo in range(0, len(order), batch_size):
            idx = order[lo:lo + batch_size][:, None] + offs
            x0 = x[idx]
            t = rng.integers(1, sched.T + 1, size=len(idx))
            eps = rng.standard_normal(x0.shape)
            xt = forward_noise_to(x0, t, eps, sched)
            g = nx.Graph()
            params = store.bind(g, trainable=True)
            try:
                eps_hat = model.forward(g, a[idx], g.constant(xt), t, params)
                loss = nx.mse(eps_hat, g.constant(eps))
                grads = g.backward(params.values(), output=loss)
            except nx.NonFiniteError as exc:
                raise nx.NonFiniteError(f"training diverged in epoch {epoch + 1}: {exc}") from exc
            store.zero_grad()
            store.accumulate({k: grads[n.id] for k, n in params.items()})
            store.step()
            losses.append(float(loss.value))
        trace.append(float(np.mean(losses)))
        log.debug("epoch %d loss %.5f", epoch + 1, trace[-1])
    return trace


# -- checkpoints ------------------------------------------------------------

@dataclass
class Checkpoint:
    model: Denoiser
    schedule: NoiseSchedule
    codec: MetadataCodec | None = None
    scaler: SignalScaler | None = None
    extra: dict = field(default_factory=dict)


def checkpoint_text(ck: Checkpoint) -> str:
    store = ck.model.store
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(ck.model.config),
        "schedule": ck.schedule.to_dict(),
        "codec": ck.codec.to_dict() if ck.codec else None,
        "scaler": ck.scaler.to_dict() if ck.scaler else None,
        "extra": ck.extra,
        "optimizer": {"name": store.optimizer, "lr": store.lr},
        "params": {
            name: {"shape": list(p.shape), "values": p.ravel().tolist()}
            for name, p in store.params.items()
        },
    }
    return json.dumps(doc, indent=1) + "\n"


def save_checkpoint(path, ck: Checkpoint) -> None:
    Path(path).write_text(checkpoint_text(ck))


def load_checkpoint(path) -> Checkpoint:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    model = Denoiser(DenoiserConfig(**doc["config"]))
    model.store.optimizer = doc["optimizer"]["name"]
    model.store.lr = doc["optimizer"]["lr"]
    for name, entry in doc["params"].items():
        value = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        if value.shape != model.store[name].shape:
            raise ValueError(f"{path}: parameter {name} has shape {value.shape}")
        model.store.add(name, value)
    s = doc["schedule"]
    sched = linear_schedule(s["T"], s["alpha_first"], s["alpha_last"], s["sigma_convention"])
    codec = MetadataCodec.from_dict(doc["codec"]) if doc["codec"] else None
    scaler = SignalScaler.from_dict(doc["scaler"]) if doc["scaler"] else None
    return Checkpoint(model, sched, codec, scaler, doc.get("extra", {}))
