"""Conditional generation over overlapping windows.

Every mode shares one per-step building block: a batched denoiser call that
yields the dirty estimate x0 and the unconditional one-step sample x'.  The
guided modes then add an inference-time correction

    x_{t-1} = x' - eta * grad_{x_t} (L_self + L_stitch)

where L_self compares x0 with the observed entries of the window and
L_stitch compares the head of x' with the tail of the previous window's x'
(read from a per-step snapshot, so it enters the graph as a constant).

Losses use sum reduction.  All random draws come from :class:`NoiseStreams`,
keyed by (window, step), so the result does not depend on batch scheduling
or worker count.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .dataset import WindowSet, merge_windows
from .denoiser import Denoiser
from .schedule import NoiseSchedule, forward_noise_to

log = logging.getLogger(__name__)

MODES = ("parallel", "autoregressive", "repaint", "self_only", "metadata_only")
STITCH_METRICS = ("mse", "mae", "cosine", "pearson")
GRAD_MODES = ("exact", "jacobian_free")


@dataclass
class SamplerConfig:
    eta: float = 0.1
    stride: int = 8
    window: int = 32
    batch: int = 64
    mode: str = "parallel"
    stitch_metric: str = "mse"
    grad_mode: str = "exact"
    symmetric_stitch: bool = False
    seed: int = 0
    workers: int = 1
    merge_rule: str = "first"

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("guidance coefficient must be >= 0")
        if self.batch < 1 or self.stride < 1 or self.workers < 1:
            raise ValueError("batch, stride and workers must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.stitch_metric not in STITCH_METRICS:
            raise ValueError(f"stitch metric must be one of {STITCH_METRICS}")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"grad mode must be one of {GRAD_MODES}")


@dataclass
class GenerationResult:
    sequence: np.ndarray
    windows: np.ndarray
    calls: int
    seconds: float
    mode: str
    # rows of (t, mean L_self, mean L_stitch, mean overlap discrepancy)
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)

    @property
    def final_self_loss(self) -> float:
        return self.trace[-1][1] if self.trace else 0.0

    @property
    def final_stitch_loss(self) -> float:
        return self.trace[-1][2] if self.trace else 0.0

    @property
    def mean_overlap_discrepancy(self) -> float:
        return float(np.mean([r[3] for r in self.trace])) if self.trace else 0.0

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "calls": self.calls,
            "seconds": self.seconds,
            "final_self_loss": self.final_self_loss,
            "final_stitch_loss": self.final_stitch_loss,
            "mean_overlap_discrepancy": self.mean_overlap_discrepancy,
        }


class NoiseStreams:
    """Counter-based normal draws addressed by (purpose, window, step).

    Each draw seeds a fresh Philox generator whose key is the run seed and
    whose counter encodes the address, so a draw never depends on how many
    other draws happened before it.
    """

    INIT, Z, REPAINT = 0, 1, 2

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)

    def normal(self, purpose: int, j: int, t: int, shape) -> np.ndarray:
        counter = np.array([0, t, j, purpose], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self.seed, counter=counter)).standard_normal(shape)

    def batch(self, purpose: int, idx, t: int, shape) -> np.ndarray:
        return np.stack([self.normal(purpose, int(j), t, shape) for j in idx])


# -- single-window operations ------------------------------------------------

def _coeffs(sched: NoiseSchedule, t: int):
    ab = sched.abar(t)
    al = sched.a(t)
    return np.sqrt(ab), np.sqrt(1.0 - ab), np.sqrt(al), (1.0 - al) / np.sqrt(1.0 - ab), sched.sig(t)


def _estimates(x_node: nx.Node, eps_node: nx.Node, z: np.ndarray, sched: NoiseSchedule, t: int):
    """(dirty estimate x0, unconditional step x') as graph nodes."""
    sab, s1ab, sal, c_eps, sig = _coeffs(sched, t)
    x0 = (x_node - s1ab * eps_node) / sab
    xp = (x_node - c_eps * eps_node) / sal
    if sig != 0.0:
        xp = xp + sig * z
    return x0, xp


def dirty_estimate(x_hat_t, a, t: int, model: Denoiser, sched: NoiseSchedule) -> np.ndarray:
    """(x_t - sqrt(1 - abar_t) f(a, x_t, t)) / sqrt(abar_t) for one (w, C) window."""
    sched.check_step(t)
    g = nx.Graph()
    x = g.constant(np.asarray(x_hat_t, dtype=np.float64)[None])
    eps = model.forward(g, np.asarray(a, dtype=np.float64)[None], x, t)
    x0, _ = _estimates(x, eps, np.zeros(x.shape), sched, t)
    return x0.value[0]


def uncond_step(x_hat_t, a, t: int, z, model: Denoiser, sched: NoiseSchedule) -> np.ndarray:
    """One reverse step with metadata conditioning only."""
    sched.check_step(t)
    g = nx.Graph()
    x = g.constant(np.asarray(x_hat_t, dtype=np.float64)[None])
    eps = model.forward(g, np.asarray(a, dtype=np.float64)[None], x, t)
    _, xp = _estimates(x, eps, np.asarray(z, dtype=np.float64)[None], sched, t)
    return xp.value[0]


def _self_loss_node(g: nx.Graph, x0: nx.Node, x_obs: np.ndarray, observed: np.ndarray) -> nx.Node:
    """Per-window sum of squared error over observed entries -> (B,)."""
    r = (x0 - g.constant(x_obs)) * g.constant(observed)
    return nx.total(r * r, axis=(1, 2))


def _stitch_loss_node(g: nx.Graph, xp: nx.Node, target: np.ndarray, overlap: np.ndarray,
                      metric: str) -> tuple[nx.Node, int]:
    """Per-window overlap discrepancy -> ((B,) node, count of degenerate overlaps).

    ``overlap`` is 1 on the rows of each window that take part in the overlap
    and ``target`` holds the neighbour's values on those rows (0 elsewhere).
    """
    O = g.constant(overlap)
    if metric == "mse":
        d = (xp - g.constant(target)) * O
        return nx.total(d * d, axis=(1, 2)), 0
    if metric == "mae":
        d = (xp - g.constant(target)) * O
        return nx.total(nx.absolute(d), axis=(1, 2)), 0
    if metric == "cosine":
        u = xp * O
        dot = nx.total(u * g.constant(target), axis=(1, 2))
        uu = nx.total(u * u, axis=(1, 2))
        tt = np.sqrt(np.sum(target * target, axis=(1, 2)))
        has = overlap.any(axis=(1, 2))
        valid = ((uu.value > 0) & (tt > 0)).astype(np.float64)
        nu = nx.sqrt(uu + g.constant(1.0 - valid))
        sim = dot / (nu * g.constant(np.where(valid > 0, tt, 1.0)))
        loss = (1.0 - sim) * g.constant(valid)
        return loss, int(np.sum(has & (valid == 0)))
    if metric == "pearson":
        n = overlap.sum(axis=1, keepdims=True)          # (B, 1, C) rows in overlap
        n_safe = np.where(n > 0, n, 1.0)
        mu = nx.total(xp * O, axis=1, keepdims=True) / g.constant(n_safe)
        xc = (xp - mu) * O
        t_mu = np.sum(target * overlap, axis=1, keepdims=True) / n_safe
        tc = (target - t_mu) * overlap
        cov = nx.total(xc * g.constant(tc), axis=1)     # (B, C)
        vx = nx.total(xc * xc, axis=1)
        vt = np.sum(tc * tc, axis=1)
        tiny = 1e-24
        valid = ((vx.value > tiny) & (vt > tiny)).astype(np.float64)
        corr = cov / (nx.sqrt(vx + g.constant(1.0 - valid)) * g.constant(np.sqrt(np.where(valid > 0, vt, 1.0))))
        C = target.shape[2]
        loss = nx.total((1.0 - corr) * g.constant(valid), axis=1) * (1.0 / C)
        has = n[:, 0, :] > 0
        return loss, int(np.sum(has & (valid == 0)))
    raise ValueError(f"unknown stitch metric {metric!r}")


def self_guidance_loss(x_hat_0, x_obs, mask) -> float:
    """Sum of squared error between estimate and observations where mask == 0."""
    x_hat_0 = np.asarray(x_hat_0, dtype=np.float64)
    x_obs = np.asarray(x_obs, dtype=np.float64)
    mask = np.broadcast_to(np.asarray(mask, dtype=np.float64), x_hat_0.shape)
    if x_hat_0.shape != x_obs.shape:
        raise ValueError("estimate and observation shapes differ")
    observed = 1.0 - mask
    x_obs = np.where(observed > 0, x_obs, 0.0)
    g = nx.Graph()
    return float(_self_loss_node(g, g.constant(x_hat_0[None]), x_obs[None], observed[None]).value[0])


def stitch_loss(curr_prefix, prev_suffix, metric: str = "mse") -> float:
    """Discrepancy between the head of window j and the tail of window j-1.

    Empty overlaps (stride >= width) give 0.
    """
    curr = np.asarray(curr_prefix, dtype=np.float64)
    prev = np.asarray(prev_suffix, dtype=np.float64)
    if curr.shape != prev.shape:
        raise ValueError(f"overlap shapes differ: {curr.shape} vs {prev.shape}")
    if curr.size == 0:
        return 0.0
    g = nx.Graph()
    node, bad = _stitch_loss_node(g, g.constant(curr[None]), prev[None], np.ones((1,) + curr.shape), metric)
    if bad:
        log.warning("zero-variance overlap under %s stitch metric; contribution set to 0", metric)
    return float(node.value[0])


def conditional_loss(x_hat_0, x_prime, x_obs, mask, prev_suffix=None, metric: str = "mse",
                     next_prefix=None) -> tuple[float, float, float]:
    """(total, self, stitch) for one window.

    ``prev_suffix`` is the previous window's tail matching the first rows of
    ``x_prime``; ``next_prefix`` (symmetric stitching) the next window's head
    matching the last rows.
    """
    ls = self_guidance_loss(x_hat_0, x_obs, mask)
    lst = 0.0
    xp = np.asarray(x_prime, dtype=np.float64)
    if prev_suffix is not None and len(prev_suffix):
        lst += stitch_loss(xp[: len(prev_suffix)], prev_suffix, metric)
    if next_prefix is not None and len(next_prefix):
        lst += stitch_loss(xp[len(xp) - len(next_prefix):], next_prefix, metric)
    return ls + lst, ls, lst


def window_guidance(model: Denoiser, sched: NoiseSchedule, x_hat_t, a, t: int, z, x_obs, mask,
                    prev_suffix=None, metric: str = "mse", grad_mode: str = "exact"):
    """L_cond of one window and its gradient with respect to ``x_hat_t``.

    Built from the same graph pieces the samplers use; returns
    (loss, gradient, x_hat_0, x_hat').
    """
    sched.check_step(t)
    x_hat_t = np.asarray(x_hat_t, dtype=np.float64)
    w, C = x_hat_t.shape
    mask = np.broadcast_to(np.asarray(mask, dtype=np.float64).reshape(w, -1), (w, C))
    observed = (1.0 - mask)[None]
    x_obs = np.where(observed[0] > 0, np.asarray(x_obs, dtype=np.float64), 0.0)[None]
    f = _forward_batch(model, sched, x_hat_t[None], np.asarray(a, dtype=np.float64)[None], t,
                       np.asarray(z, dtype=np.float64)[None], True, grad_mode)
    total = _self_loss_node(f.graph, f.x0, x_obs, observed)
    if prev_suffix is not None and len(prev_suffix):
        ov = len(prev_suffix)
        target = np.zeros((1, w, C))
        overlap = np.zeros((1, w, C))
        target[0, :ov] = prev_suffix
        overlap[0, :ov] = 1.0
        lst, _ = _stitch_loss_node(f.graph, f.xp, target, overlap, metric)
        total = total + lst
    out = nx.total(total)
    grad = f.graph.backward([f.x], output=out)[f.x.id][0]
    return float(out.value), grad, f.x0.value[0], f.xp.value[0]


def adjust(x_prime: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """x' - eta * grad."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise nx.NonFiniteError("non-finite guidance gradient")
    if eta == 0.0:
        return np.asarray(x_prime, dtype=np.float64)
    return x_prime - eta * grad


# -- batched machinery -------------------------------------------------------

@dataclass
class _Forward:
    graph: nx.Graph
    x: nx.Node
    x0: nx.Node
    xp: nx.Node


def _forward_batch(model, sched, xt, a, t, z, need_grad, grad_mode) -> _Forward:
    g = nx.Graph()
    x = g.input(xt) if need_grad else g.constant(xt)
    eps = model.forward(g, a, x, t)
    if grad_mode == "jacobian_free":
        eps = g.constant(eps.value)
    x0, xp = _estimates(x, eps, z, sched, t)
    return _Forward(g, x, x0, xp)


def _neighbour_targets(ws: WindowSet, idx, source: np.ndarray, C: int, forward: bool):
    """Overlap rows/targets for windows ``idx``; ``forward`` selects the (j+1) side."""
    B, w = len(idx), ws.w
    target = np.zeros((B, w, C))
    overlap = np.zeros((B, w, C))
    for b, j in enumerate(idx):
        if not forward:
            ov, d = ws.overlap(j)
            if ov > 0:
                target[b, :ov] = source[j - 1, d:d + ov]
                overlap[b, :ov] = 1.0
        elif j + 1 < ws.J:
            ov, d = ws.overlap(j + 1)
            if ov > 0:
                target[b, d:d + ov] = source[j + 1, :ov]
                overlap[b, d:d + ov] = 1.0
    return target, overlap


def overlap_discrepancy(ws: WindowSet, X: np.ndarray) -> float:
    """Mean squared difference on shared timesteps, averaged over window pairs."""
    vals = []
    for j in range(1, ws.J):
        ov, d = ws.overlap(j)
        if ov > 0:
            vals.append(float(np.mean((X[j, :ov] - X[j - 1, d:d + ov]) ** 2)))
    return float(np.mean(vals)) if vals else 0.0


class _Run:
    """State shared by the window-parallel modes."""

    def __init__(self, model: Denoiser, sched: NoiseSchedule, ws: WindowSet, cfg: SamplerConfig):
        if ws.w != model.config.window:
            raise ValueError(f"window width {ws.w} differs from model window {model.config.window}")
        self.model, self.sched, self.ws, self.cfg = model, sched, ws, cfg
        self.C = ws.x.shape[2]
        self.m = ws.m
        self.observed = 1.0 - ws.m
        # never let values at generated positions reach the sampler
        self.x_obs = np.where(ws.m > 0, 0.0, ws.x)
        self.streams = NoiseStreams(cfg.seed)
        self.batches = [np.arange(lo, min(lo + cfg.batch, ws.J)) for lo in range(0, ws.J, cfg.batch)]
        self.calls = 0
        self.degenerate = 0

    def init_state(self) -> np.ndarray:
        shape = (self.ws.w, self.C)
        return self.streams.batch(NoiseStreams.INIT, range(self.ws.J), self.sched.T + 1, shape)

    def z(self, idx, t):
        return self.streams.batch(NoiseStreams.Z, idx, t, (self.ws.w, self.C))

    def reintroduce(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.m > 0, X, self.x_obs)


def _map(pool, fn, items):
    if pool is None:
        return [fn(i) for i in items]
    return list(pool.map(fn, items))


def generate_parallel(model: Denoiser, sched: NoiseSchedule, ws: WindowSet, cfg: SamplerConfig,
                      use_stitch: bool | None = None, guided: bool | None = None) -> GenerationResult:
    """Denoise all windows together; windows in a batch share one denoiser call per step."""
    if use_stitch is None:
        use_stitch = cfg.mode == "parallel"
    if guided is None:
        guided = cfg.mode in ("parallel", "self_only")
    run = _Run(model, sched, ws, cfg)
    need_grad = guided and cfg.eta != 0.0
    has_overlap = any(ws.overlap(j)[0] > 0 for j in range(1, ws.J))
    use_stitch = use_stitch and has_overlap
    t0 = time.perf_counter()
    X = run.init_state()
    trace = []
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for t in range(sched.T, 0, -1):
            def phase1(idx, t=t, X=X):
                return _forward_batch(model, sched, X[idx], ws.a[idx], t, run.z(idx, t),
                                      need_grad, cfg.grad_mode)
            fwd = _map(pool, phase1, run.batches)
            run.calls += len(run.batches)
            snapshot = np.concatenate([f.xp.value for f in fwd], axis=0)

            def phase2(k, t=t, snapshot=snapshot):
                idx, f = run.batches[k], fwd[k]
                g = f.graph
                ls = _self_loss_node(g, f.x0, run.x_obs[idx], run.observed[idx])
                total = ls
                lst_val = np.zeros(len(idx))
                bad = 0
                if use_stitch:
                    tgt, ov = _neighbour_targets(ws, idx, snapshot, run.C, forward=False)
                    lst, bad = _stitch_loss_node(g, f.xp, tgt, ov, cfg.stitch_metric)
                    if cfg.symmetric_stitch:
                        tgt2, ov2 = _neighbour_targets(ws, idx, snapshot, run.C, forward=True)
                        lst2, bad2 = _stitch_loss_node(g, f.xp, tgt2, ov2, cfg.stitch_metric)
                        lst = lst + lst2
                        bad += bad2
                    total = ls + lst
                    lst_val = lst.value
                if need_grad:
                    out = nx.total(total)
                    grad = g.backward([f.x], output=out)[f.x.id]
                    new = adjust(f.xp.value, grad, cfg.eta)
                else:
                    new = f.xp.value
                return new, ls.value, lst_val, bad

            res = _map(pool, phase2, range(len(run.batches)))
            X = np.concatenate([r[0] for r in res], axis=0)
            run.degenerate += sum(r[3] for r in res)
            trace.append((
                t,
                float(np.mean(np.concatenate([r[1] for r in res]))),
                float(np.mean(np.concatenate([r[2] for r in res]))),
                overlap_discrepancy(ws, X),
            ))
    finally:
        if pool is not None:
            pool.shutdown()
    return _finish(run, X, trace, t0, cfg.mode)


def _finish(run: _Run, X: np.ndarray, trace, t0: float, mode: str) -> GenerationResult:
    if run.degenerate:
        log.warning("%d zero-variance overlaps under %s stitching contributed 0",
                    run.degenerate, run.cfg.stitch_metric)
    X = run.reintroduce(X)
    seq = merge_windows(X, run.ws.starts, run.ws.M, run.cfg.merge_rule)
    return GenerationResult(seq, X, run.calls, time.perf_counter() - t0, mode, trace)


def generate_self_only(model, sched, ws, cfg) -> GenerationResult:
    return generate_parallel(model, sched, ws, cfg, use_stitch=False, guided=True)


def generate_metadata_only(model, sched, ws, cfg) -> GenerationResult:
    return generate_parallel(model, sched, ws, cfg, use_stitch=False, guided=False)


def _ar_window(run: _Run, j: int, prev_final: np.ndarray | None):
    """Denoise window j alone against a finished predecessor.

    Returns (final window, per-step rows of (L_self, L_stitch)).
    """
    ws, cfg, sched, model = run.ws, run.cfg, run.sched, run.model
    idx = np.array([j])
    m = run.m[j].copy()
    x_obs = run.x_obs[j].copy()
    target = np.zeros((1, ws.w, run.C))
    overlap = np.zeros((1, ws.w, run.C))
    if prev_final is not None:
        ov, d = ws.overlap(j)
        if ov > 0:
            m[:ov] = 0.0
            x_obs[:ov] = prev_final[d:d + ov]
            target[0, :ov] = prev_final[d:d + ov]
            overlap[0, :ov] = 1.0
    observed = (1.0 - m)[None]
    use_stitch = bool(overlap.any())
    need_grad = cfg.eta != 0.0
    X = run.streams.normal(NoiseStreams.INIT, j, sched.T + 1, (ws.w, run.C))[None]
    rows = []
    for t in range(sched.T, 0, -1):
        f = _forward_batch(model, sched, X, ws.a[idx], t, run.z(idx, t), need_grad, cfg.grad_mode)
        run.calls += 1
        ls = _self_loss_node(f.graph, f.x0, x_obs[None], observed)
        total = ls
        lst_v = 0.0
        if use_stitch:
            lst, bad = _stitch_loss_node(f.graph, f.xp, target, overlap, cfg.stitch_metric)
            run.degenerate += bad
            total = ls + lst
            lst_v = float(lst.value[0])
        if need_grad:
            grad = f.graph.backward([f.x], output=nx.total(total))[f.x.id]
            X = adjust(f.xp.value, grad, cfg.eta)
        else:
            X = f.xp.value
        rows.append((float(ls.value[0]), lst_v))
    return np.where(m > 0, X[0], x_obs), rows


def generate_autoregressive(model: Denoiser, sched: NoiseSchedule, ws: WindowSet,
                            cfg: SamplerConfig) -> GenerationResult:
    """Generate windows one after another, each conditioned on its finished predecessor."""
    run = _Run(model, sched, ws, cfg)
    t0 = time.perf_counter()
    final = np.empty_like(run.x_obs)
    per_window = []
    for j in range(ws.J):
        final[j], rows = _ar_window(run, j, final[j - 1] if j > 0 else None)
        per_window.append(rows)
    trace = []
    steps = list(range(sched.T, 0, -1))
    for k, t in enumerate(steps):
        trace.append((t, float(np.mean([r[k][0] for r in per_window])),
                      float(np.mean([r[k][1] for r in per_window])), 0.0))
    res = _finish(run, final, trace, t0, "autoregressive")
    return res


def generate_repaint(model: Denoiser, sched: NoiseSchedule, ws: WindowSet,
                     cfg: SamplerConfig) -> GenerationResult:
    """Gradient-free variant: re-noise observations each step, copy overlaps from the predecessor."""
    run = _Run(model, sched, ws, cfg)
    t0 = time.perf_counter()
    X = run.init_state()
    trace = []
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for t in range(sched.T, 0, -1):
            def step(idx, t=t, X=X):
                f = _forward_batch(model, sched, X[idx], ws.a[idx], t, run.z(idx, t), False, "exact")
                if t > 1:
                    eps = run.streams.batch(NoiseStreams.REPAINT, idx, t, (ws.w, run.C))
                    known = forward_noise_to(run.x_obs[idx], t - 1, eps, sched)
                else:
                    known = run.x_obs[idx]
                ls = np.sum((run.observed[idx] * (f.x0.value - run.x_obs[idx])) ** 2, axis=(1, 2))
                return np.where(run.m[idx] > 0, f.xp.value, known), ls
            res = _map(pool, step, run.batches)
            run.calls += len(run.batches)
            snap = np.concatenate([r[0] for r in res], axis=0)
            X = snap.copy()
            for j in range(1, ws.J):
                ov, d = ws.overlap(j)
                if ov > 0:
                    X[j, :ov] = snap[j - 1, d:d + ov]
            trace.append((t, float(np.mean(np.concatenate([r[1] for r in res]))), 0.0,
                          overlap_discrepancy(ws, X)))
    finally:
        if pool is not None:
            pool.shutdown()
    return _finish(run, X, trace, t0, "repaint")


def generate(model: Denoiser, sched: NoiseSchedule, ws: WindowSet, cfg: SamplerConfig) -> GenerationResult:
    """Dispatch on ``cfg.mode``."""
    if cfg.mode == "parallel":
        return generate_parallel(model, sched, ws, cfg)
    if cfg.mode == "self_only":
        return generate_self_only(model, sched, ws, cfg)
    if cfg.mode == "metadata_only":
        return generate_metadata_only(model, sched, ws, cfg)
    if cfg.mode == "autoregressive":
        return generate_autoregressive(model, sched, ws, cfg)
    return generate_repaint(model, sched, ws, cfg)


def expected_calls(T: int, J: int, b: int, mode: str) -> int:
    """Closed-form denoiser call count for a run."""
    if mode == "autoregressive":
        return T * J
    return T * (-(-J // b))
