"""Diffusion noise schedule and forward (noising) processes.

Steps are 1-based throughout: ``t`` runs over ``1..T`` and the arrays stored
on :class:`NoiseSchedule` are indexed with ``t - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_CONVENTIONS = ("variance", "sqrt")


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alpha: np.ndarray
    alpha_bar: np.ndarray
    # multiplier applied to z in the reverse step (see sigma_convention)
    sigma: np.ndarray
    sigma_convention: str = "variance"

    def a(self, t: int) -> float:
        return float(self.alpha[t - 1])

    def abar(self, t: int) -> float:
        return float(self.alpha_bar[t - 1])

    def sig(self, t: int) -> float:
        return float(self.sigma[t - 1])

    def check_step(self, t) -> None:
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ValueError(f"diffusion step must lie in [1, {self.T}]")

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "alpha_first": float(self.alpha[0]),
            "alpha_last": float(self.alpha[-1]),
            "sigma_convention": self.sigma_convention,
        }


def _posterior_term(alpha: np.ndarray, alpha_bar: np.ndarray) -> np.ndarray:
    """(1 - a_t)(1 - abar_{t-1}) / (1 - abar_t), zero at t = 1."""
    out = np.zeros_like(alpha)
    out[1:] = (1.0 - alpha[1:]) * (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:])
    return out


def linear_schedule(T: int = 200, alpha_first: float = 0.9999, alpha_last: float = 0.98,
                    sigma_convention: str = "variance") -> NoiseSchedule:
    """Interpolate alpha_t linearly from ``alpha_first`` (t=1) to ``alpha_last`` (t=T).

    ``sigma_convention="variance"`` uses the posterior term itself as the noise
    multiplier; ``"sqrt"`` uses its square root (the usual DDPM choice).
    """
    if int(T) != T or T < 1:
        raise ValueError("T must be a positive integer")
    if not (0.0 < alpha_last <= alpha_first < 1.0):
        raise ValueError("need 0 < alpha_last <= alpha_first < 1")
    if sigma_convention not in SIGMA_CONVENTIONS:
        raise ValueError(f"sigma_convention must be one of {SIGMA_CONVENTIONS}")
    T = int(T)
    if T == 1:
        alpha = np.array([alpha_first], dtype=np.float64)
    else:
        alpha = np.linspace(alpha_first, alpha_last, T, dtype=np.float64)
        # pin the endpoints so they are exact
        alpha[0], alpha[-1] = alpha_first, alpha_last
    alpha_bar = np.empty_like(alpha)
    running = 1.0
    for i, a in enumerate(alpha):
        running *= a
        alpha_bar[i] = running
    post = _posterior_term(alpha, alpha_bar)
    sigma = post if sigma_convention == "variance" else np.sqrt(post)
    for arr in (alpha, alpha_bar, sigma):
        arr.setflags(write=False)
    return NoiseSchedule(T, alpha, alpha_bar, sigma, sigma_convention)


def _step_coeff(values: np.ndarray, t, ndim: int):
    """Gather per-sample coefficients for scalar or batched ``t``."""
    c = values[np.asarray(t) - 1]
    if np.ndim(c) == 0:
        return float(c)
    return c.reshape(c.shape + (1,) * (ndim - 1))


def forward_noise_step(x_prev: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """One forward step: sqrt(a_t) x_{t-1} + sqrt(1 - a_t) eps."""
    x_prev = np.asarray(x_prev, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x_prev.shape != eps.shape:
        raise ValueError(f"shape mismatch: {x_prev.shape} vs {eps.shape}")
    sched.check_step(t)
    a = _step_coeff(sched.alpha, t, x_prev.ndim)
    return np.sqrt(a) * x_prev + np.sqrt(1.0 - a) * eps


def forward_noise_to(x0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Jump straight to step t: sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps.

    ``t`` may be an int or an integer array with one entry per leading-axis
    sample.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: {x0.shape} vs {eps.shape}")
    sched.check_step(t)
    ab = _step_coeff(sched.alpha_bar, t, x0.ndim)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
