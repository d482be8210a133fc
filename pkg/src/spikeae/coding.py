"""Image corruption, Poisson rate encoding and max-potential decoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .tensor import Tensor, apply_op


@dataclass(frozen=True)
class CodingParams:
    epsilon: float = 0.0
    s: float = 0.2
    T: int = 100
    t_min: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.s <= 0:
            raise ConfigError(f"scaling factor s must be positive, got {self.s}")
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if not 0 <= self.t_min < self.T:
            raise ConfigError(f"t_min must satisfy 0 <= t_min < T, got {self.t_min}")


def corrupt(x, epsilon, rng):
    """Blend each pixel with independent U(0, 1) noise: (1-eps) x + eps xi.

    No random numbers are drawn when ``epsilon == 0``.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in [0, 1], got {epsilon}")
    x = np.asarray(x)
    if epsilon == 0:
        return x
    xi = rng.random(x.shape)
    return ((1.0 - epsilon) * x + epsilon * xi).astype(x.dtype, copy=False)


def poisson_encode(x, s, T, rng, dtype=None):
    """Bernoulli spike train with per-step probability ``s * x``.

    Returns an array of shape (T, *x.shape).  Uniform draws are consumed in
    pixel-major then time order, i.e. one length-T block per pixel.
    """
    x = np.asarray(x)
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    r = rng.random(x.shape + (T,))
    spikes = (s * x[..., None] > r).astype(dtype or x.dtype)
    return np.moveaxis(spikes, -1, 0)


def decode_max(U_trace: Tensor, s, t_min=0) -> Tensor:
    """x_hat = max over the window of U(t), divided by ``s``.

    ``U_trace[i]`` holds U at step i+1.  A virtual U(0) = 0 always joins the
    window, so the output is non-negative.  Gradients go to the earliest
    maximizing step; none flow when the virtual entry wins.
    """
    steps = U_trace.shape[0]
    if not 0 <= t_min <= steps:
        raise ContractError(f"decode window [{t_min}, {steps}] is empty")
    data = U_trace.data
    start = max(t_min - 1, 0)
    window = data[start:]
    stacked = np.concatenate([np.zeros((1,) + data.shape[1:], dtype=data.dtype), window])
    best = np.argmax(stacked, axis=0)
    peak = np.take_along_axis(stacked, best[None], axis=0)[0]
    scale = data.dtype.type(1.0 / s)

    def bw(g):
        g_trace = np.zeros_like(data)
        hit = best > 0
        step = np.where(hit, best - 1 + start, 0)
        np.put_along_axis(g_trace, step[None], np.where(hit, g * scale, 0)[None].astype(data.dtype), axis=0)
        return (g_trace,)

    return apply_op("decode_max", (U_trace,), (peak * scale,), lambda g: bw(g[0]))[0]
