"""Weight initialization and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, NumericError


def init_std(spec, kernel_size):
    """Fan-in scaled standard deviation sqrt(2 / n_l)."""
    return float(np.sqrt(2.0 / spec.fan_in(kernel_size)))


def init_weights(model, rng):
    """Draw every weight from N(0, sqrt(2/n_l)) in layer order; zero biases."""
    k = model.config.kernel_size
    for spec in model.layers:
        w = model.weight(spec.name)
        w.data[...] = rng.normal(0.0, init_std(spec, k), size=w.shape)
        b = model.bias(spec.name)
        if b is not None:
            b.data[...] = 0


@dataclass
class AdamState:
    lr: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update, in place.

    ``params`` maps names to Tensors (or arrays); ``grads`` maps the same
    names to gradient arrays.  Every gradient is checked before any parameter
    moves, so a rejected step leaves the model untouched.
    """
    for name, p in params.items():
        if name not in grads:
            raise ContractError(f"missing gradient for {name}")
        g = grads[name]
        if g.shape != _data(p).shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {_data(p).shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for name, p in params.items():
        data = _data(p)
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(data)
            state.v[name] = np.zeros_like(data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(data.dtype, copy=False)
    return params, state


def _data(p):
    return p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p
