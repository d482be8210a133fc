"""Leaky integrate-and-fire dynamics with straight-through gradients.

Forward, per neuron and discrete step t:

    u(t)  = tau * u'(t-1) + I(t)
    phi(t) = 1 if u(t) >= omega else 0
    u'(t) = u_rest if u(t) >= omega, -omega if u(t) < -omega, else u(t)
    U(t)  = tau * U(t-1) + u(t)          (pre-reset u)

Backward treats threshold, reset and the lower clamp as identity, so
d phi / d u = 1 and d u' / d u = 1, while the tau recursions of u and U are
differentiated exactly.  With those rules the reverse sweep is linear and
needs no saved state:

    G_U(t) = dL/dU(t) + tau * G_U(t+1)
    G_u(t) = dL/dphi(t) + G_U(t) + tau * G_u(t+1),    dL/dI(t) = G_u(t)

``LifParams(surrogate=True)`` runs the "surrogate twin": the forward pass
itself uses identity for threshold and reset, so its exact derivatives are
what the straight-through backward computes.  Finite differences on the twin
are the oracle for the BPTT machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor, affine, apply_op, conv2d, deconv2d, reshape


@dataclass(frozen=True)
class LifParams:
    tau: float = 0.99
    omega: float = 1.0
    u_rest: float = 0.0
    surrogate: bool = False

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must lie in [0, 1], got {self.tau}")
        if self.omega <= 0:
            raise ConfigError(f"omega must be positive, got {self.omega}")
        if self.u_rest != 0.0:
            raise ConfigError("u_rest is fixed at 0")


@dataclass
class LifState:
    u: Tensor
    u_post: Tensor
    U: Tensor
    phi: Tensor

    @classmethod
    def zeros(cls, shape, dtype=np.float32):
        z = np.zeros(shape, dtype=dtype)
        return cls(Tensor(z), Tensor(z), Tensor(z), Tensor(z))


class LayerTrace(NamedTuple):
    spikes: Tensor  # (T, N, ...) binary, or potentials in surrogate mode
    U_final: Tensor  # U(T)
    U_trace: Tensor | None  # (T, N, ...) when requested


def _fire(u, params):
    if params.surrogate:
        return u.copy(), u
    phi = (u >= params.omega).astype(u.dtype)
    u_post = np.where(phi > 0, params.u_rest, np.maximum(u, -params.omega)).astype(u.dtype)
    return phi, u_post


def lif_step(state: LifState, weighted_input: Tensor, params: LifParams):
    """Advance one time step; returns ``(phi, new_state)``."""
    if weighted_input.shape != state.u_post.shape:
        raise DimensionError(
            f"lif_step: input {weighted_input.shape} does not match state {state.u_post.shape}"
        )
    tau = params.tau
    inp = weighted_input.data
    u = tau * state.u_post.data + inp
    u = u.astype(inp.dtype, copy=False)
    phi, u_post = _fire(u, params)
    U = (tau * state.U.data + u).astype(inp.dtype, copy=False)

    def bw(g):
        g_phi, g_u, g_post, g_U = (np.zeros_like(u) if x is None else x for x in g)
        g_total = g_phi + g_u + g_post + g_U
        return g_total, tau * g_total, tau * g_U

    phi_t, u_t, post_t, U_t = apply_op(
        "lif_step", (weighted_input, state.u_post, state.U), (phi, u, u_post, U), bw
    )
    return phi_t, LifState(u_t, post_t, U_t, phi_t)


def lif_scan(inputs: Tensor, params: LifParams, keep_trace=False) -> LayerTrace:
    """Run the LIF recursion over the leading time axis of ``inputs``.

    Starts from u(0) = u_rest = 0 and U(0) = 0.  Equivalent to iterating
    ``lif_step`` but recorded as a single tape node.
    """
    if inputs.ndim < 1 or inputs.shape[0] < 1:
        raise ContractError("lif_scan needs at least one time step")
    drive = inputs.data
    dtype = drive.dtype
    steps = drive.shape[0]
    tau = dtype.type(params.tau)
    spikes = np.empty_like(drive)
    trace = np.empty_like(drive) if keep_trace else None
    u_post = np.zeros(drive.shape[1:], dtype=dtype)
    U = np.zeros_like(u_post)
    for t in range(steps):
        u = tau * u_post + drive[t]
        spikes[t], u_post = _fire(u, params)
        U = tau * U + u
        if keep_trace:
            trace[t] = U

    def bw(g):
        g_spk, g_fin = g[0], g[1]
        g_trace = g[2] if keep_trace else None
        g_in = np.empty_like(drive)
        G_U = np.zeros_like(u_post)
        G_u = np.zeros_like(u_post)
        for t in range(steps - 1, -1, -1):
            G_U = tau * G_U
            if g_trace is not None:
                G_U = G_U + g_trace[t]
            if t == steps - 1 and g_fin is not None:
                G_U = G_U + g_fin
            G_u = tau * G_u + G_U
            if g_spk is not None:
                G_u = G_u + g_spk[t]
            g_in[t] = G_u
        return (g_in,)

    outs = (spikes, U) if not keep_trace else (spikes, U, trace)
    res = apply_op("lif_scan", (inputs,), outs, bw)
    return LayerTrace(res[0], res[1], res[2] if keep_trace else None)


def run_lif_layer(inputs: Tensor, weights: Tensor, params: LifParams, kind="dense", keep_trace=False):
    """Apply a bias-free linear map to every step of ``inputs`` then LIF.

    ``inputs`` has shape (T, N, ...); the linear op (``dense``, ``conv`` or
    ``deconv``) runs once over the merged T*N batch.
    """
    if inputs.ndim < 2 or inputs.shape[0] < 1:
        raise ContractError("run_lif_layer needs a (T, N, ...) input with T >= 1")
    steps, batch = inputs.shape[:2]
    merged = reshape(inputs, (steps * batch,) + inputs.shape[2:])
    if kind == "dense":
        drive = affine(merged, weights)
    elif kind == "conv":
        drive = conv2d(merged, weights)
    elif kind == "deconv":
        drive = deconv2d(merged, weights)
    else:
        raise ConfigError(f"unknown layer kind {kind!r}")
    drive = reshape(drive, (steps, batch) + drive.shape[1:])
    return lif_scan(drive, params, keep_trace=keep_trace)
