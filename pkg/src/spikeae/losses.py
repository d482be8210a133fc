"""Reconstruction loss, regularizers and the family objectives.

Reductions: every term is summed over pixels / neurons / layers and averaged
over the batch.  For the reconstruction loss that convention is the one
under which an all-zero prediction on the MNIST test split costs ~89.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .models import ForwardRecord, Model, RegWeights
from .tensor import Tensor, absolute, exp, no_grad, square, total

COMPONENTS = ("rec", "l2", "p1", "p2", "a1", "a1_l3", "kl")


@dataclass
class LossBreakdown:
    rec: float = 0.0
    l2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    a1: float = 0.0
    a1_l3: float = 0.0
    kl: float = 0.0
    total: float = 0.0

    def as_dict(self):
        return asdict(self)

    def is_finite(self):
        return all(np.isfinite(v) for v in self.as_dict().values())


def reconstruction_loss(x, x_hat: Tensor) -> Tensor:
    target = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=x_hat.dtype)
    if target.shape != x_hat.shape:
        raise DimensionError(f"reconstruction target {target.shape} vs prediction {x_hat.shape}")
    return total(square(x_hat - target)) * (1.0 / target.shape[0])


def weight_reg(model: Model) -> Tensor:
    """Sum of squared weights over all layers; biases excluded."""
    terms = [total(square(w)) for w in model.weights()]
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def potential_reg(U_finals, batch_size):
    """(sum |U(T)|, sum U(T)^2) over layers and neurons, per example."""
    if not U_finals:
        raise ContractError("potential regularization needs a spiking forward record")
    p1 = p2 = None
    for U in U_finals:
        a, b = total(absolute(U)), total(square(U))
        p1 = a if p1 is None else p1 + a
        p2 = b if p2 is None else p2 + b
    scale = 1.0 / batch_size
    return p1 * scale, p2 * scale


def activity_reg(spikes, T, layers=None):
    """Mean firing rate summed over the selected layers' neurons, per example.

    ``spikes`` is the per-layer list of (T, N, ...) trains; ``layers`` holds
    1-based layer numbers (default: all).
    """
    if not spikes:
        raise ContractError("activity regularization needs a spiking forward record")
    chosen = range(1, len(spikes) + 1) if layers is None else layers
    out = None
    for layer in chosen:
        s = spikes[layer - 1]
        term = total(s) * (1.0 / (T * s.shape[1]))
        out = term if out is None else out + term
    return out


def kl_divergence(mu: Tensor, log_var: Tensor) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over latent dims, batch-averaged."""
    if mu is None or log_var is None:
        raise ContractError("KL divergence needs a VAE forward record")
    inner = total(log_var + 1.0 - square(mu) - exp(log_var))
    return inner * (-0.5 / mu.shape[0])


def total_objective(model: Model, record: ForwardRecord, x, weights: RegWeights | None = None):
    """Return (loss tensor, LossBreakdown) for the model family.

    Terms with zero weight are evaluated for reporting but kept off the
    loss, so they cost no backward work.
    """
    w = weights if weights is not None else model.config.reg
    for name, value in asdict(w).items():
        if value < 0:
            raise ConfigError(f"negative regularization weight {name}={value}")
    fam = model.family
    rec = reconstruction_loss(x, record.x_hat)
    loss = rec
    parts = {"rec": rec.item()}

    def add_term(key, weight, build):
        nonlocal loss
        if weight > 0:
            term = build()
            loss = loss + term * weight
            parts[key] = term.item()
        else:
            parts[key] = _detached(build)

    add_term("l2", w.l2, lambda: weight_reg(model))
    if fam == "SAE":
        n = record.x_hat.shape[0]
        T = model.config.coding.T
        if w.p1 > 0 or w.p2 > 0:
            p1, p2 = potential_reg(record.U_finals, n)
            for key, weight, term in (("p1", w.p1, p1), ("p2", w.p2, p2)):
                if weight > 0:
                    loss = loss + term * weight
                parts[key] = term.item()
        else:
            parts["p1"], parts["p2"] = (t.item() for t in _detached(lambda: potential_reg(record.U_finals, n)))
        add_term("a1", w.a1, lambda: activity_reg(record.spikes, T))
        add_term("a1_l3", w.a1_l3, lambda: activity_reg(record.spikes, T, layers=[3]))
    if fam == "VAE":
        add_term("kl", w.beta, lambda: kl_divergence(record.mu, record.log_var))
    breakdown = LossBreakdown(**parts, total=loss.item())
    return loss, breakdown


def _detached(build):
    with no_grad():
        out = build()
    return out.item() if isinstance(out, Tensor) else out
