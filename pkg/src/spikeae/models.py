"""Model assembly and forward passes for the SAE, AE and VAE families.

All three share one six-layer layout::

    conv(1->c1) -> conv(c1->c2) -> dense(flat->n_z) -> dense(n_z->flat)
        -> deconv(c2->c1) -> deconv(c1->1)

with valid stride-1 convolutions, so a 28x28 image maps to a 32x20x20 = 12800
feature volume.  The SAE is bias-free with LIF units everywhere; the
baselines use ReLU (except the VAE latent and the output layer) and carry
biases on their two dense layers only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .coding import CodingParams, corrupt, decode_max, poisson_encode
from .errors import ConfigError, ContractError
from .lif import LifParams, run_lif_layer
from .tensor import Tensor, affine, conv2d, deconv2d, exp, relu, reshape

FAMILIES = ("SAE", "AE", "VAE")

# Trainable parameters per (family, latent size) for the default 28x28 / 5x5 /
# (16, 32) geometry.
PARAMETER_TABLE = {
    ("SAE", 10): 282_400,
    ("SAE", 20): 538_400,
    ("SAE", 50): 1_306_400,
    ("SAE", 100): 2_586_400,
    ("AE", 10): 295_210,
    ("AE", 20): 551_220,
    ("AE", 50): 1_319_250,
    ("AE", 100): 2_599_300,
    ("VAE", 10): 423_220,
    ("VAE", 20): 807_240,
    ("VAE", 50): 1_959_300,
    ("VAE", 100): 3_879_400,
}


@dataclass(frozen=True)
class RegWeights:
    l2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    a1: float = 0.0
    a1_l3: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value >= 0:
                raise ConfigError(f"regularization weight {name} must be >= 0, got {value}")


@dataclass(frozen=True)
class ModelConfig:
    family: str = "SAE"
    n_z: int = 100
    image_size: int = 28
    kernel_size: int = 5
    channels: tuple = (16, 32)
    coding: CodingParams = field(default_factory=CodingParams)
    lif: LifParams = field(default_factory=LifParams)
    reg: RegWeights = field(default_factory=RegWeights)
    seed: int = 0
    lr: float = 0.0005
    batch_size: int = 64
    epochs: int = 10
    dtype: str = "float32"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}; expected one of {FAMILIES}")
        if self.n_z < 1:
            raise ConfigError(f"n_z must be >= 1, got {self.n_z}")
        if self.kernel_size < 1 or len(self.channels) != 2 or min(self.channels) < 1:
            raise ConfigError("kernel_size must be >= 1 and channels a pair of positive ints")
        if self.feature_size < 1:
            raise ConfigError(
                f"image size {self.image_size} too small for two {self.kernel_size}x{self.kernel_size} convolutions"
            )
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def feature_size(self):
        return self.image_size - 2 * (self.kernel_size - 1)

    @property
    def flat_size(self):
        return self.channels[1] * self.feature_size**2

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str  # conv | deconv | dense
    n_in: int
    n_out: int
    activation: str  # lif | relu | linear
    bias: bool

    def weight_shape(self, k):
        if self.kind == "conv":
            return (self.n_out, self.n_in, k, k)
        if self.kind == "deconv":
            return (self.n_in, self.n_out, k, k)
        return (self.n_in, self.n_out)

    def fan_in(self, k):
        return self.n_in * k * k if self.kind in ("conv", "deconv") else self.n_in


def layer_specs(config: ModelConfig):
    c1, c2 = config.channels
    flat, nz = config.flat_size, config.n_z
    fam = config.family
    if fam == "SAE":
        acts = ["lif"] * 6
    else:
        acts = ["relu", "relu", "relu" if fam == "AE" else "linear", "relu", "relu", "linear"]
    dense_bias = fam != "SAE"
    latent_out = 2 * nz if fam == "VAE" else nz
    return [
        LayerSpec("conv1", "conv", 1, c1, acts[0], False),
        LayerSpec("conv2", "conv", c1, c2, acts[1], False),
        LayerSpec("fc3", "dense", flat, latent_out, acts[2], dense_bias),
        LayerSpec("fc4", "dense", nz, flat, acts[3], dense_bias),
        LayerSpec("deconv5", "deconv", c2, c1, acts[4], False),
        LayerSpec("deconv6", "deconv", c1, 1, acts[5], False),
    ]


def parameter_count(config: ModelConfig):
    k = config.kernel_size
    n = 0
    for spec in layer_specs(config):
        n += int(np.prod(spec.weight_shape(k)))
        if spec.bias:
            n += spec.n_out
    return n


class Model:
    """Parameter container; forward passes live in module-level functions."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.layers = layer_specs(config)
        dtype = np.dtype(config.dtype)
        k = config.kernel_size
        self.params: dict[str, Tensor] = {}
        for spec in self.layers:
            self.params[f"{spec.name}.weight"] = Tensor(
                np.zeros(spec.weight_shape(k), dtype=dtype), requires_grad=True, name=f"{spec.name}.weight"
            )
            if spec.bias:
                self.params[f"{spec.name}.bias"] = Tensor(
                    np.zeros(spec.n_out, dtype=dtype), requires_grad=True, name=f"{spec.name}.bias"
                )

    @property
    def family(self):
        return self.config.family

    def weight(self, layer):
        return self.params[f"{layer}.weight"]

    def bias(self, layer):
        return self.params.get(f"{layer}.bias")

    def weights(self):
        return [t for name, t in self.params.items() if name.endswith(".weight")]

    def num_parameters(self):
        return sum(t.size for t in self.params.values())

    def __repr__(self):
        return f"Model({self.family}, n_z={self.config.n_z}, params={self.num_parameters():,})"


def build_model(config: ModelConfig) -> Model:
    model = Model(config)
    expected = parameter_count(config)
    if model.num_parameters() != expected:  # pragma: no cover - construction invariant
        raise ConfigError(f"built {model.num_parameters()} parameters, expected {expected}")
    return model


@dataclass
class ForwardRecord:
    family: str
    x_hat: Tensor
    spikes: list = field(default_factory=list)  # SAE: per-layer (T, N, ...) trains
    U_finals: list = field(default_factory=list)  # SAE: per-layer U(T)
    z: Tensor | None = None  # latent actually fed to the decoder
    mu: Tensor | None = None
    log_var: Tensor | None = None

    @property
    def latent_spikes(self):
        return self.spikes[2] if self.spikes else None


def forward_sae(model: Model, x, rng) -> ForwardRecord:
    """Corrupt, Poisson-encode, run six LIF layers over T steps, decode."""
    cfg = model.config
    if model.family != "SAE":
        raise ContractError(f"forward_sae called on a {model.family} model")
    coding = cfg.coding
    dtype = np.dtype(cfg.dtype)
    x = np.asarray(x, dtype=dtype)
    n = x.shape[0]
    train = Tensor(poisson_encode(corrupt(x, coding.epsilon, rng), coding.s, coding.T, rng, dtype=dtype))
    spikes, finals = [], []
    h = train
    fs = cfg.feature_size
    for i, spec in enumerate(model.layers):
        if spec.kind == "dense":
            h = reshape(h, (coding.T, n, -1))
        elif spec.name == "deconv5":
            h = reshape(h, (coding.T, n, cfg.channels[1], fs, fs))
        last = i == len(model.layers) - 1
        out = run_lif_layer(h, model.weight(spec.name), cfg.lif, kind=spec.kind, keep_trace=last)
        spikes.append(out.spikes)
        finals.append(out.U_final)
        h = out.spikes
    x_hat = decode_max(out.U_trace, coding.s, coding.t_min)
    return ForwardRecord("SAE", x_hat, spikes=spikes, U_finals=finals, z=spikes[2])


def _encode(model, x):
    h = relu(conv2d(x, model.weight("conv1")))
    h = relu(conv2d(h, model.weight("conv2")))
    h = reshape(h, (x.shape[0], -1))
    return affine(h, model.weight("fc3"), model.bias("fc3"))


def _decode(model, z):
    cfg = model.config
    fs = cfg.feature_size
    h = relu(affine(z, model.weight("fc4"), model.bias("fc4")))
    h = reshape(h, (z.shape[0], cfg.channels[1], fs, fs))
    h = relu(deconv2d(h, model.weight("deconv5")))
    return deconv2d(h, model.weight("deconv6"))


def forward_ae(model: Model, x, rng=None) -> ForwardRecord:
    if model.family != "AE":
        raise ContractError(f"forward_ae called on a {model.family} model")
    cfg = model.config
    x = np.asarray(x, dtype=cfg.dtype)
    if cfg.coding.epsilon > 0:
        x = corrupt(x, cfg.coding.epsilon, rng)
    z = relu(_encode(model, Tensor(x)))
    return ForwardRecord("AE", _decode(model, z), z=z)


def forward_vae(model: Model, x, rng=None, sample=True) -> ForwardRecord:
    """Reparameterized VAE pass; ``sample=False`` decodes from mu."""
    if model.family != "VAE":
        raise ContractError(f"forward_vae called on a {model.family} model")
    cfg = model.config
    nz = cfg.n_z
    x = np.asarray(x, dtype=cfg.dtype)
    if cfg.coding.epsilon > 0:
        x = corrupt(x, cfg.coding.epsilon, rng)
    stats = _encode(model, Tensor(x))
    mu = stats[:, :nz]
    log_var = stats[:, nz:]
    if sample:
        xi = rng.standard_normal(mu.shape).astype(mu.dtype)
        z = mu + exp(log_var * 0.5) * xi
    else:
        z = mu
    return ForwardRecord("VAE", _decode(model, z), z=z, mu=mu, log_var=log_var)


def forward(model: Model, x, rng, train=True) -> ForwardRecord:
    if model.family == "SAE":
        return forward_sae(model, x, rng)
    if model.family == "AE":
        return forward_ae(model, x, rng)
    return forward_vae(model, x, rng, sample=train)
