"""Experiment configuration: key=value files, presets and validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .coding import CodingParams
from .errors import ConfigError
from .lif import LifParams
from .models import ModelConfig, RegWeights

# Non-zero regularization weights of the compared models.
PRESETS = {
    "SAE": {"family": "SAE"},
    "SAE-sparse": {"family": "SAE", "p1": 0.005, "p2": 0.005, "a1": 0.01},
    "SAE-dense": {"family": "SAE", "p2": 0.01, "a1_l3": 0.1},
    "AE": {"family": "AE"},
    "AE_l2": {"family": "AE", "l2": 0.00001},
    "VAE": {"family": "VAE", "l2": 0.01, "beta": 1.0},
    "betaVAE": {"family": "VAE", "l2": 0.01, "beta": 0.1},
}


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text):
    return None if str(text).strip().lower() in ("", "none", "all") else int(text)


def _int_list(text):
    text = str(text).strip()
    return tuple(int(v) for v in text.split(",") if v.strip()) if text else ()


def _channels(text):
    vals = _int_list(text)
    if len(vals) != 2:
        raise ValueError("channels needs two comma-separated integers")
    return vals


# key -> parser; the schema is closed.
SCHEMA = {
    "preset": str,
    "family": str,
    "n_z": int,
    "image_size": int,
    "kernel_size": int,
    "channels": _channels,
    "epsilon": float,
    "s": float,
    "T": int,
    "t_min": int,
    "tau": float,
    "l2": float,
    "p1": float,
    "p2": float,
    "a1": float,
    "a1_l3": float,
    "beta": float,
    "lr": float,
    "batch_size": int,
    "epochs": int,
    "dtype": str,
    "seed": int,
    "seeds": _int_list,
    "repetitions": int,
    "data_dir": str,
    "train_size": _optional_int,
    "val_size": _optional_int,
    "eval_batch_size": int,
    "per_class": int,
    "log_timing": _bool,
    "figures": _bool,
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    preset: str | None = None
    data_dir: str | None = None
    repetitions: int = 5
    seeds: tuple = ()
    train_size: int | None = None
    val_size: int | None = None
    eval_batch_size: int = 100
    per_class: int = 10
    log_timing: bool = False
    figures: bool = True

    def run_seeds(self):
        if self.seeds:
            return list(self.seeds)
        return [self.model.seed + i for i in range(self.repetitions)]


def parse_pairs(lines, source="<config>"):
    pairs = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        pairs[key] = value
    return pairs


def read_config_file(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return parse_pairs(path.read_text().splitlines(), str(path))


def build_config(pairs) -> ExperimentConfig:
    """Validate raw key=value pairs; a preset is applied before explicit keys."""
    values = {}
    for key, text in pairs.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        try:
            values[key] = SCHEMA[key](text)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None
    preset = values.pop("preset", None)
    merged = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    merged.update(values)

    base = ModelConfig()
    reg_keys = {f.name for f in dataclasses.fields(RegWeights)}
    reg = RegWeights(**{k: merged[k] for k in reg_keys if k in merged})
    coding = CodingParams(
        epsilon=merged.get("epsilon", base.coding.epsilon),
        s=merged.get("s", base.coding.s),
        T=merged.get("T", base.coding.T),
        t_min=merged.get("t_min", base.coding.t_min),
    )
    lif = LifParams(tau=merged.get("tau", base.lif.tau))
    model_keys = ("family", "n_z", "image_size", "kernel_size", "channels", "lr", "batch_size", "epochs", "dtype", "seed")
    model = ModelConfig(
        coding=coding, lif=lif, reg=reg, **{k: merged[k] for k in model_keys if k in merged}
    )
    extra = {k: merged[k] for k in ("data_dir", "repetitions", "seeds", "train_size", "val_size",
                                    "eval_batch_size", "per_class", "log_timing", "figures") if k in merged}
    cfg = ExperimentConfig(model=model, preset=preset, **extra)
    if cfg.repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if model.batch_size < 1 or cfg.eval_batch_size < 1:
        raise ConfigError("batch sizes must be >= 1")
    if model.epochs < 0:
        raise ConfigError("epochs must be >= 0")
    return cfg


def load_config(path=None, overrides=(), seed=None):
    """Config file (optional) + ``key=value`` overrides + CLI seed."""
    pairs = read_config_file(path) if path else {}
    pairs.update(parse_pairs(overrides, "--set"))
    if seed is not None:
        pairs["seed"] = str(seed)
    return build_config(pairs)


def model_config_to_dict(cfg: ModelConfig):
    return {
        "family": cfg.family,
        "n_z": cfg.n_z,
        "image_size": cfg.image_size,
        "kernel_size": cfg.kernel_size,
        "channels": list(cfg.channels),
        "epsilon": cfg.coding.epsilon,
        "s": cfg.coding.s,
        "T": cfg.coding.T,
        "t_min": cfg.coding.t_min,
        "tau": cfg.lif.tau,
        "omega": cfg.lif.omega,
        **dataclasses.asdict(cfg.reg),
        "seed": cfg.seed,
        "lr": cfg.lr,
        "batch_size": cfg.batch_size,
        "epochs": cfg.epochs,
        "dtype": cfg.dtype,
    }


def model_config_from_dict(d):
    try:
        return ModelConfig(
            family=d["family"],
            n_z=int(d["n_z"]),
            image_size=int(d["image_size"]),
            kernel_size=int(d["kernel_size"]),
            channels=tuple(int(c) for c in d["channels"]),
            coding=CodingParams(epsilon=d["epsilon"], s=d["s"], T=int(d["T"]), t_min=int(d["t_min"])),
            lif=LifParams(tau=d["tau"], omega=d.get("omega", 1.0)),
            reg=RegWeights(**{k: d[k] for k in ("l2", "p1", "p2", "a1", "a1_l3", "beta")}),
            seed=int(d["seed"]),
            lr=d["lr"],
            batch_size=int(d["batch_size"]),
            epochs=int(d["epochs"]),
            dtype=d["dtype"],
        )
    except KeyError as exc:
        raise ConfigError(f"model config is missing {exc.args[0]!r}") from None


def config_to_text(cfg: ExperimentConfig):
    d = model_config_to_dict(cfg.model)
    d.pop("omega")
    d["channels"] = ",".join(str(c) for c in cfg.model.channels)
    lines = [f"preset={cfg.preset}"] if cfg.preset else []
    lines += [f"{k}={v}" for k, v in d.items()]
    lines += [
        f"repetitions={cfg.repetitions}",
        f"seeds={','.join(str(s) for s in cfg.seeds)}",
        f"train_size={cfg.train_size if cfg.train_size is not None else 'all'}",
        f"val_size={cfg.val_size if cfg.val_size is not None else 'all'}",
        f"eval_batch_size={cfg.eval_batch_size}",
        f"per_class={cfg.per_class}",
        f"log_timing={cfg.log_timing}",
        f"figures={cfg.figures}",
    ]
    return "\n".join(lines) + "\n"
