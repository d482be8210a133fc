"""Spiking convolutional autoencoders trained through membrane potentials.

Submodules: ``tensor`` (autodiff tape and convolutions), ``lif`` (neuron
dynamics), ``coding`` (Poisson encoding, max-potential decoding), ``models``,
``losses``, ``optim``, ``data`` (MNIST IDX), ``analysis`` (activity and latent
statistics), ``config``, ``checkpoint``, ``experiment`` and ``cli``.
"""

from .analysis import activity_stats, hierarchical_order, intra_inter_ratio, pairwise_distance
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PRESETS, ExperimentConfig, load_config
from .errors import (
    ConfigError,
    ConsistencyError,
    ContractError,
    DataError,
    DimensionError,
    FormatError,
    NumericError,
    SpikeAEError,
)
from .lif import LifParams, lif_scan, lif_step
from .losses import LossBreakdown, total_objective
from .models import PARAMETER_TABLE, ModelConfig, RegWeights, build_model, forward
from .optim import AdamState, adam_step, init_weights
from .tensor import GradTape, Tensor, grad_check, no_grad

__version__ = "0.1.0"
