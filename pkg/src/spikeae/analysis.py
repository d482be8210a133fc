"""Activity statistics and latent-representation analysis.

Activity (per layer, over a fixed example set):

* a neuron is *active* if it spiked at least once on at least one example;
  ANR = active / total and INP = 1 - ANR;
* AFR is the mean, over active neurons, of spikes / (T * examples);
* RAE is the mean over examples of (#neurons active on that example) divided
  by the number of active neurons.

Latent analysis works on an examples x neurons matrix (SAE: mean firing
rate, AE: latent activation, VAE: mu), globally min-max scaled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError
from .models import forward
from .tensor import no_grad

HIST_BINS = 50
METRICS = ("euclidean", "standardized_euclidean", "squared_euclidean", "manhattan", "correlation")


@dataclass
class LayerActivity:
    anr: float
    afr: float
    rae: float
    inp: float
    histogram: np.ndarray  # HIST_BINS counts of per-neuron normalized rates
    spikes_per_example: np.ndarray
    rates: np.ndarray  # per-neuron normalized firing rate
    silent: bool = False  # no active neuron; AFR and RAE reported as 0


class ActivityAccumulator:
    """Streams spike counts batch by batch and yields a LayerActivity.

    ``add`` takes counts of shape (examples, neurons).
    """

    def __init__(self, T):
        self.T = T
        self.spikes = None
        self.active = None
        self.active_per_example = []
        self.spikes_per_example = []

    def add(self, counts):
        counts = np.asarray(counts).reshape(len(counts), -1)
        if self.spikes is None:
            self.spikes = np.zeros(counts.shape[1], dtype=np.float64)
            self.active = np.zeros(counts.shape[1], dtype=bool)
        elif counts.shape[1] != self.spikes.size:
            raise DimensionError(f"expected {self.spikes.size} neurons, got {counts.shape[1]}")
        fired = counts > 0
        self.spikes += counts.sum(axis=0)
        self.active |= fired.any(axis=0)
        self.active_per_example.append(fired.sum(axis=1))
        self.spikes_per_example.append(counts.sum(axis=1))

    def finish(self) -> LayerActivity:
        if self.spikes is None:
            raise ContractError("no examples were accumulated")
        per_example = np.concatenate(self.active_per_example)
        n_examples = len(per_example)
        n_active = int(self.active.sum())
        anr = n_active / self.spikes.size
        rates = self.spikes / (self.T * n_examples)
        if n_active:
            afr = float(rates[self.active].mean())
            rae = float(per_example.mean() / n_active)
        else:
            afr = rae = 0.0
        hist, _ = np.histogram(np.clip(rates, 0.0, 1.0), bins=HIST_BINS, range=(0.0, 1.0))
        return LayerActivity(
            anr=anr,
            afr=afr,
            rae=rae,
            inp=1.0 - anr,
            histogram=hist,
            spikes_per_example=np.concatenate(self.spikes_per_example),
            rates=rates,
            silent=n_active == 0,
        )


def activity_stats(counts, T) -> LayerActivity:
    """Statistics from a (neurons, examples) spike-count matrix."""
    counts = np.asarray(counts)
    if counts.ndim != 2:
        raise DimensionError(f"expected a (neurons, examples) matrix, got shape {counts.shape}")
    acc = ActivityAccumulator(T)
    acc.add(counts.T)
    return acc.finish()


def spike_counts(train):
    """(T, N, ...) spike train -> (N, neurons) counts."""
    data = train.data if hasattr(train, "data") else train
    return data.sum(axis=0).reshape(data.shape[1], -1)


# ---------------------------------------------------------------------------
# latent matrices


@dataclass
class LatentMatrix:
    values: np.ndarray  # (examples, n_z)
    labels: np.ndarray
    scale: tuple  # (lo, hi) target range
    raw: np.ndarray = None
    degenerate: bool = False


def scale_range(values, lo=0.0, hi=1.0):
    """Global min-max scaling into [lo, hi]; returns (scaled, degenerate)."""
    values = np.asarray(values, dtype=np.float64)
    vmin, vmax = values.min(), values.max()
    if vmax == vmin:
        return np.full_like(values, lo if lo == 0 else 0.0), True
    unit = (values - vmin) / (vmax - vmin)
    if lo == 0.0 and hi == 1.0:
        return unit, False
    return lo + (hi - lo) * unit, False


def latent_activity(model, images, rng):
    """Unscaled latent matrix: SAE firing rate, AE activation, VAE mu."""
    with no_grad():
        rec = forward(model, images, rng, train=False)
    if model.family == "SAE":
        T = model.config.coding.T
        return rec.latent_spikes.data.sum(axis=0) / T
    if model.family == "AE":
        return rec.z.data.copy()
    return rec.mu.data.copy()


def latent_matrix(model, images, labels, rng) -> LatentMatrix:
    raw = np.asarray(latent_activity(model, images, rng), dtype=np.float64)
    lo, hi = (-1.0, 1.0) if model.family == "VAE" else (0.0, 1.0)
    values, degenerate = scale_range(raw, lo, hi)
    return LatentMatrix(values, np.asarray(labels), (lo, hi), raw=raw, degenerate=degenerate)


# ---------------------------------------------------------------------------
# distances, ratios, clustering


def constant_rows(matrix):
    m = np.asarray(matrix, dtype=np.float64)
    return np.flatnonzero(m.max(axis=1) == m.min(axis=1))


def pairwise_distance(matrix, metric="euclidean"):
    """Symmetric (n, n) distance matrix with an exact zero diagonal.

    Standardized euclidean scales each column by its sample standard
    deviation (ddof=1), dropping zero-variance columns.  Correlation distance
    is 1 - Pearson r; pairs involving a constant row get distance 1.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ContractError(f"need at least two rows, got shape {m.shape}")
    if metric not in METRICS:
        raise ContractError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if metric == "standardized_euclidean":
        std = m.std(axis=0, ddof=1)
        keep = std > 0
        m = m[:, keep] / std[keep]
        metric = "euclidean"
    if metric == "correlation":
        centred = m - m.mean(axis=1, keepdims=True)
        norm = np.sqrt((centred * centred).sum(axis=1))
        flat = norm == 0
        unit = np.divide(centred, norm[:, None], out=np.zeros_like(centred), where=~flat[:, None])
        d = 1.0 - np.clip(unit @ unit.T, -1.0, 1.0)
        d[flat, :] = 1.0
        d[:, flat] = 1.0
    else:
        diff = m[:, None, :] - m[None, :, :]
        if metric == "manhattan":
            d = np.abs(diff).sum(axis=2)
        else:
            d = (diff * diff).sum(axis=2)
            if metric == "euclidean":
                d = np.sqrt(d)
    d = np.triu(d, 1)
    d = d + d.T
    same = (m[:, None, :] == m[None, :, :]).all(axis=2)
    d[same] = 0.0
    return d


def intra_inter_ratio(distances, labels):
    """Mean within-class over mean between-class distance (i < j pairs).

    NaN when every between-class distance is zero (a collapsed latent).
    """
    d = np.asarray(distances, dtype=np.float64)
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise ContractError("intra/inter ratio needs at least two classes")
    if counts.min() < 2:
        raise ContractError("every class needs at least two members")
    iu = np.triu_indices(len(labels), 1)
    same = labels[iu[0]] == labels[iu[1]]
    vals = d[iu]
    inter = vals[~same].mean()
    if inter == 0:
        return float("nan")
    return float(vals[same].mean() / inter)


@dataclass
class Dendrogram:
    order: list  # leaf order
    merges: np.ndarray = field(repr=False)  # (n-1, 4): left id, right id, height, size


def hierarchical_order(distances) -> Dendrogram:
    """Average-linkage (UPGMA) agglomerative clustering.

    Leaves are ids 0..n-1; the k-th merge creates id n+k.  Each merged
    cluster takes over the lower of its two slots.  Ties resolve to the
    lowest (row, column) slot pair, so the result is a pure function of the
    distance matrix.
    """
    d = np.array(distances, dtype=np.float64)
    n = d.shape[0]
    if n < 2 or d.shape != (n, n):
        raise ContractError(f"need a square distance matrix with n >= 2, got {d.shape}")
    work = d.copy()
    np.fill_diagonal(work, np.inf)
    ids = list(range(n))
    sizes = np.ones(n)
    alive = np.ones(n, dtype=bool)
    merges = np.zeros((n - 1, 4))
    children = {}
    for k in range(n - 1):
        upper = np.where(np.triu(np.outer(alive, alive), 1), work, np.inf)
        flat = int(np.argmin(upper))
        i, j = divmod(flat, n)
        height = upper[i, j]
        a, b = ids[i], ids[j]
        left, right = min(a, b), max(a, b)
        new_id = n + k
        merges[k] = (left, right, height, sizes[i] + sizes[j])
        children[new_id] = (left, right)
        merged = (sizes[i] * work[i] + sizes[j] * work[j]) / (sizes[i] + sizes[j])
        work[i, :] = merged
        work[:, i] = merged
        work[i, i] = np.inf
        work[j, :] = np.inf
        work[:, j] = np.inf
        sizes[i] += sizes[j]
        alive[j] = False
        ids[i] = new_id
    order = []
    stack = [2 * n - 2]
    while stack:
        node = stack.pop()
        if node < n:
            order.append(node)
        else:
            left, right = children[node]
            stack.append(right)
            stack.append(left)
    return Dendrogram(order, merges)


@dataclass
class CorrelationMaps:
    example_corr: np.ndarray
    example_order: list
    neuron_corr: np.ndarray | None
    neuron_order: list | None
    neuron_index: np.ndarray  # columns kept in the neuron map
    flags: list = field(default_factory=list)


def _corr(rows):
    """Pearson matrix; constant rows correlate 0 with others and 1 with themselves."""
    rows = np.asarray(rows, dtype=np.float64)
    centred = rows - rows.mean(axis=1, keepdims=True)
    norm = np.sqrt((centred * centred).sum(axis=1))
    unit = np.divide(centred, norm[:, None], out=np.zeros_like(centred), where=norm[:, None] > 0)
    c = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(c, 1.0)
    return c


def correlation_maps(latent) -> CorrelationMaps:
    """Pearson maps between examples (rows) and between active neurons."""
    values = latent.values if isinstance(latent, LatentMatrix) else np.asarray(latent, dtype=np.float64)
    flags = []
    if len(constant_rows(values)):
        flags.append("constant example rows: correlation set to 0")
    ex = _corr(values)
    ex_order = hierarchical_order(pairwise_distance(ex)).order
    active = np.flatnonzero(values.max(axis=0) > values.min(axis=0))
    if len(active) < 2:
        flags.append("fewer than two active neurons: neuron map skipped")
        return CorrelationMaps(ex, ex_order, None, None, active, flags)
    nc = _corr(values[:, active].T)
    nc_order = hierarchical_order(pairwise_distance(nc)).order
    return CorrelationMaps(ex, ex_order, nc, nc_order, active, flags)
