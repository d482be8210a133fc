"""Training, evaluation and analysis drivers behind the CLI.

Everything a run writes is a pure function of (config, seed): timing goes
to its own file and only enters metrics.csv when ``log_timing`` is set.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, config_to_text
from .data import batches, class_balanced_sample, load_mnist, resolve_data_dir
from .errors import NumericError
from .losses import COMPONENTS, LossBreakdown, total_objective
from .models import build_model, forward
from .optim import AdamState, adam_step, init_weights
from .tensor import GradTape, no_grad

METRICS_COLUMNS = (
    "epoch", "split", "mse", "total", "l2", "p1", "p2", "a1", "a1_l3", "kl",
    "anr_l3", "afr_l3", "rae_l3", "inp_l3", "spikes_per_example", "batch_ms", "seed",
)
_ACTIVITY_FIELDS = ("anr", "afr", "rae", "inp")


def fmt(value):
    if value is None or value == "":
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.10g}"


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_matrix(path, matrix, row_labels=None, col_labels=None):
    m = np.asarray(matrix)
    header = ([""] if row_labels is not None else []) + [
        str(c) for c in (col_labels if col_labels is not None else range(m.shape[1]))
    ]
    rows = []
    for i, r in enumerate(m):
        rows.append(([str(row_labels[i])] if row_labels is not None else []) + [fmt(v) for v in r])
    return write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# activity bookkeeping


def layer_counts(model, record):
    """Per-layer (examples, neurons) spike counts.

    Baselines have no spikes; their latent unit counts as having fired once
    (T=1) whenever its value is non-zero.
    """
    if model.family == "SAE":
        return [analysis.spike_counts(s) for s in record.spikes]
    z = record.z.data
    return [None, None, (z != 0).astype(np.float64).reshape(len(z), -1)]


def _activity_T(model):
    return model.config.coding.T if model.family == "SAE" else 1


class _Running:
    """Example-weighted means of loss components plus layer activity."""

    def __init__(self, model):
        self.model = model
        self.n = 0
        self.sums = dict.fromkeys((*COMPONENTS, "total"), 0.0)
        self.acc = {}
        self.spikes = 0.0

    def add(self, record, breakdown: LossBreakdown, n):
        self.n += n
        for k, v in breakdown.as_dict().items():
            self.sums[k] += v * n
        for i, counts in enumerate(layer_counts(self.model, record), 1):
            if counts is None:
                continue
            self.acc.setdefault(i, analysis.ActivityAccumulator(_activity_T(self.model))).add(counts)
            if self.model.family == "SAE":
                self.spikes += float(counts.sum())

    def result(self):
        means = {k: v / self.n for k, v in self.sums.items()}
        activity = {i: acc.finish() for i, acc in sorted(self.acc.items())}
        spe = self.spikes / self.n if self.model.family == "SAE" else None
        return EvalResult(LossBreakdown(**means), activity, spe, self.n)


@dataclass
class EvalResult:
    losses: LossBreakdown
    activity: dict  # 1-based layer -> LayerActivity
    spikes_per_example: float | None  # mean over examples, all layers (SAE only)
    examples: int

    @property
    def latent(self):
        return self.activity.get(3)


def evaluate(model, dataset, batch_size=100, rng=None) -> EvalResult:
    """Loss components and activity over a dataset, without gradients."""
    rng = rng if rng is not None else np.random.default_rng(0)
    run = _Running(model)
    with no_grad():
        for idx in batches(dataset, batch_size):
            x = dataset.images[idx]
            record = forward(model, x, rng, train=False)
            _, parts = total_objective(model, record, x)
            run.add(record, parts, len(idx))
    return run.result()


def metrics_row(epoch, split, res: EvalResult, seed, batch_ms=None):
    d = res.losses.as_dict()
    lat = res.latent
    act = [getattr(lat, f) if lat is not None else None for f in _ACTIVITY_FIELDS]
    return [epoch, split, d["rec"], d["total"], d["l2"], d["p1"], d["p2"], d["a1"], d["a1_l3"], d["kl"],
            *act, res.spikes_per_example, batch_ms, seed]


# ---------------------------------------------------------------------------
# training


@dataclass
class RunResult:
    seed: int
    directory: Path
    rows: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_mse: float = float("inf")
    model: object = None


def load_splits(cfg: ExperimentConfig):
    root = resolve_data_dir(cfg.data_dir)
    train = load_mnist(root, "train").head(cfg.train_size)
    val = load_mnist(root, "validation").head(cfg.val_size)
    return train, val


def train_run(cfg: ExperimentConfig, seed, train_set, val_set, out_dir, log=print) -> RunResult:
    """One seeded repetition: init, Adam epochs, per-epoch validation."""
    mcfg = cfg.model.with_(seed=seed)
    model = build_model(mcfg)
    rng = np.random.default_rng(seed)
    init_weights(model, rng)
    state = AdamState(lr=mcfg.lr)
    run_dir = Path(out_dir) / f"seed_{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    result = RunResult(seed, run_dir, model=model)
    timing = []
    names = list(model.params)
    for epoch in range(1, mcfg.epochs + 1):
        run = _Running(model)
        epoch_ms = []
        for b, idx in enumerate(batches(train_set, mcfg.batch_size, rng), 1):
            t0 = time.perf_counter()
            x = train_set.images[idx]
            with GradTape() as tape:
                record = forward(model, x, rng, train=True)
                loss, parts = total_objective(model, record, x)
            if not parts.is_finite():
                comps = ", ".join(f"{k}={v:.6g}" for k, v in parts.as_dict().items())
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b} (seed {seed}): {comps}")
            grads = tape.backward(loss, params=list(model.params.values()))
            adam_step(model.params, {n: grads[model.params[n]] for n in names}, state)
            run.add(record, parts, len(idx))
            del record, loss, grads, tape
            ms = (time.perf_counter() - t0) * 1000.0
            epoch_ms.append(ms)
            timing.append((epoch, b, len(idx), ms))
        batch_ms = float(np.mean(epoch_ms)) if cfg.log_timing else None
        train_res = run.result()
        val_res = evaluate(model, val_set, cfg.eval_batch_size, np.random.default_rng([seed, epoch]))
        result.rows.append(metrics_row(epoch, "train", train_res, seed, batch_ms))
        result.rows.append(metrics_row(epoch, "validation", val_res, seed))
        val_mse = val_res.losses.rec
        log(f"seed {seed} epoch {epoch}: train mse {train_res.losses.rec:.4f}, val mse {val_mse:.4f}"
            + (f", anr_l3 {val_res.latent.anr:.3f}" if val_res.latent is not None else ""))
        if val_mse < result.best_val_mse:
            result.best_val_mse, result.best_epoch = val_mse, epoch
            save_checkpoint(run_dir / "best.ckpt", model, {"epoch": epoch, "seed": seed, "val_mse": val_mse})
    save_checkpoint(run_dir / "final.ckpt", model, {"epoch": mcfg.epochs, "seed": seed})
    write_csv(run_dir / "timing.csv", ("epoch", "batch", "examples", "ms"), timing)
    return result


def cmd_train(cfg: ExperimentConfig, out_dir, log=print):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config_to_text(cfg))
    train_set, val_set = load_splits(cfg)
    log(f"train {cfg.model.family} ({cfg.preset or 'custom'}): {len(train_set)} train / {len(val_set)} validation")
    results, rows = [], []
    for seed in cfg.run_seeds():
        res = train_run(cfg, seed, train_set, val_set, out, log)
        results.append(res)
        rows.extend(res.rows)
        # rewritten after each seed so partial sweeps leave usable output
        write_csv(out / "metrics.csv", METRICS_COLUMNS, rows)
    write_csv(out / "metrics.csv", METRICS_COLUMNS, rows)
    if cfg.figures:
        from . import plots

        plots.training_curves(rows, out / "training_curves.png")
    return results


# ---------------------------------------------------------------------------
# evaluation


def _load_split(cfg, split):
    root = resolve_data_dir(cfg.data_dir)
    ds = load_mnist(root, split)
    limit = cfg.val_size if split == "validation" else cfg.train_size
    return ds.head(limit)


def cmd_eval(cfg: ExperimentConfig, checkpoint, out_dir, split="validation", log=print):
    model, meta = load_checkpoint(checkpoint)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = _load_split(cfg, split)
    seed = cfg.model.seed
    res = evaluate(model, ds, cfg.eval_batch_size, np.random.default_rng(seed))
    d = res.losses.as_dict()
    header = ("family", "split", "examples", "mse", "total", "l2", "p1", "p2", "a1", "a1_l3", "kl",
              "spikes_per_example", "seed")
    write_csv(out / "eval.csv", header, [[model.family, split, res.examples, d["rec"], d["total"], d["l2"],
                                         d["p1"], d["p2"], d["a1"], d["a1_l3"], d["kl"], res.spikes_per_example,
                                         seed]])
    write_csv(out / "activity.csv", ("layer", "anr", "afr", "rae", "inp", "silent"),
              [[i, a.anr, a.afr, a.rae, a.inp, a.silent] for i, a in res.activity.items()])
    edges = np.linspace(0.0, 1.0, analysis.HIST_BINS + 1)
    hist_rows = [[i, edges[b], edges[b + 1], int(a.histogram[b])]
                 for i, a in res.activity.items() for b in range(analysis.HIST_BINS)]
    write_csv(out / "histograms.csv", ("layer", "bin_lo", "bin_hi", "count"), hist_rows)

    # one example per class, first in split order
    idx = class_balanced_sample(ds, per_class=1)
    x = ds.images[idx]
    with no_grad():
        rec = forward(model, x, np.random.default_rng(seed), train=False)
    x_hat = rec.x_hat.data
    _write_reconstructions(out / "reconstructions", x, x_hat, ds.labels[idx])
    if cfg.figures:
        from . import plots

        plots.reconstructions(x, x_hat, ds.labels[idx], out / "reconstructions.png")
        plots.histograms(res.activity, out / "histograms.png")
    log(f"eval {model.family} on {split} ({res.examples} examples): mse {d['rec']:.4f}")
    return res


def write_pgm(path, image):
    """Binary PGM, intensities clipped to [0, 1] and scaled to 0..255."""
    img = np.clip(np.asarray(image, dtype=np.float64).squeeze(), 0.0, 1.0)
    pixels = np.round(img * 255).astype(np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())


def _write_reconstructions(folder, x, x_hat, labels):
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, label in enumerate(labels):
        for kind, img in (("original", x[i]), ("reconstruction", x_hat[i])):
            flat = np.asarray(img, dtype=np.float64).ravel()
            rows.append([i, int(label), kind, *flat])
            write_pgm(folder / f"{i:02d}_digit{int(label)}_{kind}.pgm", img)
    n_pix = x[0].size
    write_csv(folder / "pixels.csv", ("index", "label", "kind", *[f"p{j}" for j in range(n_pix)]), rows)


# ---------------------------------------------------------------------------
# latent analysis


@dataclass
class AnalysisResult:
    latent: analysis.LatentMatrix
    ratios: dict
    orders: dict
    maps: analysis.CorrelationMaps
    histogram: np.ndarray


def cmd_analyze(cfg: ExperimentConfig, checkpoint, out_dir, split="validation", log=print):
    model, meta = load_checkpoint(checkpoint)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = _load_split(cfg, split)
    seed = cfg.model.seed
    idx = class_balanced_sample(ds, cfg.per_class, np.random.default_rng(seed))
    labels = ds.labels[idx]
    lat = analysis.latent_matrix(model, ds.images[idx], labels, np.random.default_rng(seed))
    neuron_names = [f"z{j}" for j in range(lat.values.shape[1])]
    row_names = [f"{i}:{int(lab)}" for i, lab in enumerate(labels)]
    write_matrix(out / "latent_matrix.csv", lat.values, row_names, neuron_names)

    ratios, orders = {}, {}
    for metric in analysis.METRICS:
        d = analysis.pairwise_distance(lat.values, metric)
        write_matrix(out / f"distance_{metric}.csv", d, row_names, row_names)
        ratios[metric] = analysis.intra_inter_ratio(d, labels)
        dendro = analysis.hierarchical_order(d)
        orders[metric] = dendro.order
        write_csv(out / f"leaf_order_{metric}.csv", ("position", "example", "label"),
                  [[p, e, int(labels[e])] for p, e in enumerate(dendro.order)])
    write_csv(out / "ratios.csv", ("metric", "intra_inter_ratio"), [[m, r] for m, r in ratios.items()])

    maps = analysis.correlation_maps(lat)
    eo = maps.example_order
    write_matrix(out / "example_correlation.csv", maps.example_corr[np.ix_(eo, eo)],
                 [row_names[i] for i in eo], [row_names[i] for i in eo])
    if maps.neuron_corr is not None:
        no = maps.neuron_order
        names = [neuron_names[maps.neuron_index[i]] for i in no]
        write_matrix(out / "neuron_correlation.csv", maps.neuron_corr[np.ix_(no, no)], names, names)

    # per-neuron mean activity; SAE raw rates already live in [0, 1]
    if model.family == "SAE":
        rates = lat.raw
    else:
        lo, hi = lat.scale
        rates = (lat.values - lo) / (hi - lo)
    hist, edges = np.histogram(np.clip(rates.mean(axis=0), 0.0, 1.0), bins=analysis.HIST_BINS, range=(0.0, 1.0))
    write_csv(out / "latent_histogram.csv", ("bin_lo", "bin_hi", "count"),
              [[edges[b], edges[b + 1], int(hist[b])] for b in range(analysis.HIST_BINS)])

    active = int(len(maps.neuron_index))
    lines = [
        f"family: {model.family}",
        f"n_z: {model.config.n_z}",
        f"checkpoint: {Path(checkpoint).name}",
        f"examples: {len(labels)} ({cfg.per_class} per class, {split})",
        f"latent scale: [{lat.scale[0]:g}, {lat.scale[1]:g}]",
        f"degenerate latent: {str(lat.degenerate).lower()}",
        f"non-constant latent neurons: {active} / {lat.values.shape[1]}",
        "intra/inter distance ratio:",
        *[f"  {m}: {r:.6f}" if np.isfinite(r) else f"  {m}: undefined (all distances zero)"
          for m, r in ratios.items()],
        *[f"note: {flag}" for flag in maps.flags],
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    if cfg.figures:
        from . import plots

        plots.latent_overview(lat, orders["euclidean"], maps, out / "latent_analysis.png")
        plots.rate_histogram(hist, out / "latent_histogram.png")
    log(f"analyze {model.family}: euclidean intra/inter {ratios['euclidean']:.4f}")  # nan when collapsed
    return AnalysisResult(lat, ratios, orders, maps, hist)
