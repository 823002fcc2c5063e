"""End-to-end orchestration: preprocessing, patches, training, evaluation,
confidence intervals and the benchmark sweep.

Runs are deterministic for a fixed seed: data generation, initialization,
shuffling and every update draw from seeded generators, so value columns in
the emitted reports are reproducible bit-for-bit (wall-time columns are the
only exception).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import objective
from .layers import maxpool_forward
from .multispace import multispace_reconstruct
from .network import (
    LossGrads,
    Network,
    NetworkConfig,
    backward,
    forward_autoencode,
    forward_classify,
    forward_full,
    init_network,
)
from .objective import LossCache, LossReport, PrevOutputBuffer
from .optimizer import AdamConfig, adam_converged, adam_init, adam_step

TRAIN_LOG_HEADER = ["epoch", "R", "R1", "RL", "S", "L", "MR", "EML", "accuracy"]
BENCHMARK_HEADER = ["input_size", "window", "pool_mode", "accuracy_pct",
                    "throughput_fps", "ci_center", "ci_halfwidth", "improvement_pct"]


class TrainingDiverged(RuntimeError):
    """Raised when a batch produces a non-finite objective."""


# ---------------------------------------------------------------------------
# data containers


@dataclass
class Dataset:
    """Square gray patches with integer labels, split into train and test."""

    train: list  # (patch (1,p,p), label) pairs
    test: list
    classes: int
    provenance: str = "synthetic"

    def __post_init__(self):
        sides = {s[0].shape for s in self.train + self.test}
        if len(sides) > 1:
            raise ValueError(f"patches are not uniformly sized: {sides}")
        for _, label in self.train + self.test:
            if not 0 <= label < self.classes:
                raise ValueError(f"label {label} outside [0,{self.classes})")

    @property
    def patch_size(self) -> int:
        ref = self.train[0] if self.train else self.test[0]
        return ref[0].shape[-1]


@dataclass
class Metrics:
    """Evaluation outcome of one network on one sample set."""

    accuracy_pct: float
    frames_per_second: float
    reconstruction_time_s: float
    classification_time_s: float
    ci_center: float
    ci_halfwidth: float
    n_tests: int


@dataclass
class BenchmarkRecord:
    """One sweep cell: averaged accuracy, throughput and CI over repeats.

    ``throughput_fps`` is frames over the mean reconstruction plus
    classification time, so the timing components always sum to the total
    the throughput implies.
    """

    input_size: int
    window: int
    pool_mode: str
    accuracy_pct: float
    throughput_fps: float
    ci_center: float
    ci_halfwidth: float
    improvement_pct: float
    accuracy_runs: tuple = ()
    reconstruction_time_s: float = 0.0
    classification_time_s: float = 0.0
    n_tests: int = 0

    def csv_row(self) -> list:
        return [self.input_size, self.window, self.pool_mode, self.accuracy_pct,
                self.throughput_fps, self.ci_center, self.ci_halfwidth,
                self.improvement_pct]


@dataclass
class TrainEpoch:
    """Per-epoch log entry: mean loss components plus training accuracy."""

    epoch: int
    report: LossReport
    accuracy_pct: float
    batch_reports: list = field(default_factory=list)

    def csv_row(self) -> list:
        r = self.report
        return [self.epoch, r.r, r.r1, r.rl, r.s, r.l, r.mr, r.eml, self.accuracy_pct]


# ---------------------------------------------------------------------------
# preprocessing and patch extraction


def preprocess(image) -> np.ndarray:
    """3x3 mean smoothing (replicate padding) then 2x2 stride-2 max pooling.

    Output side length is floor(side/2).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 1:
        raise ValueError(f"expected a (1,H,W) image, got shape {img.shape}")
    p = np.pad(img[0], 1, mode="edge")
    smooth = np.zeros_like(img[0])
    for dy in range(3):
        for dx in range(3):
            smooth += p[dy:dy + img.shape[1], dx:dx + img.shape[2]]
    smooth /= 9.0
    pooled, _ = maxpool_forward(smooth[None], 2, 2)
    return pooled


def extract_patches(image, patch: int, stride: int, limit: int | None = None,
                    seed: int = 0) -> list:
    """Raster-order valid patches; uniform seeded subsample above ``limit``."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 1:
        raise ValueError(f"expected a (1,H,W) image, got shape {img.shape}")
    _, h, w = img.shape
    if patch > h or patch > w:
        warnings.warn(f"patch size {patch} exceeds image extent {h}x{w}; "
                      "no patches extracted")
        return []
    rows = (h - patch) // stride + 1
    cols = (w - patch) // stride + 1
    coords = [(i * stride, j * stride) for i in range(rows) for j in range(cols)]
    if limit is not None and len(coords) > limit:
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(coords), size=limit, replace=False))
        coords = [coords[i] for i in pick]
    return [img[:, y:y + patch, x:x + patch].copy() for y, x in coords]


# ---------------------------------------------------------------------------
# synthetic data


def _blob_patch(rng, side: int) -> np.ndarray:
    # smooth and dark: low gradient, near-uniform co-occurrence windows
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    img = np.full((side, side), 0.06 + rng.uniform(-0.01, 0.01))
    for _ in range(3):
        cy, cx = rng.uniform(0, side, size=2)
        sig = rng.uniform(side / 6.0, side / 3.0)
        amp = rng.uniform(0.10, 0.18)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sig * sig))
    return np.clip(img, 0.0, 0.45)


def _stripe_patch(rng, side: int) -> np.ndarray:
    # mid brightness, oriented bands: strong directional gradient
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    theta = rng.uniform(0.0, np.pi)
    freq = rng.uniform(0.10, 0.16)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    wave = np.sin(2.0 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    return np.clip(0.5 + 0.30 * wave, 0.0, 1.0)


def _checker_patch(rng, side: int) -> np.ndarray:
    # bright, high frequency: dense edges, scattered co-occurrence pairs
    block = int(rng.integers(2, 5))
    yy, xx = np.mgrid[0:side, 0:side]
    board = ((yy // block + xx // block) % 2).astype(np.float64)
    img = 0.72 + 0.25 * board + rng.uniform(-0.03, 0.03, size=(side, side))
    return np.clip(img, 0.0, 1.0)


_TEXTURES = (_blob_patch, _stripe_patch, _checker_patch)


def synth_dataset(classes: int = 3, per_class: int = 150, patch: int = 32,
                  seed: int = 0) -> Dataset:
    """Balanced synthetic texture dataset, split 2:1 train:test per class.

    Three texture families cycle over the class indices: smooth blobs,
    oriented stripes, and noisy checkerboards; each family has a distinct
    brightness level and per-sample jitter. Deterministic under the seed.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if per_class < 3:
        raise ValueError(f"need at least 3 samples per class, got {per_class}")
    rng = np.random.default_rng(seed)
    n_train = (2 * per_class) // 3
    train, test = [], []
    for label in range(classes):
        make = _TEXTURES[label % len(_TEXTURES)]
        for i in range(per_class):
            sample = (make(rng, patch)[None], label)
            (train if i < n_train else test).append(sample)
    return Dataset(train=train, test=test, classes=classes, provenance="synthetic")


# ---------------------------------------------------------------------------
# training


def network_input(net: Network, patch) -> np.ndarray:
    """The tensor the network consumes: the multispace stack in mir mode,
    otherwise the gray patch itself. The reconstruction target is the same
    tensor."""
    if net.config.pool_mode == "mir":
        return multispace_reconstruct(patch).stacked
    return np.asarray(patch, dtype=np.float64)


def train(net: Network, dataset: Dataset, objective_mode: str = "enhanced",
          adam_cfg: AdamConfig | None = None, epochs: int = 50, batch: int = 16,
          lambda_s: float = 0.1, seed: int | None = None, tol: float = 1e-8):
    """Train a copy of ``net`` on the dataset's train split.

    Per batch: forward the autoencoder and classifier, assemble the loss
    report, backpropagate the selected objective, take one Adam step, then
    refresh the previous-output buffer. Stops early once the update's
    max-norm falls below ``tol``; ``epochs`` is the hard cap. Returns
    (trained network, per-epoch TrainEpoch log). The input network is left
    untouched.
    """
    if objective_mode not in objective.MODES:
        raise ValueError(f"unknown objective mode {objective_mode!r}")
    if not dataset.train:
        raise ValueError("empty training split")
    if batch < 1:
        raise ValueError("batch size must be positive")
    adam_cfg = adam_cfg or AdamConfig()
    work = net.clone()
    if epochs <= 0:
        return work, []

    inputs = [network_input(work, patch) for patch, _ in dataset.train]
    labels = [label for _, label in dataset.train]
    onehots = np.eye(work.config.classes)
    rng = np.random.default_rng(net.config.seed if seed is None else seed)
    state = adam_init(work.params, adam_cfg.alpha, adam_cfg.phi1,
                      adam_cfg.phi2, adam_cfg.epsilon)
    buffer = PrevOutputBuffer()
    log = []

    n = len(inputs)
    converged = False
    for epoch in range(epochs):
        order = rng.permutation(n)
        batch_reports = []
        correct = 0
        seen = 0
        for start in range(0, n, batch):
            ids = order[start:start + batch]
            recons, acts, probs_list, caches = [], [], [], []
            r_vals, r1_vals, rl_vals, diag = [], [], [], []
            for sid in ids:
                x = inputs[sid]
                recon, act, probs, cache = forward_full(work, x)
                onehot = onehots[labels[sid]]
                recons.append(recon)
                acts.append(act)
                probs_list.append(probs)
                caches.append(cache)
                r_vals.append(objective.squared_error(recon, x))
                r1_vals.append(objective.prev_step_squared_error(buffer.get(int(sid)), recon, x))
                rl_vals.append(objective.label_log_likelihood(onehot, probs))
                diag.append(float(forward_classify(work, x)[labels[sid]]))
                seen += 1
                if int(np.argmax(probs)) == labels[sid]:
                    correct += 1
            report = LossReport.from_components(
                float(np.mean(r_vals)), float(np.mean(r1_vals)),
                float(np.mean(rl_vals)),
                objective.sparsity_penalty(np.stack(acts)),
                lambda_s, objective_mode, orig_true_prob=float(np.mean(diag)))
            if not report.is_finite():
                raise TrainingDiverged(
                    f"non-finite objective at epoch {epoch}, batch {start // batch}: {report}")
            batch_reports.append(report)

            lg = objective.loss_backward(LossCache(
                mode=objective_mode, lambda_s=lambda_s,
                x_in=[inputs[sid] for sid in ids], x_out=recons,
                prev_out=[buffer.get(int(sid)) for sid in ids],
                labels=[onehots[labels[sid]] for sid in ids],
                probs=probs_list, activations=acts))
            total = None
            for i, cache in enumerate(caches):
                g = backward(work, cache, LossGrads(
                    d_recon=lg.d_x_out[i], d_probs=lg.d_probs[i],
                    d_enc_act=lg.d_activations[i]))
                if total is None:
                    total = g
                else:
                    for name in total:
                        total[name] += g[name]
            old_params = work.params
            work.params = adam_step(state, work.params, total)
            for sid, recon in zip(ids, recons):
                buffer.put(int(sid), recon)
            buffer.advance()
            delta = {k: work.params[k] - old_params[k] for k in work.params}
            if adam_converged(state, delta, tol):
                converged = True
                break

        epoch_report = LossReport.from_components(
            float(np.mean([b.r for b in batch_reports])),
            float(np.mean([b.r1 for b in batch_reports])),
            float(np.mean([b.rl for b in batch_reports])),
            float(np.mean([b.s for b in batch_reports])),
            lambda_s, objective_mode,
            orig_true_prob=float(np.mean([b.orig_true_prob for b in batch_reports])))
        log.append(TrainEpoch(epoch=epoch, report=epoch_report,
                              accuracy_pct=100.0 * correct / seen,
                              batch_reports=batch_reports))
        if converged:
            break
    return work, log


# ---------------------------------------------------------------------------
# evaluation and statistics


def evaluate(net: Network, dataset: Dataset, split: str = "test",
             z: float = 1.96) -> Metrics:
    """Accuracy, timing and a confidence interval over per-sample correctness.

    Reconstruction time covers the multispace transform (mir mode) plus the
    autoencoder pass; classification time covers the classifier head.
    Throughput is frames / (reconstruction + classification time).
    """
    samples = dataset.test if split == "test" else dataset.train
    if not samples:
        raise ValueError(f"empty {split} split")
    recon_time = 0.0
    classify_time = 0.0
    outcomes = []
    for patch, label in samples:
        t0 = time.perf_counter()
        x = network_input(net, patch)
        recon, _, _ = forward_autoencode(net, x)
        t1 = time.perf_counter()
        probs = forward_classify(net, recon)
        t2 = time.perf_counter()
        recon_time += t1 - t0
        classify_time += t2 - t1
        outcomes.append(100.0 if int(np.argmax(probs)) == label else 0.0)
    n = len(samples)
    center, halfwidth = confidence_interval(outcomes, z)
    total = recon_time + classify_time
    return Metrics(
        accuracy_pct=float(np.mean(outcomes)),
        frames_per_second=n / total if total > 0 else float("inf"),
        reconstruction_time_s=recon_time,
        classification_time_s=classify_time,
        ci_center=center, ci_halfwidth=halfwidth, n_tests=n)


def confidence_interval(samples, z: float = 1.96, sample_sigma: bool = False):
    """(center, halfwidth): mean and z*sigma/sqrt(n).

    Sigma divides by n (population form); ``sample_sigma`` switches to n-1.
    """
    arr = np.asarray(list(samples), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("confidence interval of no samples")
    if z < 0:
        raise ValueError(f"critical value must be non-negative, got {z}")
    center = float(arr.mean())
    ddof = 1 if sample_sigma else 0
    if arr.size - ddof <= 0:
        return center, 0.0
    sigma = float(np.sqrt((np.abs(arr - center) ** 2).sum() / (arr.size - ddof)))
    return center, float(z * sigma / np.sqrt(arr.size))


# ---------------------------------------------------------------------------
# benchmark sweep


_MODE_TAG = {"max": 0, "risa": 1, "mir": 2}


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


def benchmark_sweep(sizes, windows, modes, repeats: int = 3, *,
                    make_dataset=None, classes: int = 3, per_class: int = 30,
                    epochs: int = 5, batch: int = 16, filters: int = 8,
                    objective_mode: str = "enhanced", lambda_s: float = 0.1,
                    adam_cfg: AdamConfig | None = None, hidden: int = 256,
                    group_size: int = 2, seed: int = 0, z: float = 1.96) -> list:
    """Train and evaluate every (size, window, mode) cell ``repeats`` times.

    Datasets are shared across windows and modes within one (size, repeat)
    pair so the comparison is controlled; each cell's network seed derives
    from the master seed and the cell coordinates. Accuracy is averaged over
    repeats with a confidence interval; improvement_pct is the mir minus
    risa accuracy of the same (size, window) cell.
    """
    if repeats < 1:
        raise ValueError("repeats must be positive")
    modes = list(modes)
    for m in modes:
        if m not in _MODE_TAG:
            raise ValueError(f"unknown pool mode {m!r}")
    if make_dataset is None:
        def make_dataset(size, ds_seed):
            return synth_dataset(classes=classes, per_class=per_class,
                                 patch=size, seed=ds_seed)

    datasets = {}
    records = []
    for size in sorted(sizes):
        for rep in range(repeats):
            key = (size, rep)
            if key not in datasets:
                datasets[key] = make_dataset(size, _derived_seed(seed, size, rep))
        for window in sorted(windows):
            for mode in modes:
                accs, rts, cts, n_tests = [], [], [], 0
                for rep in range(repeats):
                    cfg = NetworkConfig(
                        input_size=size, window=window, filters=filters,
                        pool_mode=mode, classifier_hidden=hidden, classes=classes,
                        group_size=group_size,
                        seed=_derived_seed(seed, size, window, _MODE_TAG[mode], rep))
                    net = init_network(cfg)
                    trained, _ = train(net, datasets[(size, rep)],
                                       objective_mode=objective_mode,
                                       adam_cfg=adam_cfg, epochs=epochs,
                                       batch=batch, lambda_s=lambda_s)
                    metrics = evaluate(trained, datasets[(size, rep)], z=z)
                    accs.append(metrics.accuracy_pct)
                    rts.append(metrics.reconstruction_time_s)
                    cts.append(metrics.classification_time_s)
                    n_tests = metrics.n_tests
                center, halfwidth = confidence_interval(accs, z)
                mean_rt, mean_ct = float(np.mean(rts)), float(np.mean(cts))
                records.append(BenchmarkRecord(
                    input_size=size, window=window, pool_mode=mode,
                    accuracy_pct=float(np.mean(accs)),
                    throughput_fps=n_tests / (mean_rt + mean_ct),
                    ci_center=center, ci_halfwidth=halfwidth,
                    improvement_pct=float("nan"),
                    accuracy_runs=tuple(accs),
                    reconstruction_time_s=mean_rt,
                    classification_time_s=mean_ct,
                    n_tests=n_tests))

    by_cell = {(r.input_size, r.window, r.pool_mode): r for r in records}
    for rec in records:
        mir = by_cell.get((rec.input_size, rec.window, "mir"))
        risa = by_cell.get((rec.input_size, rec.window, "risa"))
        if mir is not None and risa is not None:
            rec.improvement_pct = mir.accuracy_pct - risa.accuracy_pct
    return records
