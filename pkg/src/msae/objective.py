"""Training objectives: classic reconstruction loss and the enhanced variant.

The classic objective is squared reconstruction error plus a weighted
sparsity penalty. The enhanced objective replaces the squared error with the
previous training iteration's reconstruction error (held constant, no
gradient) and subtracts the label log-likelihood of the classifier on the
reconstruction, so minimizing it drives classification cross-entropy down
while the sparsity term still shapes the encoder.

All scalars are float64. Component values and gradients are exposed
separately so the reported quantities and the optimization path stay
auditable; the finite-difference suite checks every gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS = 1e-12

MODES = ("classic", "enhanced")


def _f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def squared_error(x_out, x_in) -> float:
    """Sum of squared differences between a reconstruction and its target."""
    x_out, x_in = _f64(x_out), _f64(x_in)
    if x_out.shape != x_in.shape:
        raise ValueError(f"shape mismatch: {x_out.shape} vs {x_in.shape}")
    d = x_out - x_in
    return float((d * d).sum())


def prev_step_squared_error(prev_out, x_out, x_in) -> float:
    """Squared error of the previous iteration's reconstruction vs the target.

    ``prev_out`` is treated as a constant (no gradient reaches it). When no
    previous output exists yet (first visit), falls back to the current
    reconstruction, which then does carry gradient.
    """
    if prev_out is None:
        return squared_error(x_out, x_in)
    prev_out, x_in = _f64(prev_out), _f64(x_in)
    if prev_out.shape != x_in.shape:
        raise ValueError(f"shape mismatch: {prev_out.shape} vs {x_in.shape}")
    d = prev_out - x_in
    return float((d * d).sum())


def sparsity_penalty(activations, eps: float = EPS) -> float:
    """Mean entropy-like penalty over encoder filter intensities.

    Each filter's intensity is its mean activation (over batch and space for
    a 4-D stack, over space for one sample), clamped to [eps, 1]; the penalty
    averages -r*ln(r) across filters and is always >= 0.
    """
    r = filter_means(activations, eps)
    return float(np.mean(-r * np.log(r)))


def filter_means(activations, eps: float = EPS) -> np.ndarray:
    """Per-filter mean activation, clamped to [eps, 1]."""
    a = _f64(activations)
    if a.size == 0:
        raise ValueError("empty activations")
    if a.ndim == 4:  # (batch, filters, h, w)
        means = a.mean(axis=(0, 2, 3))
    elif a.ndim == 3:  # (filters, h, w)
        means = a.mean(axis=(1, 2))
    elif a.ndim == 1:  # already per-filter intensities
        means = a
    else:
        raise ValueError(f"activations must be 1-D, 3-D or 4-D, got shape {a.shape}")
    return np.clip(means, eps, 1.0)


def label_log_likelihood(labels, probs, eps: float = EPS) -> float:
    """Sum of label-weighted log probabilities (<= 0 for one-hot labels).

    ``labels`` is one-hot, ``probs`` the classifier output on the
    reconstructed image; probabilities are floored at eps before the log.
    """
    labels, probs = _f64(labels), _f64(probs)
    if labels.shape != probs.shape:
        raise ValueError(f"length mismatch: {labels.shape} vs {probs.shape}")
    return float((labels * np.log(np.maximum(probs, eps))).sum())


def classic_objective(r: float, s: float, lambda_s: float) -> float:
    """Reconstruction error plus weighted sparsity penalty."""
    return r + lambda_s * s


def enhanced_objective(r1: float, rl: float, s: float, lambda_s: float) -> float:
    """Previous-step reconstruction error minus label log-likelihood plus
    weighted sparsity penalty. Since rl <= 0, the subtraction adds the
    classification cross-entropy."""
    return (r1 - rl) + lambda_s * s


@dataclass
class LossReport:
    """Per-batch values of every objective component.

    Field names match the training-log CSV columns: r (squared error),
    r1 (previous-step variant), rl (label log-likelihood), s (sparsity),
    l = r + lambda_s*s, mr = r1 - rl, eml = mr + lambda_s*s.
    ``orig_true_prob`` is a diagnostic: the classifier's true-class
    probability on the network input itself (no role in any objective).
    """

    r: float
    r1: float
    rl: float
    s: float
    lambda_s: float
    l: float
    mr: float
    eml: float
    mode: str
    orig_true_prob: float | None = None

    @classmethod
    def from_components(cls, r, r1, rl, s, lambda_s, mode, orig_true_prob=None):
        if mode not in MODES:
            raise ValueError(f"unknown objective mode {mode!r}")
        r, r1, rl, s = float(r), float(r1), float(rl), float(s)
        return cls(
            r=r, r1=r1, rl=rl, s=s, lambda_s=float(lambda_s),
            l=classic_objective(r, s, lambda_s),
            mr=r1 - rl,
            eml=enhanced_objective(r1, rl, s, lambda_s),
            mode=mode,
            orig_true_prob=orig_true_prob,
        )

    @property
    def objective_value(self) -> float:
        """The value actually minimized in this report's mode."""
        return self.l if self.mode == "classic" else self.eml

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in (self.r, self.r1, self.rl, self.s,
                                            self.l, self.mr, self.eml))


class PrevOutputBuffer:
    """Per-sample store of the previous training iteration's reconstruction.

    Empty before the first iteration; entries are copied on insert so later
    parameter updates cannot alias them (they are constants of the past).
    """

    def __init__(self):
        self._store: dict[int, np.ndarray] = {}
        self.iteration = 0

    def get(self, key: int):
        return self._store.get(key)

    def put(self, key: int, reconstruction) -> None:
        self._store[key] = np.array(reconstruction, dtype=np.float64, copy=True)

    def advance(self) -> None:
        self.iteration += 1

    def __len__(self) -> int:
        return len(self._store)


@dataclass
class LossCache:
    """Everything the backward pass needs for one batch."""

    mode: str
    lambda_s: float
    x_in: list  # per-sample reconstruction targets
    x_out: list  # per-sample reconstructions
    prev_out: list  # per-sample previous reconstructions (None on first visit)
    labels: list  # per-sample one-hot labels
    probs: list  # per-sample classifier outputs
    activations: list  # per-sample encoder activation maps (M,h,w)
    eps: float = EPS


@dataclass
class LossGradients:
    """Per-sample gradients w.r.t. reconstruction, probabilities, activations."""

    d_x_out: list = field(default_factory=list)
    d_probs: list = field(default_factory=list)
    d_activations: list = field(default_factory=list)


def loss_backward(cache: LossCache) -> LossGradients:
    """Gradients of the batch-mean objective w.r.t. the forward outputs.

    Batch reduction is the mean of per-sample terms; the sparsity penalty is
    computed once from the stacked activations. In enhanced mode the
    previous-step error is a constant whenever a previous output exists, so
    d/d_x_out is zero there; the first visit falls back to the current
    reconstruction and does carry gradient.
    """
    if cache.mode not in MODES:
        raise ValueError(f"unknown objective mode {cache.mode!r}")
    n = len(cache.x_out)
    if n == 0:
        raise ValueError("empty batch")
    grads = LossGradients()

    stacked = np.stack([_f64(a) for a in cache.activations])
    raw_means = stacked.mean(axis=(0, 2, 3))
    r = np.clip(raw_means, cache.eps, 1.0)
    m = r.shape[0]
    per_cell = stacked[0, 0].size * n  # batch * h * w cells per filter
    ds_dr = np.where((raw_means > cache.eps) & (raw_means < 1.0),
                     -(np.log(r) + 1.0) / m, 0.0)
    d_act_common = ds_dr[:, None, None] / per_cell * cache.lambda_s

    for i in range(n):
        x_out, x_in = _f64(cache.x_out[i]), _f64(cache.x_in[i])
        if cache.mode == "classic" or cache.prev_out[i] is None:
            d_xo = 2.0 * (x_out - x_in) / n
        else:
            d_xo = np.zeros_like(x_out)
        grads.d_x_out.append(d_xo)

        probs = _f64(cache.probs[i])
        if cache.mode == "enhanced":
            labels = _f64(cache.labels[i])
            d_p = -(labels / np.maximum(probs, cache.eps)) / n
        else:
            d_p = np.zeros_like(probs)
        grads.d_probs.append(d_p)

        grads.d_activations.append(np.broadcast_to(
            d_act_common, stacked[i].shape).copy())
    return grads
