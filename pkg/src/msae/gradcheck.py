"""Finite-difference verification of every backward pass.

Central differences with step 1e-5 against the analytic gradients, per
coordinate. A coordinate passes when the relative error is below 1e-4 or the
absolute difference is below an FD-noise floor; max-pool coordinates sitting
within 1e-6 of a window tie are excluded. Used by the tests and by the
``gradcheck`` CLI command.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import objective
from .layers import (
    conv2d_backward,
    conv2d_forward,
    deconv2d_backward,
    deconv2d_forward,
    dense_backward,
    dense_forward,
    maxpool_backward,
    maxpool_forward,
    sigmoid,
    sigmoid_backward,
    softmax,
    softmax_backward,
    subspace_pool_backward,
    subspace_pool_forward,
)
from .network import LossGrads, Network, NetworkConfig, backward, forward_full, init_network

REL_TOL = 1e-4
ABS_FLOOR = 1e-7
FD_STEP = 1e-5
TIE_EPS = 1e-6


def central_diff(f, x, step: float = FD_STEP) -> np.ndarray:
    """Gradient of scalar f at x by central differences, coordinate-wise."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


@dataclass
class CheckResult:
    name: str
    checked: int
    excluded: int
    passed: int
    max_rel: float

    @property
    def frac_pass(self) -> float:
        return 1.0 if self.checked == 0 else self.passed / self.checked

    @property
    def ok(self) -> bool:
        return self.frac_pass >= 0.99

    def line(self) -> str:
        status = "pass" if self.ok else "FAIL"
        return (f"{status}  {self.name:<28s} coords={self.checked:<6d} "
                f"excluded={self.excluded:<4d} pass={self.frac_pass * 100.0:6.2f}%  "
                f"max_rel={self.max_rel:.3e}")


def compare(name: str, analytic, numeric, exclude=None) -> CheckResult:
    """Coordinate-wise comparison of analytic vs numeric gradients."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    keep = np.ones(a.size, dtype=bool)
    if exclude is not None:
        keep &= ~np.asarray(exclude, dtype=bool).ravel()
    a, n = a[keep], n[keep]
    diff = np.abs(a - n)
    denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
    rel = diff / denom
    ok = (rel < REL_TOL) | (diff < ABS_FLOOR)
    meaningful = rel[diff >= ABS_FLOOR]
    max_rel = float(meaningful.max()) if meaningful.size else 0.0
    return CheckResult(name=name, checked=int(a.size),
                       excluded=int((~keep).sum()),
                       passed=int(ok.sum()), max_rel=max_rel)


def _merge(name: str, results: list[CheckResult]) -> CheckResult:
    return CheckResult(
        name=name,
        checked=sum(r.checked for r in results),
        excluded=sum(r.excluded for r in results),
        passed=sum(r.passed for r in results),
        max_rel=max((r.max_rel for r in results), default=0.0),
    )


def maxpool_tie_mask(x, window: int, stride: int) -> np.ndarray:
    """Input coordinates that sit within TIE_EPS of a non-unique window max."""
    x = np.asarray(x, dtype=np.float64)
    mask = np.zeros(x.shape, dtype=bool)
    c, h, w = x.shape
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    for ch in range(c):
        for i in range(ho):
            for j in range(wo):
                win = x[ch, i * stride:i * stride + window, j * stride:j * stride + window]
                near = np.abs(win - win.max()) < TIE_EPS
                if near.sum() > 1:
                    mask[ch, i * stride:i * stride + window,
                         j * stride:j * stride + window] |= near
    return mask


# ---------------------------------------------------------------------------
# per-primitive checks (random projection turns each output into a scalar)


def check_conv2d(rng, shapes: int = 5) -> CheckResult:
    results = []
    for _ in range(shapes):
        c = int(rng.integers(1, 4))
        f = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        h = int(rng.integers(k, k + 5))
        w = int(rng.integers(k, k + 5))
        stride = int(rng.integers(1, 3))
        x = rng.standard_normal((c, h, w))
        kern = rng.standard_normal((f, c, k, k))
        bias = rng.standard_normal(f)
        proj = rng.standard_normal(conv2d_forward(x, kern, bias, stride).shape)
        gx, gk, gb = conv2d_backward(x, kern, stride, proj)
        results.append(compare("conv2d/input", gx, central_diff(
            lambda v: float((conv2d_forward(v, kern, bias, stride) * proj).sum()), x)))
        results.append(compare("conv2d/kernels", gk, central_diff(
            lambda v: float((conv2d_forward(x, v, bias, stride) * proj).sum()), kern)))
        results.append(compare("conv2d/bias", gb, central_diff(
            lambda v: float((conv2d_forward(x, kern, v, stride) * proj).sum()), bias)))
    return _merge("conv2d", results)


def check_deconv2d(rng, shapes: int = 5) -> CheckResult:
    results = []
    for _ in range(shapes):
        ci = int(rng.integers(1, 4))
        co = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        h = int(rng.integers(1, 5))
        w = int(rng.integers(1, 5))
        stride = int(rng.integers(1, 3))
        x = rng.standard_normal((ci, h, w))
        kern = rng.standard_normal((ci, co, k, k))
        bias = rng.standard_normal(co)
        proj = rng.standard_normal(deconv2d_forward(x, kern, bias, stride).shape)
        gx, gk, gb = deconv2d_backward(x, kern, stride, proj)
        results.append(compare("deconv2d/input", gx, central_diff(
            lambda v: float((deconv2d_forward(v, kern, bias, stride) * proj).sum()), x)))
        results.append(compare("deconv2d/kernels", gk, central_diff(
            lambda v: float((deconv2d_forward(x, v, bias, stride) * proj).sum()), kern)))
        results.append(compare("deconv2d/bias", gb, central_diff(
            lambda v: float((deconv2d_forward(x, kern, v, stride) * proj).sum()), bias)))
    return _merge("deconv2d", results)


def check_maxpool(rng, shapes: int = 5) -> CheckResult:
    results = []
    for _ in range(shapes):
        c = int(rng.integers(1, 4))
        window = int(rng.integers(1, 4))
        h = int(rng.integers(window, window + 5))
        w = int(rng.integers(window, window + 5))
        stride = int(rng.integers(1, 3))
        x = rng.standard_normal((c, h, w))
        out, idx = maxpool_forward(x, window, stride)
        proj = rng.standard_normal(out.shape)
        gx = maxpool_backward(idx, proj)

        def f(v):
            o, _ = maxpool_forward(v, window, stride)
            return float((o * proj).sum())

        results.append(compare("maxpool/input", gx, central_diff(f, x),
                               exclude=maxpool_tie_mask(x, window, stride)))
    return _merge("maxpool", results)


def check_subspace_pool(rng, shapes: int = 5) -> CheckResult:
    results = []
    for _ in range(shapes):
        g = int(rng.integers(1, 4))
        m = int(rng.integers(1, 4))
        h = int(rng.integers(2, 6))
        w = int(rng.integers(2, 6))
        # keep coordinates away from the non-differentiable zero point
        x = rng.standard_normal((m * g, h, w))
        x = np.sign(x) * (np.abs(x) + 0.05)
        proj = rng.standard_normal((m, h, w))
        gx = subspace_pool_backward(x, g, proj)
        results.append(compare("subspace/input", gx, central_diff(
            lambda v: float((subspace_pool_forward(v, g) * proj).sum()), x)))
    return _merge("subspace_pool", results)


def check_dense(rng, shapes: int = 5) -> CheckResult:
    results = []
    for _ in range(shapes):
        din = int(rng.integers(1, 8))
        dout = int(rng.integers(1, 8))
        x = rng.standard_normal(din)
        weight = rng.standard_normal((dout, din))
        bias = rng.standard_normal(dout)
        proj = rng.standard_normal(dout)
        gx, gw, gb = dense_backward(x, weight, proj)
        results.append(compare("dense/input", gx, central_diff(
            lambda v: float(dense_forward(v, weight, bias) @ proj), x)))
        results.append(compare("dense/weight", gw, central_diff(
            lambda v: float(dense_forward(x, v, bias) @ proj), weight)))
        results.append(compare("dense/bias", gb, central_diff(
            lambda v: float(dense_forward(x, weight, v) @ proj), bias)))
    return _merge("dense", results)


def check_sigmoid(rng, shapes: int = 5) -> CheckResult:
    results = []
    for _ in range(shapes):
        x = rng.standard_normal((int(rng.integers(1, 5)), int(rng.integers(1, 5))))
        proj = rng.standard_normal(x.shape)
        gx = sigmoid_backward(sigmoid(x), proj)
        results.append(compare("sigmoid/input", gx, central_diff(
            lambda v: float((sigmoid(v) * proj).sum()), x)))
    return _merge("sigmoid", results)


def check_softmax(rng, shapes: int = 5) -> CheckResult:
    results = []
    for _ in range(shapes):
        x = rng.standard_normal(int(rng.integers(2, 8)))
        proj = rng.standard_normal(x.shape)
        gx = softmax_backward(softmax(x), proj)
        results.append(compare("softmax/input", gx, central_diff(
            lambda v: float(softmax(v) @ proj), x)))
    return _merge("softmax", results)


# ---------------------------------------------------------------------------
# full graph: autoencoder + classifier under the combined objective


def _graph_loss(net: Network, patch, target, onehot, lambda_s: float) -> float:
    recon, pooled, probs, _ = forward_full(net, patch)
    return (objective.squared_error(recon, target)
            - objective.label_log_likelihood(onehot, probs)
            + lambda_s * objective.sparsity_penalty(pooled[None]))


def check_full_graph(rng, pool_mode: str, lambda_s: float = 0.1) -> CheckResult:
    """FD over every parameter of a small network, all loss paths active."""
    cfg = NetworkConfig(input_size=10, window=3, filters=4, pool_mode=pool_mode,
                        classifier_hidden=6, classes=3,
                        seed=int(rng.integers(0, 2 ** 31)), group_size=2)
    net = init_network(cfg)
    patch = rng.uniform(0.0, 1.0, size=(cfg.in_channels, cfg.input_size, cfg.input_size))
    target = patch
    onehot = np.zeros(cfg.classes)
    onehot[int(rng.integers(cfg.classes))] = 1.0

    recon, pooled, probs, cache = forward_full(net, patch)
    lg = objective.loss_backward(objective.LossCache(
        mode="enhanced", lambda_s=lambda_s,
        x_in=[target], x_out=[recon], prev_out=[None],
        labels=[onehot], probs=[probs], activations=[pooled]))
    analytic = backward(net, cache, LossGrads(
        d_recon=lg.d_x_out[0], d_probs=lg.d_probs[0], d_enc_act=lg.d_activations[0]))

    results = []
    for name in net.params:
        def f(v, _name=name):
            trial = Network(config=cfg, params={**net.params, _name: v})
            return _graph_loss(trial, patch, target, onehot, lambda_s)

        numeric = central_diff(f, net.params[name].copy())
        results.append(compare(f"graph[{pool_mode}]/{name}", analytic[name], numeric))
    return _merge(f"full_graph[{pool_mode}]", results)


def run_all(seed: int = 0, shapes: int = 5) -> list[CheckResult]:
    """Every primitive plus the full graph in each pool mode."""
    rng = np.random.default_rng(seed)
    results = [
        check_conv2d(rng, shapes),
        check_deconv2d(rng, shapes),
        check_maxpool(rng, shapes),
        check_subspace_pool(rng, shapes),
        check_dense(rng, shapes),
        check_sigmoid(rng, shapes),
        check_softmax(rng, shapes),
    ]
    for mode in ("max", "risa", "mir"):
        results.append(check_full_graph(rng, mode))
    return results
