"""Autoencoder plus classifier head over the layer primitives.

Topology: encoder conv(k, F) -> sigmoid -> pool, decoder transposed convs
mirroring the encoder's shape changes -> sigmoid reconstruction, classifier
flatten -> dense(hidden) -> sigmoid -> dense(classes) -> softmax.

Pool modes:
  max   spatial max pooling, gray input and target
  risa  channel-group L2 pooling (subspace baseline), gray input and target
  mir   spatial max pooling over the 3-channel multispace stack, which is
        both input and reconstruction target

Weights are Glorot-uniform from a seeded generator so identical seeds give
bitwise-identical networks.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .layers import (
    PoolIndices,
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

POOL_MODES = ("max", "risa", "mir")


@dataclass
class NetworkConfig:
    """Topology and initialization parameters of one network."""

    input_size: int
    window: int = 3
    filters: int = 8
    pool_mode: str = "max"
    pool_window: int = 2
    pool_stride: int = 2
    classifier_hidden: int = 256
    classes: int = 3
    seed: int = 0
    group_size: int = 2

    def __post_init__(self):
        if self.pool_mode not in POOL_MODES:
            raise ValueError(f"pool_mode must be one of {POOL_MODES}, got {self.pool_mode!r}")
        if self.window not in (3, 4, 5):
            raise ValueError(f"window must be 3, 4 or 5, got {self.window}")
        if self.classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.classes}")
        if self.classifier_hidden < self.classes:
            raise ValueError("classifier_hidden must be at least the class count")
        if self.filters < 1 or self.input_size < 1:
            raise ValueError("filters and input_size must be positive")
        if self.pool_mode == "risa":
            if self.group_size < 1 or self.filters % self.group_size != 0:
                raise ValueError(
                    f"filters ({self.filters}) must be divisible by "
                    f"group_size ({self.group_size})")
        if self.conv_out_size < 1:
            raise ValueError(f"window {self.window} too large for input {self.input_size}")
        if self.pool_mode != "risa" and self.conv_out_size < self.pool_window:
            raise ValueError("pool window exceeds the convolution output")

    @property
    def in_channels(self) -> int:
        return 3 if self.pool_mode == "mir" else 1

    @property
    def conv_out_size(self) -> int:
        return self.input_size - self.window + 1

    @property
    def pooled_size(self) -> int:
        if self.pool_mode == "risa":
            return self.conv_out_size
        return (self.conv_out_size - self.pool_window) // self.pool_stride + 1

    @property
    def pooled_channels(self) -> int:
        if self.pool_mode == "risa":
            return self.filters // self.group_size
        return self.filters

    @property
    def up_kernel(self) -> int:
        """Transposed-conv kernel that maps the pooled side back to the
        convolution output side at the pool stride."""
        return self.conv_out_size - self.pool_stride * (self.pooled_size - 1)

    @property
    def flat_dim(self) -> int:
        return self.in_channels * self.input_size * self.input_size


@dataclass
class Network:
    """Parameter tensors (stable names, fixed order) plus their config."""

    config: NetworkConfig
    params: dict = field(default_factory=dict)

    @property
    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def clone(self) -> "Network":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})


SIGMOID_GAIN = 4.0  # logistic slope at 0 is 1/4; rescale keeps layer variance


def _glorot(rng, shape, fan_in, fan_out, gain: float = 1.0) -> np.ndarray:
    s = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def parameter_shapes(config: NetworkConfig) -> dict:
    """Name -> shape for every parameter tensor, in creation order."""
    k, f, c = config.window, config.filters, config.in_channels
    pc = config.pooled_channels
    shapes = {"enc.kernels": (f, c, k, k), "enc.bias": (f,)}
    if config.pool_mode != "risa":
        ku = config.up_kernel
        shapes["dec_up.kernels"] = (f, f, ku, ku)
        shapes["dec_up.bias"] = (f,)
    shapes["dec_out.kernels"] = (pc, c, k, k)
    shapes["dec_out.bias"] = (c,)
    shapes["cls1.weight"] = (config.classifier_hidden, config.flat_dim)
    shapes["cls1.bias"] = (config.classifier_hidden,)
    shapes["cls2.weight"] = (config.classes, config.classifier_hidden)
    shapes["cls2.bias"] = (config.classes,)
    return shapes


def init_network(config: NetworkConfig) -> Network:
    """Glorot-uniform weights, zero biases, from the config's seed.

    Weights feeding sigmoid layers carry the logistic gain correction
    (bound 4*sqrt(6/(fan_in+fan_out))); without it the sigmoid stack
    attenuates activations so hard that training never leaves the
    uniform-prediction plateau. The softmax layer uses the plain bound.
    """
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        elif name.startswith("enc"):
            f, c, k, _ = shape
            params[name] = _glorot(rng, shape, c * k * k, f * k * k, SIGMOID_GAIN)
        elif name.startswith("dec"):
            ci, co, k, _ = shape
            params[name] = _glorot(rng, shape, ci * k * k, co * k * k, SIGMOID_GAIN)
        elif name == "cls1.weight":
            out_d, in_d = shape
            params[name] = _glorot(rng, shape, in_d, out_d, SIGMOID_GAIN)
        else:
            out_d, in_d = shape
            params[name] = _glorot(rng, shape, in_d, out_d)
    return Network(config=config, params=params)


@dataclass
class ForwardCache:
    """Intermediate values one backward pass needs."""

    x: np.ndarray
    a1: np.ndarray
    pooled: np.ndarray
    pool_idx: PoolIndices | None
    up_a: np.ndarray | None
    recon: np.ndarray
    flat: np.ndarray | None = None
    hidden: np.ndarray | None = None
    probs: np.ndarray | None = None


def forward_autoencode(net: Network, patch):
    """Encode and decode one patch.

    Returns (reconstruction, encoder_activations, cache); the encoder
    activations are the post-pool sigmoid feature maps that feed the
    sparsity penalty. In mir mode ``patch`` must already be the 3-channel
    multispace stack.
    """
    cfg, p = net.config, net.params
    x = np.asarray(patch, dtype=np.float64)
    expected = (cfg.in_channels, cfg.input_size, cfg.input_size)
    if x.shape != expected:
        raise ValueError(f"patch shape {x.shape} does not match config {expected}")
    a1 = sigmoid(conv2d_forward(x, p["enc.kernels"], p["enc.bias"], 1))
    if cfg.pool_mode == "risa":
        pooled = subspace_pool_forward(a1, cfg.group_size)
        idx = None
        up_a = None
        rz = deconv2d_forward(pooled, p["dec_out.kernels"], p["dec_out.bias"], 1)
    else:
        pooled, idx = maxpool_forward(a1, cfg.pool_window, cfg.pool_stride)
        up_a = sigmoid(deconv2d_forward(pooled, p["dec_up.kernels"],
                                        p["dec_up.bias"], cfg.pool_stride))
        rz = deconv2d_forward(up_a, p["dec_out.kernels"], p["dec_out.bias"], 1)
    recon = sigmoid(rz)
    cache = ForwardCache(x=x, a1=a1, pooled=pooled, pool_idx=idx, up_a=up_a, recon=recon)
    return recon, pooled, cache


def forward_classify(net: Network, reconstruction) -> np.ndarray:
    """Class probabilities of a reconstructed image (flatten, dense, softmax)."""
    probs, _, _ = _classify(net, reconstruction)
    return probs


def _classify(net: Network, reconstruction):
    cfg, p = net.config, net.params
    recon = np.asarray(reconstruction, dtype=np.float64)
    flat = recon.reshape(-1)
    if flat.size != cfg.flat_dim:
        raise ValueError(f"reconstruction size {flat.size} does not match "
                         f"classifier input {cfg.flat_dim}")
    hidden = sigmoid(dense_forward(flat, p["cls1.weight"], p["cls1.bias"]))
    logits = dense_forward(hidden, p["cls2.weight"], p["cls2.bias"])
    return softmax(logits), flat, hidden


def forward_full(net: Network, patch):
    """Autoencode then classify; cache covers the whole graph.

    Returns (reconstruction, encoder_activations, probs, cache).
    """
    recon, pooled, cache = forward_autoencode(net, patch)
    probs, flat, hidden = _classify(net, recon)
    cache.flat, cache.hidden, cache.probs = flat, hidden, probs
    return recon, pooled, probs, cache


@dataclass
class LossGrads:
    """Gradients of a scalar objective w.r.t. the forward outputs."""

    d_recon: np.ndarray | None = None
    d_probs: np.ndarray | None = None
    d_enc_act: np.ndarray | None = None


def backward(net: Network, cache: ForwardCache, loss_grads: LossGrads) -> dict:
    """Backpropagate through classifier, decoder, pool and encoder.

    Returns one gradient tensor per parameter tensor, same names and shapes.
    """
    cfg, p = net.config, net.params
    if cache.probs is None or cache.flat is None or cache.hidden is None:
        raise ValueError("stale cache: classifier pass missing (use forward_full)")
    grads = {}

    d_probs = loss_grads.d_probs
    if d_probs is None:
        d_probs = np.zeros_like(cache.probs)
    d_logits = softmax_backward(cache.probs, d_probs)
    d_hidden, grads["cls2.weight"], grads["cls2.bias"] = dense_backward(
        cache.hidden, p["cls2.weight"], d_logits)
    d_h1 = sigmoid_backward(cache.hidden, d_hidden)
    d_flat, grads["cls1.weight"], grads["cls1.bias"] = dense_backward(
        cache.flat, p["cls1.weight"], d_h1)

    d_recon = d_flat.reshape(cache.recon.shape)
    if loss_grads.d_recon is not None:
        d_recon = d_recon + loss_grads.d_recon
    d_rz = sigmoid_backward(cache.recon, d_recon)

    if cfg.pool_mode == "risa":
        d_pooled, grads["dec_out.kernels"], grads["dec_out.bias"] = deconv2d_backward(
            cache.pooled, p["dec_out.kernels"], 1, d_rz)
    else:
        d_up_a, grads["dec_out.kernels"], grads["dec_out.bias"] = deconv2d_backward(
            cache.up_a, p["dec_out.kernels"], 1, d_rz)
        d_uz = sigmoid_backward(cache.up_a, d_up_a)
        d_pooled, grads["dec_up.kernels"], grads["dec_up.bias"] = deconv2d_backward(
            cache.pooled, p["dec_up.kernels"], cfg.pool_stride, d_uz)

    if loss_grads.d_enc_act is not None:
        d_pooled = d_pooled + loss_grads.d_enc_act

    if cfg.pool_mode == "risa":
        d_a1 = subspace_pool_backward(cache.a1, cfg.group_size, d_pooled)
    else:
        d_a1 = maxpool_backward(cache.pool_idx, d_pooled)
    d_z1 = sigmoid_backward(cache.a1, d_a1)
    _, grads["enc.kernels"], grads["enc.bias"] = conv2d_backward(
        cache.x, p["enc.kernels"], 1, d_z1)
    return grads
