"""Minimal numpy CNN engine for child networks.

Networks are linear chains of ``Conv`` (same padding, stride 1, ReLU, optional
2x2 max-pool), ``FullyConnected`` (ReLU) and a final ``Output`` classifier.
Weights are stored in crossbar orientation: a conv kernel is a
``(C_in*FH*FW, F)`` matrix and a dense layer is ``(fan_in, neurons)``, so each
column is one output neuron.

Quantization and device noise act on the forward path only. The quantizer
passes gradients straight through inside its range, and SGD always updates the
clean full-precision master weights. Biases live in the digital periphery and
are neither quantized nor perturbed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .quant import QuantizationScheme, quantize_tensor, ste_mask

__all__ = [
    "Conv",
    "FullyConnected",
    "Output",
    "LayerKind",
    "ShapeError",
    "TrainingError",
    "Network",
    "TrainConfig",
    "NoiseSpec",
    "shape_trace",
    "build_network",
    "sample_deltas",
    "forward",
    "loss_and_grads",
    "softmax_cross_entropy",
    "train_step",
    "train",
    "evaluate_accuracy",
]


@dataclass(frozen=True)
class Conv:
    filter_h: int
    filter_w: int
    num_filters: int
    pool: bool = False

    def __post_init__(self):
        for name in ("filter_h", "filter_w"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise ValueError(f"{name} must be odd and >= 1, got {v}")
        if self.num_filters < 1:
            raise ValueError("num_filters must be >= 1")


@dataclass(frozen=True)
class FullyConnected:
    neurons: int

    def __post_init__(self):
        if self.neurons < 1:
            raise ValueError("neurons must be >= 1")


@dataclass(frozen=True)
class Output:
    classes: int

    def __post_init__(self):
        if self.classes < 1:
            raise ValueError("classes must be >= 1")


LayerKind = Union[Conv, FullyConnected, Output]


class ShapeError(ValueError):
    """Layer chain does not fit the input; ``layer`` is the offending index."""

    def __init__(self, layer: int, message: str):
        super().__init__(f"layer {layer}: {message}")
        self.layer = layer


class TrainingError(RuntimeError):
    pass


def shape_trace(layers: Sequence[LayerKind], input_shape: tuple[int, int, int]):
    """Return ``[(in_shape, out_shape), ...]`` and validate the chain.

    Conv shapes are ``(C, H, W)``; dense shapes are ``(n,)``. The conv output
    shape is taken after the optional pool.
    """
    if any(d < 1 for d in input_shape):
        raise ShapeError(0, f"input shape {input_shape} must be positive")
    if not layers or not isinstance(layers[-1], Output):
        raise ShapeError(len(layers), "chain must end with an Output layer")
    shape: tuple = tuple(input_shape)
    trace = []
    for i, layer in enumerate(layers):
        if isinstance(layer, Output) and i != len(layers) - 1:
            raise ShapeError(i, "Output layer must be last")
        if isinstance(layer, Conv):
            if len(shape) != 3:
                raise ShapeError(i, "conv layer after a dense layer")
            c, h, w = shape
            if h < layer.filter_h or w < layer.filter_w:
                raise ShapeError(i, f"spatial size {h}x{w} below filter {layer.filter_h}x{layer.filter_w}")
            if layer.pool:
                if h < 2 or w < 2:
                    raise ShapeError(i, f"cannot pool spatial size {h}x{w}")
                h, w = h // 2, w // 2
            out = (layer.num_filters, h, w)
        else:
            n = layer.neurons if isinstance(layer, FullyConnected) else layer.classes
            out = (n,)
        trace.append((shape, out))
        shape = out
    return trace


def _fan_in(layer: LayerKind, in_shape: tuple) -> int:
    if isinstance(layer, Conv):
        return in_shape[0] * layer.filter_h * layer.filter_w
    return int(np.prod(in_shape))


def _fan_out(layer: LayerKind) -> int:
    if isinstance(layer, Conv):
        return layer.num_filters
    return layer.neurons if isinstance(layer, FullyConnected) else layer.classes


@dataclass
class Network:
    layers: tuple
    input_shape: tuple
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @property
    def classes(self) -> int:
        return self.layers[-1].classes

    def copy(self) -> "Network":
        return replace(self, weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases])

    def perturbed(self, deltas: Sequence[np.ndarray]) -> "Network":
        """Copy with ``deltas`` added to the weights."""
        return replace(self, weights=[w + d for w, d in zip(self.weights, deltas)],
                       biases=[b.copy() for b in self.biases])

    def state(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out


def build_network(arch, input_shape: tuple[int, int, int], rng_seed: int) -> Network:
    """Build and initialise a network from an architecture or a layer list.

    Weights are drawn from ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``; biases start at 0.
    """
    layers = tuple(arch.layer_kinds()) if hasattr(arch, "layer_kinds") else tuple(arch)
    trace = shape_trace(layers, tuple(input_shape))
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for layer, (in_shape, _) in zip(layers, trace):
        fan_in, fan_out = _fan_in(layer, in_shape), _fan_out(layer)
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(layers=layers, input_shape=tuple(input_shape), weights=weights, biases=biases)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("need epochs >= 0 and batch_size >= 1")


@dataclass(frozen=True)
class NoiseSpec:
    per_layer_sigma: tuple = ()
    enabled: bool = True
    resample_per_batch: bool = True

    def __post_init__(self):
        if any(s < 0 for s in self.per_layer_sigma):
            raise ValueError("noise sigma must be >= 0")

    @property
    def active(self) -> bool:
        return self.enabled and any(s > 0 for s in self.per_layer_sigma)


def sample_deltas(net: Network, noise: NoiseSpec | None, rng: np.random.Generator):
    """One Gaussian draw per weight element; ``None`` when noise is inactive."""
    if noise is None or not noise.active:
        return None
    if len(noise.per_layer_sigma) != len(net.weights):
        raise ValueError(f"noise has {len(noise.per_layer_sigma)} sigmas for {len(net.weights)} layers")
    return [rng.normal(0.0, s, size=w.shape) if s > 0 else np.zeros_like(w)
            for w, s in zip(net.weights, noise.per_layer_sigma)]


# -- layer kernels -----------------------------------------------------------

def _im2col(x: np.ndarray, fh: int, fw: int) -> np.ndarray:
    b, c, h, w = x.shape
    ph, pw = fh // 2, fw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (fh, fw), axis=(2, 3))  # b, c, h, w, fh, fw
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * fh * fw)


def _col2im(dcols: np.ndarray, x_shape: tuple, fh: int, fw: int) -> np.ndarray:
    b, c, h, w = x_shape
    ph, pw = fh // 2, fw // 2
    d = dcols.reshape(b, h, w, c, fh, fw)
    dxp = np.zeros((b, c, h + 2 * ph, w + 2 * pw))
    for i in range(fh):
        for j in range(fw):
            dxp[:, :, i:i + h, j:j + w] += d[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, ph:ph + h, pw:pw + w]


def _pool_forward(x: np.ndarray):
    b, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    blocks = (x[:, :, :2 * ho, :2 * wo].reshape(b, c, ho, 2, wo, 2)
              .transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, 4))
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout: np.ndarray, idx: np.ndarray, x_shape: tuple) -> np.ndarray:
    b, c, h, w = x_shape
    ho, wo = h // 2, w // 2
    dblocks = np.zeros((b, c, ho, wo, 4))
    np.put_along_axis(dblocks, idx[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, :, :2 * ho, :2 * wo] = (dblocks.reshape(b, c, ho, wo, 2, 2)
                                  .transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * ho, 2 * wo))
    return dx


def _run(net: Network, x: np.ndarray, quant: QuantizationScheme | None, deltas, keep: bool):
    if quant is not None and len(quant) != len(net.weights):
        raise ValueError(f"quantization scheme has {len(quant)} layers, network has {len(net.weights)}")
    caches = []
    a = x
    for i, layer in enumerate(net.layers):
        cache = {"in_shape": a.shape}
        if quant is not None:
            if keep:
                cache["a_mask"] = ste_mask(a, quant.qa[i])
            a = quantize_tensor(a, quant.qa[i])
            w = quantize_tensor(net.weights[i], quant.qw[i])
        else:
            w = net.weights[i]
        if deltas is not None:
            w = w + deltas[i]
        cache["w_eff"] = w
        if isinstance(layer, Conv):
            b, _, h, wd = a.shape
            cols = _im2col(a, layer.filter_h, layer.filter_w)
            z = cols @ w + net.biases[i]
            z = z.reshape(b, h, wd, -1).transpose(0, 3, 1, 2)
            cache["cols"] = cols
        else:
            flat = a.reshape(a.shape[0], -1)
            z = flat @ w + net.biases[i]
            cache["cols"] = flat
        if not isinstance(layer, Output):
            cache["relu"] = z > 0
            z = np.where(cache["relu"], z, 0.0)
            if isinstance(layer, Conv) and layer.pool:
                cache["pre_pool"] = z.shape
                z, cache["pool_idx"] = _pool_forward(z)
        a = z
        if keep:
            caches.append(cache)
    return a, caches


def forward(net: Network, batch: np.ndarray, quant: QuantizationScheme | None = None,
            noise: NoiseSpec | None = None, rng: np.random.Generator | None = None,
            deltas=None) -> np.ndarray:
    """Logits of shape ``(batch, classes)``.

    With ``noise`` active a fresh perturbation is drawn from ``rng``; pass
    ``deltas`` instead to reuse a fixed draw. Stored weights are not touched.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[1:] != tuple(net.input_shape):
        raise ShapeError(0, f"batch shape {batch.shape[1:]} does not match input {net.input_shape}")
    if deltas is None and noise is not None and noise.active:
        if rng is None:
            raise ValueError("noisy forward needs an rng")
        deltas = sample_deltas(net, noise, rng)
    logits, _ = _run(net, batch, quant, deltas, keep=False)
    return logits


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean loss and its gradient w.r.t. the logits."""
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def loss_and_grads(net: Network, batch: np.ndarray, labels: np.ndarray,
                   quant: QuantizationScheme | None = None, deltas=None):
    """Loss plus gradients w.r.t. the master weights and biases."""
    logits, caches = _run(net, np.asarray(batch, dtype=np.float64), quant, deltas, keep=True)
    loss, g = softmax_cross_entropy(logits, np.asarray(labels))
    dws, dbs = [None] * len(net.layers), [None] * len(net.layers)
    for i in reversed(range(len(net.layers))):
        layer, cache = net.layers[i], caches[i]
        if not isinstance(layer, Output):
            if "pool_idx" in cache:
                g = _pool_backward(g, cache["pool_idx"], cache["pre_pool"])
            g = g * cache["relu"]
        if isinstance(layer, Conv):
            g2 = g.transpose(0, 2, 3, 1).reshape(-1, g.shape[1])
        else:
            g2 = g
        dw = cache["cols"].T @ g2
        if quant is not None:
            dw = dw * ste_mask(net.weights[i], quant.qw[i])
        dws[i] = dw
        dbs[i] = g2.sum(axis=0)
        if i == 0:
            break
        dcols = g2 @ cache["w_eff"].T
        if isinstance(layer, Conv):
            g = _col2im(dcols, cache["in_shape"], layer.filter_h, layer.filter_w)
        else:
            g = dcols.reshape(cache["in_shape"])
        if quant is not None:
            g = g * cache["a_mask"]
    return loss, dws, dbs


def train_step(net: Network, batch: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
               quant: QuantizationScheme | None = None, noise: NoiseSpec | None = None,
               rng: np.random.Generator | None = None) -> float:
    """One SGD step on ``net`` in place; returns the mean batch loss.

    A fresh perturbation is drawn for this step when ``noise`` is active.
    """
    deltas = sample_deltas(net, noise, rng) if noise is not None and noise.active else None
    return _sgd(net, *loss_and_grads(net, batch, labels, quant, deltas), cfg.learning_rate)


def _sgd(net: Network, loss: float, dws, dbs, lr: float) -> float:
    if not math.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}")
    for w, b, dw, db in zip(net.weights, net.biases, dws, dbs):
        w -= lr * dw
        b -= lr * db
    return loss


def _split(dataset, name: str):
    if hasattr(dataset, "split"):
        part = dataset.split(name)
        return part.images, part.labels
    return dataset


def train(net: Network, dataset, cfg: TrainConfig, quant: QuantizationScheme | None = None,
          noise: NoiseSpec | None = None) -> tuple[Network, float]:
    """Shuffled mini-batch SGD for ``cfg.epochs``; returns a trained copy and held-out accuracy.

    The held-out accuracy uses the quantized but noiseless forward path.
    """
    x, y = _split(dataset, "train")
    if len(y) == 0:
        raise ValueError("empty training split")
    net = net.copy()
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(2)
    order_rng, noise_rng = np.random.default_rng(seeds[0]), np.random.default_rng(seeds[1])
    per_epoch = noise is not None and noise.active and not noise.resample_per_batch
    for _ in range(cfg.epochs):
        order = order_rng.permutation(len(y))
        deltas = sample_deltas(net, noise, noise_rng) if per_epoch else None
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if per_epoch:
                _sgd(net, *loss_and_grads(net, x[idx], y[idx], quant, deltas), cfg.learning_rate)
            else:
                train_step(net, x[idx], y[idx], cfg, quant, noise, noise_rng)
    xt, yt = _split(dataset, "test")
    return net, _accuracy(net, xt, yt, quant, None)


def _accuracy(net: Network, x: np.ndarray, y: np.ndarray, quant, deltas, chunk: int = 256) -> float:
    if len(y) == 0:
        return 0.0
    correct = 0
    for start in range(0, len(y), chunk):
        logits, _ = _run(net, x[start:start + chunk], quant, deltas, keep=False)
        correct += int((logits.argmax(axis=1) == y[start:start + chunk]).sum())
    return correct / len(y)


def evaluate_accuracy(net: Network, dataset, quant: QuantizationScheme | None = None,
                      noise: NoiseSpec | None = None, n_trials: int = 1,
                      rng: np.random.Generator | None = None, split: str = "test") -> float:
    """Mean accuracy over ``n_trials`` independent device-variation draws.

    Each trial is one simulated chip: a single perturbation is drawn and held
    for the whole split.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    x, y = _split(dataset, split)
    if noise is None or not noise.active:
        return _accuracy(net, x, y, quant, None)
    if rng is None:
        raise ValueError("noisy evaluation needs an rng")
    accs = [_accuracy(net, x, y, quant, sample_deltas(net, noise, rng)) for _ in range(n_trials)]
    return float(np.mean(accs))
