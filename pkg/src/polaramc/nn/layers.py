"""Layers and a sequential network with hand-written backpropagation.

Tensors are float64 numpy arrays.  Image tensors are NCHW.  Every layer
caches what its backward pass needs during ``forward``; ``backward`` fills
``layer.grads`` and returns the gradient with respect to the layer input.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np


class ShapeError(ValueError):
    pass


@dataclass
class LayerSpec:
    kind: str
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.options}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        return cls(d.pop("kind"), d)


def _he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


@numba.njit(cache=True)
def _conv_forward(x, w, y, st):
    n_b, n_c = x.shape[0], x.shape[1]
    n_f, k = w.shape[0], w.shape[2]
    ho, wo = y.shape[2], y.shape[3]
    for b in range(n_b):
        for f in range(n_f):
            out = y[b, f]
            out[:] = 0.0
            for c in range(n_c):
                xc = x[b, c]
                for i in range(k):
                    for j in range(k):
                        wv = w[f, c, i, j]
                        for h in range(ho):
                            for q in range(wo):
                                out[h, q] += wv * xc[h * st + i, q * st + j]


@numba.njit(cache=True, fastmath=True)
def _conv_grad_weight(x, dy, gw, st):
    n_b, n_c = x.shape[0], x.shape[1]
    n_f, k = gw.shape[0], gw.shape[2]
    ho, wo = dy.shape[2], dy.shape[3]
    gw[:] = 0.0
    for b in range(n_b):
        for f in range(n_f):
            g = dy[b, f]
            for c in range(n_c):
                xc = x[b, c]
                for i in range(k):
                    for j in range(k):
                        s = 0.0
                        for h in range(ho):
                            for q in range(wo):
                                s += g[h, q] * xc[h * st + i, q * st + j]
                        gw[f, c, i, j] += s


@numba.njit(cache=True)
def _conv_grad_input(w, dy, dx, st):
    n_b, n_c = dx.shape[0], dx.shape[1]
    n_f, k = w.shape[0], w.shape[2]
    ho, wo = dy.shape[2], dy.shape[3]
    dx[:] = 0.0
    for b in range(n_b):
        for f in range(n_f):
            g = dy[b, f]
            for c in range(n_c):
                dc = dx[b, c]
                for i in range(k):
                    for j in range(k):
                        wv = w[f, c, i, j]
                        for h in range(ho):
                            for q in range(wo):
                                dc[h * st + i, q * st + j] += wv * g[h, q]


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self.grads: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self.buffers: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self._cache = None

    def build(self, input_shape: tuple, rng) -> tuple:
        return input_shape

    def forward(self, x, train: bool, rng) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy, need_input_grad: bool = True):
        raise NotImplementedError

    def options(self) -> dict:
        return {}

    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind, self.options())

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.kind}: backward called without a cached forward pass")
        return self._cache


class Dense(Layer):
    kind = "dense"

    def __init__(self, units: int, use_bias: bool = True, zero_init: bool = False):
        super().__init__()
        if units < 1:
            raise ValueError("dense units must be positive")
        self.units = units
        self.use_bias = use_bias
        self.zero_init = zero_init

    def build(self, input_shape, rng):
        if len(input_shape) != 1:
            raise ShapeError(f"dense layer expects flat input, got per-sample shape {input_shape}")
        fan_in = input_shape[0]
        if self.zero_init:
            self.params["weight"] = np.zeros((fan_in, self.units))
        else:
            self.params["weight"] = _he_uniform(rng, (fan_in, self.units), fan_in)
        if self.use_bias:
            self.params["bias"] = np.zeros(self.units)
        return (self.units,)

    def forward(self, x, train, rng):
        w = self.params["weight"]
        if x.ndim != 2 or x.shape[1] != w.shape[0]:
            raise ShapeError(f"dense layer expects (batch, {w.shape[0]}), got {x.shape}")
        self._cache = x
        y = x @ w
        if self.use_bias:
            y = y + self.params["bias"]
        return y

    def backward(self, dy, need_input_grad=True):
        x = self._need_cache()
        self.grads["weight"] = x.T @ dy
        if self.use_bias:
            self.grads["bias"] = dy.sum(axis=0)
        return dy @ self.params["weight"].T if need_input_grad else None

    def options(self):
        return {"units": self.units, "use_bias": self.use_bias, "zero_init": self.zero_init}


class Conv2D(Layer):
    """Valid-padding 2-D convolution (cross-correlation)."""

    kind = "conv2d"

    def __init__(self, filters: int, kernel_size: int, stride: int = 1, use_bias: bool = False):
        super().__init__()
        if filters < 1 or kernel_size < 1 or stride < 1:
            raise ValueError("conv2d filters, kernel_size and stride must be positive")
        self.filters = filters
        self.kernel_size = kernel_size
        self.stride = stride
        self.use_bias = use_bias

    def _out_size(self, n):
        return (n - self.kernel_size) // self.stride + 1

    def build(self, input_shape, rng):
        if len(input_shape) != 3:
            raise ShapeError(f"conv2d expects (channels, height, width), got {input_shape}")
        c, h, w = input_shape
        k = self.kernel_size
        if h < k or w < k:
            raise ShapeError(f"conv2d kernel {k}x{k} does not fit input {h}x{w}")
        self.params["weight"] = _he_uniform(rng, (self.filters, c, k, k), c * k * k)
        if self.use_bias:
            self.params["bias"] = np.zeros(self.filters)
        return (self.filters, self._out_size(h), self._out_size(w))

    def forward(self, x, train, rng):
        w = self.params["weight"]
        if x.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ShapeError(f"conv2d expects (batch, {w.shape[1]}, H, W), got {x.shape}")
        k = self.kernel_size
        if x.shape[2] < k or x.shape[3] < k:
            raise ShapeError(f"conv2d kernel {k}x{k} does not fit input {x.shape[2:]}")
        x = np.ascontiguousarray(x, dtype=float)
        y = np.empty((x.shape[0], self.filters, self._out_size(x.shape[2]), self._out_size(x.shape[3])))
        _conv_forward(x, np.ascontiguousarray(w), y, self.stride)
        if self.use_bias:
            y += self.params["bias"][None, :, None, None]
        self._cache = x
        return y

    def backward(self, dy, need_input_grad=True):
        x = self._need_cache()
        w = np.ascontiguousarray(self.params["weight"])
        dy = np.ascontiguousarray(dy, dtype=float)
        gw = np.empty_like(w)
        _conv_grad_weight(x, dy, gw, self.stride)
        self.grads["weight"] = gw
        if self.use_bias:
            self.grads["bias"] = dy.sum(axis=(0, 2, 3))
        if not need_input_grad:
            return None
        dx = np.empty_like(x)
        _conv_grad_input(w, dy, dx, self.stride)
        return dx

    def options(self):
        return {"filters": self.filters, "kernel_size": self.kernel_size, "stride": self.stride,
                "use_bias": self.use_bias}


class BatchNorm(Layer):
    """Normalizes features (dense input) or channels (image input)."""

    kind = "batchnorm"

    def __init__(self, momentum: float = 0.9, epsilon: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.epsilon = epsilon

    def build(self, input_shape, rng):
        n = input_shape[0]
        self.params["gamma"] = np.ones(n)
        self.params["beta"] = np.zeros(n)
        self.buffers["running_mean"] = np.zeros(n)
        self.buffers["running_var"] = np.ones(n)
        return input_shape

    def _axes(self, x):
        return (0,) if x.ndim == 2 else (0, 2, 3)

    def _bcast(self, v, x):
        return v if x.ndim == 2 else v[None, :, None, None]

    def forward(self, x, train, rng):
        n = self.params["gamma"].size
        if x.ndim not in (2, 4) or x.shape[1] != n:
            raise ShapeError(f"batchnorm over {n} features got input {x.shape}")
        axes = self._axes(x)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.buffers["running_mean"][...] = m * self.buffers["running_mean"] + (1 - m) * mean
            self.buffers["running_var"][...] = m * self.buffers["running_var"] + (1 - m) * var
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - self._bcast(mean, x)) * self._bcast(inv_std, x)
        self._cache = (xhat, inv_std, train, axes)
        return self._bcast(self.params["gamma"], x) * xhat + self._bcast(self.params["beta"], x)

    def backward(self, dy, need_input_grad=True):
        xhat, inv_std, train, axes = self._need_cache()
        self.grads["gamma"] = np.sum(dy * xhat, axis=axes)
        self.grads["beta"] = np.sum(dy, axis=axes)
        if not need_input_grad:
            return None
        g = self._bcast(self.params["gamma"] * inv_std, dy)
        if not train:
            return dy * g
        count = dy.size / self.params["gamma"].size
        dyhat_mean = self._bcast(self.grads["beta"] / count, dy)
        dyx_mean = self._bcast(self.grads["gamma"] / count, dy)
        return g * (dy - dyhat_mean - xhat * dyx_mean)

    def options(self):
        return {"momentum": self.momentum, "epsilon": self.epsilon}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train, rng):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dy, need_input_grad=True):
        return dy * self._need_cache()


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, train, rng):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=-1, keepdims=True)
        self._cache = s
        return s

    def backward(self, dy, need_input_grad=True):
        s = self._need_cache()
        return s * (dy - np.sum(dy * s, axis=-1, keepdims=True))


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by 1/(1-rate) during training."""

    kind = "dropout"

    def __init__(self, rate: float = 0.5):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def forward(self, x, train, rng):
        if not train or self.rate == 0:
            self._cache = None if not train else 1.0
            return x
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep) / keep
        self._cache = mask
        return x * mask

    def backward(self, dy, need_input_grad=True):
        # no mask cached means the layer was the identity
        return dy if self._cache is None else dy * self._cache

    def options(self):
        return {"rate": self.rate}


class GlobalAvgPool(Layer):
    kind = "global_avg_pool"

    def build(self, input_shape, rng):
        if len(input_shape) != 3:
            raise ShapeError(f"global_avg_pool expects (channels, height, width), got {input_shape}")
        return (input_shape[0],)

    def forward(self, x, train, rng):
        if x.ndim != 4:
            raise ShapeError(f"global_avg_pool expects NCHW input, got {x.shape}")
        self._cache = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dy, need_input_grad=True):
        shape = self._need_cache()
        return np.broadcast_to(dy[:, :, None, None] / (shape[2] * shape[3]), shape).copy()


class Flatten(Layer):
    kind = "flatten"

    def build(self, input_shape, rng):
        return (int(np.prod(input_shape)),)

    def forward(self, x, train, rng):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, need_input_grad=True):
        return dy.reshape(self._need_cache())


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Conv2D, BatchNorm, ReLU, Softmax, Dropout, GlobalAvgPool, Flatten)}


def make_layer(spec: LayerSpec) -> Layer:
    try:
        cls = LAYER_TYPES[spec.kind]
    except KeyError:
        raise ValueError(f"unknown layer kind {spec.kind!r}") from None
    return cls(**spec.options)


class Network:
    """A stack of layers with named parameters ``"<index>.<kind>.<name>"``."""

    def __init__(self, specs: Sequence[LayerSpec], input_shape: tuple, seed=0):
        self.input_shape = tuple(input_shape)
        self.layers = [make_layer(s) for s in specs]
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.build(shape, rng)
        self.output_shape = shape

    def _named(self, attr):
        out = OrderedDict()
        for i, layer in enumerate(self.layers):
            for name, arr in getattr(layer, attr).items():
                out[f"{i}.{layer.kind}.{name}"] = arr
        return out

    @property
    def params(self) -> "OrderedDict[str, np.ndarray]":
        return self._named("params")

    @property
    def grads(self) -> "OrderedDict[str, np.ndarray]":
        return self._named("grads")

    @property
    def buffers(self) -> "OrderedDict[str, np.ndarray]":
        return self._named("buffers")

    @property
    def specs(self) -> list:
        return [layer.spec() for layer in self.layers]

    def param_count(self, include_buffers: bool = False) -> int:
        n = sum(a.size for a in self.params.values())
        if include_buffers:
            n += sum(a.size for a in self.buffers.values())
        return n

    def forward(self, x, mode: str = "infer", rng_seed=None) -> np.ndarray:
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        x = np.asarray(x, dtype=float)
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"network expects per-sample shape {self.input_shape}, got {tuple(x.shape[1:])}")
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        train = mode == "train"
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, train, rng)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        return x

    def backward(self, dy, input_grad: bool = False) -> Optional[np.ndarray]:
        for i in range(len(self.layers) - 1, -1, -1):
            need = input_grad or i > 0
            dy = self.layers[i].backward(dy, need_input_grad=need)
        return dy

    def predict(self, x, batch_size: int = 256) -> np.ndarray:
        out = [self.forward(x[i:i + batch_size], "infer") for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0,) + tuple(self.output_shape))

    def get_state(self) -> dict:
        state = {k: v.copy() for k, v in self.params.items()}
        state.update({k: v.copy() for k, v in self.buffers.items()})
        return state

    def set_state(self, state: dict) -> None:
        live = dict(self.params)
        live.update(self.buffers)
        for k, v in state.items():
            live[k][...] = v
