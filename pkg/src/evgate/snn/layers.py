"""Building blocks for the spiking segmentation network.

Plain numpy forward/backward, no framework. Convolutions run as im2col
matmuls; the naive nested-loop oracle lives in the test suite. All hidden
activations are binary spikes in the default ("hard") mode; the "exact"
mode swaps the spike step for a steep sigmoid so analytic gradients can be
verified against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from numpy.lib.stride_tricks import sliding_window_view

import numpy as np

from ..errors import ShapeMismatchError
from .neurons import (
    NeuronParams,
    heaviside_spike,
    sigmoid_spike,
    sigmoid_spike_grad,
    surrogate_grad,
    SurrogateParams,
)


@dataclass
class ForwardContext:
    """Per-call switches threaded through the layer stack."""

    train: bool = False
    exact: bool = False          # smooth spike function for gradient checks
    update_stats: bool = False   # advance BN running statistics
    trace: list | None = None    # collect LayerActivity records when set


@dataclass
class LayerActivity:
    """Spike bookkeeping for one convolutional layer of one forward pass."""

    name: str
    kernel_h: int
    kernel_w: int
    stride: int
    c_out: int
    h_out: int
    w_out: int
    timesteps: int
    spikes_in: int
    spikes_out: int
    neuron_count: int
    fired_count: int
    is_spiking: bool


def _assert_binary(x: np.ndarray) -> None:
    assert ((x == 0.0) | (x == 1.0)).all(), "hidden activation left {0,1}"


def conv2d_forward(x: np.ndarray, w: np.ndarray, stride: int, padding: int):
    """im2col convolution; returns (y, cols) with cols kept for backward."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatchError(f"conv2d: input {x.shape} vs kernel {w.shape}")
    b, c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ShapeMismatchError(f"conv2d: {h}x{wd} too small for kernel {kh}x{kw}")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    h_out, w_out = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, h_out * w_out, c_in * kh * kw)
    y = cols @ w.reshape(c_out, -1).T
    return y.transpose(0, 2, 1).reshape(b, c_out, h_out, w_out), cols


def conv2d_backward(dy: np.ndarray, cols: np.ndarray, w: np.ndarray,
                    x_shape, stride: int, padding: int):
    """Gradients of conv2d_forward; returns (dw, dx)."""
    b, c_in, h, wd = x_shape
    c_out, _, kh, kw = w.shape
    h_out, w_out = dy.shape[2], dy.shape[3]
    dy_mat = dy.reshape(b, c_out, h_out * w_out).transpose(0, 2, 1)
    dw = np.tensordot(dy_mat, cols, axes=([0, 1], [0, 1])).reshape(w.shape)
    dcols = dy_mat @ w.reshape(c_out, -1)
    dcols = dcols.reshape(b, h_out, w_out, c_in, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    dxp = np.zeros((b, c_in, h + 2 * padding, wd + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * h_out : stride,
                j : j + stride * w_out : stride] += dcols[:, :, :, :, i, j]
    if padding:
        return dw, dxp[:, :, padding : padding + h, padding : padding + wd]
    return dw, dxp


class Module:
    """Minimal parameter container; children register under prefixed names."""

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.children: list[Module] = []

    def add_child(self, child: "Module") -> "Module":
        self.children.append(child)
        return child

    def named_params(self):
        for key, value in self.params.items():
            yield f"{self.name}.{key}", value
        for child in self.children:
            yield from child.named_params()

    def named_grads(self):
        for key, value in self.grads.items():
            yield f"{self.name}.{key}", value
        for child in self.children:
            yield from child.named_grads()

    def named_buffers(self):
        """Non-trainable state saved in checkpoints (BN running stats)."""
        for child in self.children:
            yield from child.named_buffers()

    def zero_grad(self):
        for key in self.params:
            self.grads[key] = np.zeros_like(self.params[key])
        for child in self.children:
            child.zero_grad()


class Conv2d(Module):
    def __init__(self, name, c_in, c_out, kernel, stride=1, padding=0,
                 bias=False, rng: np.random.Generator | None = None):
        super().__init__(name)
        rng = rng or np.random.default_rng(0)
        fan_in = c_in * kernel * kernel
        self.params["w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                      size=(c_out, c_in, kernel, kernel))
        if bias:
            self.params["b"] = np.zeros(c_out)
        self.stride = stride
        self.padding = padding
        self.kernel = kernel
        self.c_in, self.c_out = c_in, c_out
        self._cache = None

    def forward(self, x, ctx: ForwardContext):
        y, cols = conv2d_forward(x, self.params["w"], self.stride, self.padding)
        if "b" in self.params:
            y = y + self.params["b"][None, :, None, None]
        if ctx.train:
            self._cache = (x.shape, cols)
        return y

    def backward(self, dy):
        x_shape, cols = self._cache
        dw, dx = conv2d_backward(dy, cols, self.params["w"], x_shape,
                                 self.stride, self.padding)
        self.grads["w"] += dw
        if "b" in self.params:
            self.grads["b"] += dy.sum(axis=(0, 2, 3))
        return dx


class BatchNorm2d(Module):
    def __init__(self, name, channels, eps=1e-5, momentum=0.1):
        super().__init__(name)
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.eps = eps
        self.momentum = momentum
        self._cache = None

    def named_buffers(self):
        yield f"{self.name}.running_mean", self.running_mean
        yield f"{self.name}.running_var", self.running_var

    def forward(self, x, ctx: ForwardContext):
        if ctx.train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if ctx.update_stats:
                m = self.momentum
                self.running_mean *= 1.0 - m
                self.running_mean += m * mean
                self.running_var *= 1.0 - m
                self.running_var += m * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        y = self.params["gamma"][None, :, None, None] * xhat + self.params["beta"][None, :, None, None]
        if ctx.train:
            self._cache = (xhat, inv_std)
        return y

    def backward(self, dy):
        xhat, inv_std = self._cache
        n = dy.shape[0] * dy.shape[2] * dy.shape[3]
        self.grads["gamma"] += (dy * xhat).sum(axis=(0, 2, 3))
        self.grads["beta"] += dy.sum(axis=(0, 2, 3))
        dxhat = dy * self.params["gamma"][None, :, None, None]
        s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        return (inv_std[None, :, None, None] / n) * (n * dxhat - s1 - xhat * s2)

    def fold(self, w, b=None):
        """Fold eval-time BN into the preceding conv's (w, b)."""
        scale = self.params["gamma"] / np.sqrt(self.running_var + self.eps)
        w_eff = w * scale[:, None, None, None]
        shift = self.params["beta"] - self.running_mean * scale
        return w_eff, shift if b is None else b * scale + shift


class SpikeLayer(Module):
    """Single-step spiking nonlinearity over pre-activation voltages.

    With one timestep and a resting start, the membrane after integration
    is exactly the input voltage, so the forward pass reduces to a
    threshold; the backward pass substitutes the rectangular surrogate.
    """

    def __init__(self, name, neuron: NeuronParams, surrogate: SurrogateParams):
        super().__init__(name)
        self.neuron = neuron
        self.surrogate = surrogate
        self._cache = None

    def forward(self, u, ctx: ForwardContext):
        if ctx.exact:
            s = sigmoid_spike(u, self.neuron.v_th)
        else:
            s = heaviside_spike(u, self.neuron.v_th)
            _assert_binary(s)
        if ctx.train:
            self._cache = (u, ctx.exact)
        return s

    def backward(self, ds):
        u, exact = self._cache
        if exact:
            return ds * sigmoid_spike_grad(u, self.neuron.v_th)
        return ds * surrogate_grad(u, self.surrogate)


class ConvBNSpike(Module):
    """conv -> batch norm -> spiking neuron, the network's standard layer.

    In eval mode the BN is folded into the convolution so the deployed
    arithmetic matches the flop model (one conv + threshold per layer).
    """

    def __init__(self, name, c_in, c_out, kernel, stride, padding,
                 neuron, surrogate, rng, spiking=True):
        super().__init__(name)
        self.conv = self.add_child(Conv2d(f"{name}.conv", c_in, c_out, kernel,
                                          stride, padding, bias=False, rng=rng))
        self.bn = self.add_child(BatchNorm2d(f"{name}.bn", c_out))
        self.spike = self.add_child(SpikeLayer(f"{name}.sn", neuron, surrogate)) if spiking else None

    def forward(self, x, ctx: ForwardContext):
        spikes_in = int(np.count_nonzero(x))
        if ctx.train:
            u = self.bn.forward(self.conv.forward(x, ctx), ctx)
        else:
            w_eff, b_eff = self.bn.fold(self.conv.params["w"])
            u, _ = conv2d_forward(x, w_eff, self.conv.stride, self.conv.padding)
            u = u + b_eff[None, :, None, None]
        out = self.spike.forward(u, ctx) if self.spike is not None else u
        if ctx.trace is not None:
            fired = int(np.count_nonzero(out)) if self.spike is not None else 0
            ctx.trace.append(LayerActivity(
                name=self.name, kernel_h=self.conv.kernel, kernel_w=self.conv.kernel,
                stride=self.conv.stride, c_out=out.shape[1],
                h_out=out.shape[2], w_out=out.shape[3], timesteps=1,
                spikes_in=spikes_in,
                spikes_out=fired,
                neuron_count=int(out[0].size) if self.spike is not None else 0,
                fired_count=fired,
                is_spiking=self.spike is not None,
            ))
        return out

    def backward(self, dy):
        if self.spike is not None:
            dy = self.spike.backward(dy)
        return self.conv.backward(self.bn.backward(dy))


class SEWBlock(Module):
    """Spike-element-wise residual block with ADD fusion.

    The conv path and the shortcut both emit spikes; their sum is clamped
    back to {0, 1} so downstream layers keep binary inputs. Stride-2 blocks
    (or channel changes) use a 1x1 spiking projection shortcut.
    """

    def __init__(self, name, c_in, c_out, stride, neuron, surrogate, rng):
        super().__init__(name)
        self.conv1 = self.add_child(ConvBNSpike(f"{name}.c1", c_in, c_out, 3,
                                                stride, 1, neuron, surrogate, rng))
        self.conv2 = self.add_child(ConvBNSpike(f"{name}.c2", c_out, c_out, 3,
                                                1, 1, neuron, surrogate, rng))
        if stride != 1 or c_in != c_out:
            self.shortcut = self.add_child(ConvBNSpike(f"{name}.sc", c_in, c_out, 1,
                                                       stride, 0, neuron, surrogate, rng))
        else:
            self.shortcut = None
        self._cache = None

    def forward(self, x, ctx: ForwardContext):
        branch = self.conv2.forward(self.conv1.forward(x, ctx), ctx)
        residual = x if self.shortcut is None else self.shortcut.forward(x, ctx)
        total = branch + residual
        if ctx.exact:
            out = total
        else:
            out = np.minimum(total, 1.0)
            _assert_binary(out)
        if ctx.train:
            self._cache = (total, ctx.exact)
        return out

    def backward(self, dy):
        total, exact = self._cache
        if not exact:
            dy = dy * (total <= 1.0)  # clamp blocks gradient where both fired
        dres = dy if self.shortcut is None else self.shortcut.backward(dy)
        dx = self.conv1.backward(self.conv2.backward(dy))
        return dx + dres


class BilinearResize(Module):
    """Separable bilinear resize to a fixed output size.

    Implemented as two small dense interpolation matrices, which makes the
    backward pass an exact transpose. Matrices are cached per input size.
    """

    def __init__(self, name):
        super().__init__(name)
        self._matrices: dict[tuple[int, int], np.ndarray] = {}
        self._cache = None

    @staticmethod
    def _axis_matrix(n_out: int, n_in: int) -> np.ndarray:
        a = np.zeros((n_out, n_in))
        if n_in == 1:
            a[:, 0] = 1.0
            return a
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        i0 = np.clip(np.floor(src).astype(int), 0, n_in - 1)
        i1 = np.clip(i0 + 1, 0, n_in - 1)
        frac = np.clip(src - np.floor(src), 0.0, 1.0)
        rows = np.arange(n_out)
        np.add.at(a, (rows, i0), 1.0 - frac)
        np.add.at(a, (rows, i1), frac)
        return a

    def matrix(self, n_out: int, n_in: int) -> np.ndarray:
        key = (n_out, n_in)
        if key not in self._matrices:
            self._matrices[key] = self._axis_matrix(n_out, n_in)
        return self._matrices[key]

    def forward(self, x, out_h, out_w, ctx: ForwardContext):
        a_h = self.matrix(out_h, x.shape[2])
        a_w = self.matrix(out_w, x.shape[3])
        y = np.einsum("oh,bchw,pw->bcop", a_h, x, a_w, optimize=True)
        if ctx.train:
            self._cache = (a_h, a_w)
        return y

    def backward(self, dy):
        a_h, a_w = self._cache
        return np.einsum("oh,bcop,pw->bchw", a_h, dy, a_w, optimize=True)
