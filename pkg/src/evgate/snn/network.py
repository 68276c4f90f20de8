"""SegSNNnet: a compact fully spiking segmentation network.

Architecture: an analog-input spiking stem, three SEW residual stages, a
two-layer spiking head, and a 1x1 classifier whose pre-threshold voltages
are accumulated over the (single) timestep and bilinearly upsampled back to
the input resolution. Two built-in configurations exist: "reference" at the
published parameter budget and "desk", a small variant for synthetic-data
experiments.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from ..errors import CheckpointFormatError, NonFiniteValueError, ShapeMismatchError
from .layers import (
    BilinearResize,
    Conv2d,
    ConvBNSpike,
    ForwardContext,
    LayerActivity,
    Module,
    SEWBlock,
)
from .neurons import NeuronParams, SurrogateParams

CHECKPOINT_MAGIC = b"SEGW"


@dataclass(frozen=True)
class NetworkSpec:
    """Static description of a SegSNNnet configuration."""

    name: str = "desk"
    in_channels: int = 1
    num_classes: int = 4
    stem_channels: int = 8
    stem_stride: int = 1
    stage_channels: tuple[int, int, int] = (8, 16, 24)
    stage_strides: tuple[int, int, int] = (1, 2, 2)
    head_channels: tuple[int, int] = (16, 12)
    timesteps: int = 1
    v_th: float = 1.0
    v_rest: float = 0.0
    leak: float = 0.9
    reset_mode: str = "hard"
    surrogate_width: float = 1.0
    train_height: int | None = None
    train_width: int | None = None

    def __post_init__(self):
        if len(self.stage_channels) != 3 or len(self.stage_strides) != 3:
            raise ShapeMismatchError("SegSNNnet uses exactly 3 stages")
        if self.timesteps != 1:
            raise ShapeMismatchError("single-timestep accumulator only")

    @property
    def downsample(self) -> int:
        f = self.stem_stride
        for s in self.stage_strides:
            f *= s
        return f

    @property
    def neuron(self) -> NeuronParams:
        return NeuronParams(self.v_th, self.v_rest, self.leak, self.reset_mode)

    @property
    def surrogate(self) -> SurrogateParams:
        return SurrogateParams(self.surrogate_width, self.v_th)

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "NetworkSpec":
        d = dict(d)
        for key in ("stage_channels", "stage_strides", "head_channels"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        return NetworkSpec(**d)


# Published scale: lands at ~0.31M parameters with 11 classes.
REFERENCE_SPEC = NetworkSpec(
    name="reference", in_channels=3, num_classes=11,
    stem_channels=32, stem_stride=2,
    stage_channels=(32, 64, 96), stage_strides=(1, 2, 2),
    head_channels=(64, 48),
)

DESK_SPEC = NetworkSpec(
    name="desk", in_channels=1, num_classes=4,
    stem_channels=8, stem_stride=1,
    stage_channels=(8, 16, 24), stage_strides=(1, 2, 2),
    head_channels=(16, 12),
)

# Tiny configuration for finite-difference gradient checks (< 5k params).
GRADCHECK_SPEC = NetworkSpec(
    name="gradcheck", in_channels=1, num_classes=3,
    stem_channels=4, stem_stride=1,
    stage_channels=(4, 6, 8), stage_strides=(1, 2, 2),
    head_channels=(6, 5),
)

BUILTIN_SPECS = {s.name: s for s in (REFERENCE_SPEC, DESK_SPEC, GRADCHECK_SPEC)}


@dataclass
class SpikeTrace:
    """Per-layer spike activity of one forward pass."""

    layers: list[LayerActivity] = field(default_factory=list)

    def total_spiking_neurons(self) -> int:
        return sum(l.neuron_count for l in self.layers if l.is_spiking)

    def total_fired(self) -> int:
        return sum(l.fired_count for l in self.layers if l.is_spiking)


class SegSNNnet(Module):
    def __init__(self, spec: NetworkSpec, seed: int = 0):
        super().__init__("net")
        self.spec = spec
        rng = np.random.default_rng(seed)
        neuron, surrogate = spec.neuron, spec.surrogate

        self.stem = self.add_child(ConvBNSpike(
            "stem", spec.in_channels, spec.stem_channels, 3, spec.stem_stride, 1,
            neuron, surrogate, rng))
        self.stages = []
        c_prev = spec.stem_channels
        for i, (c, s) in enumerate(zip(spec.stage_channels, spec.stage_strides)):
            block = self.add_child(SEWBlock(f"stage{i}", c_prev, c, s, neuron, surrogate, rng))
            self.stages.append(block)
            c_prev = c
        h0, h1 = spec.head_channels
        self.head0 = self.add_child(ConvBNSpike("head0", c_prev, h0, 3, 1, 1,
                                                neuron, surrogate, rng))
        self.head1 = self.add_child(ConvBNSpike("head1", h0, h1, 3, 1, 1,
                                                neuron, surrogate, rng))
        self.classifier = self.add_child(Conv2d("classifier", h1, spec.num_classes, 1,
                                                bias=True, rng=rng))
        self.resize = BilinearResize("resize")
        self._last_out_size = None

    # --- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray, ctx: ForwardContext | None = None) -> np.ndarray:
        """(B, C_in, H, W) analog input -> (B, num_classes, H, W) voltages."""
        ctx = ctx or ForwardContext()
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ShapeMismatchError(f"input {x.shape} vs in_channels {self.spec.in_channels}")
        h_in, w_in = x.shape[2], x.shape[3]
        out = self.stem.forward(x, ctx)
        for block in self.stages:
            out = block.forward(out, ctx)
        out = self.head1.forward(self.head0.forward(out, ctx), ctx)
        spikes_in = int(np.count_nonzero(out))
        volts = self.classifier.forward(out, ctx)  # accumulated pre-threshold voltage, T=1
        if ctx.trace is not None:
            ctx.trace.append(LayerActivity(
                name="classifier", kernel_h=1, kernel_w=1, stride=1,
                c_out=volts.shape[1], h_out=volts.shape[2], w_out=volts.shape[3],
                timesteps=1, spikes_in=spikes_in, spikes_out=0,
                neuron_count=0, fired_count=0, is_spiking=False))
        scores = self.resize.forward(volts, h_in, w_in, ctx)
        if not np.isfinite(scores).all():
            raise NonFiniteValueError("non-finite class scores")
        return scores

    def backward(self, dscores: np.ndarray) -> None:
        d = self.resize.backward(dscores)
        d = self.classifier.backward(d)
        d = self.head0.backward(self.head1.backward(d))
        for block in reversed(self.stages):
            d = block.backward(d)
        self.stem.backward(d)

    def segment(self, region: np.ndarray) -> tuple[np.ndarray, SpikeTrace]:
        """Eval-mode forward over one region.

        ``region`` is (C_in, H, W) analog input in [0, 1]. Returns the
        (num_classes, H, W) score tensor and the spike trace of the pass.
        """
        trace = SpikeTrace()
        ctx = ForwardContext(train=False, trace=trace.layers)
        scores = self.forward(region[None], ctx)
        return scores[0], trace

    # --- parameters -----------------------------------------------------------

    def parameter_count(self) -> int:
        return sum(v.size for _, v in self.named_params())

    def state_arrays(self):
        yield from self.named_params()
        yield from self.named_buffers()

    # --- checkpoints ------------------------------------------------------------

    def save(self, path) -> None:
        save_checkpoint(self, path)

    @staticmethod
    def load(path) -> "SegSNNnet":
        return load_checkpoint(path)


def expected_parameter_count(spec: NetworkSpec) -> int:
    """Parameter count derived from the configuration alone.

    Counts conv kernels, BN scale/shift pairs, and the classifier's weights
    and bias; cross-checked in tests against the built network's arrays.
    """

    def conv_bn(c_in, c_out, k):
        return c_in * c_out * k * k + 2 * c_out

    total = conv_bn(spec.in_channels, spec.stem_channels, 3)
    c_prev = spec.stem_channels
    for c, s in zip(spec.stage_channels, spec.stage_strides):
        total += conv_bn(c_prev, c, 3) + conv_bn(c, c, 3)
        if s != 1 or c_prev != c:
            total += conv_bn(c_prev, c, 1)
        c_prev = c
    h0, h1 = spec.head_channels
    total += conv_bn(c_prev, h0, 3) + conv_bn(h0, h1, 3)
    total += h1 * spec.num_classes + spec.num_classes
    return total


def parameter_count(spec_or_net) -> int:
    if isinstance(spec_or_net, SegSNNnet):
        return spec_or_net.parameter_count()
    return expected_parameter_count(spec_or_net)


# --- SEGW checkpoint format ---------------------------------------------------
#
# magic "SEGW" | u32 json_len | json descriptor | tensors. Each tensor:
# u16 name_len | name utf-8 | u8 ndim | ndim * u32 dims | f32 little-endian
# data. Tensors are sorted by name so identical states produce identical
# bytes.

def save_checkpoint(net: SegSNNnet, path, extra: dict | None = None) -> None:
    descriptor = {
        "format": 1,
        "spec": net.spec.to_dict(),
        "extra": extra or {},
    }
    payload = json.dumps(descriptor, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<I", len(payload))
    buf += payload
    for name, arr in sorted(net.state_arrays()):
        encoded = name.encode("utf-8")
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    if hasattr(path, "write"):
        path.write(bytes(buf))
    else:
        with open(path, "wb") as fh:
            fh.write(bytes(buf))


def load_checkpoint(path) -> SegSNNnet:
    if hasattr(path, "read"):
        data = path.read()
    else:
        with open(path, "rb") as fh:
            data = fh.read()
    stream = io.BytesIO(data)
    if stream.read(4) != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"bad checkpoint magic in {path}")
    (json_len,) = struct.unpack("<I", stream.read(4))
    descriptor = json.loads(stream.read(json_len).decode("utf-8"))
    spec = NetworkSpec.from_dict(descriptor["spec"])
    net = SegSNNnet(spec, seed=0)
    state = dict(net.state_arrays())
    seen = set()
    while True:
        head = stream.read(2)
        if not head:
            break
        (name_len,) = struct.unpack("<H", head)
        name = stream.read(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", stream.read(1))
        shape = struct.unpack(f"<{ndim}I", stream.read(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        raw = stream.read(4 * count)
        if len(raw) != 4 * count:
            raise CheckpointFormatError(f"truncated tensor {name!r} in {path}")
        values = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(float)
        if name not in state:
            raise CheckpointFormatError(f"unknown tensor {name!r} in {path}")
        if state[name].shape != values.shape:
            raise CheckpointFormatError(f"shape mismatch for {name!r} in {path}")
        state[name][...] = values
        seen.add(name)
    missing = set(state) - seen
    if missing:
        raise CheckpointFormatError(f"checkpoint missing tensors {sorted(missing)} in {path}")
    net.checkpoint_extra = descriptor.get("extra", {})
    return net
