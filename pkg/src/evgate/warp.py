"""Label propagation by backward optical-flow warping.

The reuse ablation replaces copy-reuse with a warp: the keyframe's label
map is expanded to one-hot class planes, each plane is sampled with
bilinear interpolation at ``q - flow(q)``, and the output label is the
argmax over warped planes (ties to the lower class id). Samples falling
outside the frame contribute zero weight, which biases vacated pixels
toward class 0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    IoFailureError,
    MissingFlowError,
    NonFiniteFlowError,
    ShapeMismatchError,
    TruncatedStreamError,
)
from .regions import Geometry, LabelMap, Region

FLW1_MAGIC = b"FLW1"


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement (dx, dy), stored as an (H, W, 2) float array."""

    vectors: np.ndarray

    def __post_init__(self):
        v = self.vectors
        if v.ndim != 3 or v.shape[2] != 2:
            raise ShapeMismatchError(f"flow must be (H, W, 2), got {v.shape}")
        if not np.isfinite(v).all():
            raise NonFiniteFlowError("flow contains non-finite displacements")

    @property
    def geometry(self) -> Geometry:
        return self.vectors.shape[1], self.vectors.shape[0]

    def crop(self, region: Region) -> "FlowField":
        ys, xs = region.slices
        return FlowField(np.ascontiguousarray(self.vectors[ys, xs]))

    @staticmethod
    def zero(geometry: Geometry) -> "FlowField":
        w, h = geometry
        return FlowField(np.zeros((h, w, 2), dtype=np.float32))

    @staticmethod
    def uniform(geometry: Geometry, dx: float, dy: float) -> "FlowField":
        w, h = geometry
        v = np.empty((h, w, 2), dtype=np.float32)
        v[..., 0] = dx
        v[..., 1] = dy
        return FlowField(v)


def warp_labels(key: LabelMap, flow: FlowField) -> LabelMap:
    """Backward-warp a keyframe's labels along ``flow``."""
    if key.geometry != flow.geometry:
        raise ShapeMismatchError(f"labels {key.geometry} vs flow {flow.geometry}")
    h, w = key.labels.shape
    c = key.num_classes
    grid_y, grid_x = np.mgrid[0:h, 0:w]
    src_x = grid_x - flow.vectors[..., 0].astype(float)
    src_y = grid_y - flow.vectors[..., 1].astype(float)

    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    fx = src_x - x0
    fy = src_y - y0

    planes = np.zeros((c, h, w))
    onehot = np.zeros((c, h, w))
    onehot[key.labels.astype(np.int64), grid_y, grid_x] = 1.0
    for dy_tap, dx_tap, weight in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        ty = y0 + dy_tap
        tx = x0 + dx_tap
        inside = (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
        tyc = np.clip(ty, 0, h - 1)
        txc = np.clip(tx, 0, w - 1)
        planes += np.where(inside, weight, 0.0)[None] * onehot[:, tyc, txc]
    return LabelMap(np.argmax(planes, axis=0), c)


# --- FLW1 flow file format ------------------------------------------------------
#
# magic "FLW1" | u16 width | u16 height | row-major little-endian f32 pairs
# (dx, dy) per pixel.

def write_flow(flow: FlowField, dest) -> None:
    w, h = flow.geometry
    buf = FLW1_MAGIC + struct.pack("<HH", w, h)
    buf += np.ascontiguousarray(flow.vectors, dtype="<f4").tobytes()
    try:
        if hasattr(dest, "write"):
            dest.write(buf)
        else:
            with open(dest, "wb") as fh:
                fh.write(buf)
    except OSError as exc:
        raise IoFailureError(f"cannot write flow ({exc})", dest) from exc


def read_flow(source) -> FlowField:
    if hasattr(source, "read"):
        data = source.read()
    else:
        try:
            with open(source, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise MissingFlowError(f"cannot read flow file {source}") from exc
    if data[:4] != FLW1_MAGIC:
        raise BadMagicError(f"expected {FLW1_MAGIC!r} flow magic")
    if len(data) < 8:
        raise TruncatedStreamError("flow header truncated")
    w, h = struct.unpack("<HH", data[4:8])
    expected = 8 + w * h * 2 * 4
    if len(data) != expected:
        raise TruncatedStreamError(f"flow payload {len(data) - 8} bytes, expected {expected - 8}")
    vectors = np.frombuffer(data[8:], dtype="<f4").reshape(h, w, 2)
    return FlowField(vectors.astype(np.float32))
