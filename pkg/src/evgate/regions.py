"""Overlapping region grids, per-region cropping, and label-map merging.

A frame is decomposed into ``rows x cols`` rectangular regions. Interior
widths are as equal as possible (remainder pixels go to the center-most
regions) and each pair of adjacent regions shares a band of exactly
``overlap`` pixels centered on their interior boundary. The union of all
regions covers the frame with no gaps, and no pixel belongs to more than
two regions per axis (at most four in total).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GeometryTooSmallError,
    IoFailureError,
    MissingRegionError,
    OverlapTooLargeError,
    RegionOutOfBoundsError,
    ShapeMismatchError,
)

Geometry = tuple[int, int]  # (width, height) in pixels


@dataclass(frozen=True)
class Region:
    """Rectangular pixel region; ``index`` is the row-major ordinal in its grid."""

    x0: int
    y0: int
    width: int
    height: int
    index: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise GeometryTooSmallError(f"degenerate region {self}")
        if self.x0 < 0 or self.y0 < 0:
            raise RegionOutOfBoundsError(f"negative origin in {self}")

    @property
    def x1(self) -> int:
        return self.x0 + self.width

    @property
    def y1(self) -> int:
        return self.y0 + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def slices(self) -> tuple[slice, slice]:
        """(row, column) slices for indexing a (H, W) array."""
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def within(self, geometry: Geometry) -> bool:
        w, h = geometry
        return self.x1 <= w and self.y1 <= h


@dataclass(frozen=True)
class RegionGrid:
    rows: int
    cols: int
    overlap: int
    geometry: Geometry
    regions: tuple[Region, ...]

    def __len__(self) -> int:
        return len(self.regions)

    def describe(self) -> str:
        return f"{self.rows}x{self.cols} overlap={self.overlap} on {self.geometry[0]}x{self.geometry[1]}"


def _axis_intervals(extent: int, count: int, overlap: int) -> list[tuple[int, int]]:
    """Split ``[0, extent)`` into ``count`` extended intervals along one axis.

    Interior widths differ by at most one pixel; remainder pixels are handed
    to the center-most intervals first. Each interior boundary then grows a
    shared band of exactly ``overlap`` pixels, split ceil/floor around the
    boundary (the left/top side takes the larger half for odd overlaps).
    """
    if count < 1:
        raise GeometryTooSmallError("region count must be >= 1")
    if extent < count:
        raise GeometryTooSmallError(f"extent {extent} cannot host {count} regions")
    base, rem = divmod(extent, count)
    widths = [base] * count
    center = (count - 1) / 2.0
    for i in sorted(range(count), key=lambda i: (abs(i - center), i))[:rem]:
        widths[i] += 1

    if count > 1:
        lead = -(-overlap // 2)  # ceil
        trail = overlap // 2
        ok = widths[0] >= lead and widths[-1] >= trail
        ok = ok and all(w >= overlap for w in widths[1:-1])
        if not ok:
            raise OverlapTooLargeError(
                f"overlap {overlap} does not fit interior widths {widths}"
            )

    bounds = np.cumsum([0] + widths)
    intervals = []
    for i in range(count):
        start = bounds[i] - (-(-overlap // 2) if i > 0 else 0)
        end = bounds[i + 1] + (overlap // 2 if i < count - 1 else 0)
        intervals.append((int(start), int(end)))
    return intervals


def build_grid(geometry: Geometry, rows: int, cols: int, overlap: int) -> RegionGrid:
    """Build a deterministic overlapping decomposition of the frame.

    Raises OverlapTooLargeError when the shared bands cannot fit without
    touching each other or the frame border, GeometryTooSmallError when the
    frame cannot host the requested grid at all.
    """
    if overlap < 0:
        raise OverlapTooLargeError("overlap must be >= 0")
    width, height = geometry
    col_iv = _axis_intervals(width, cols, overlap)
    row_iv = _axis_intervals(height, rows, overlap)
    regions = []
    for r, (y0, y1) in enumerate(row_iv):
        for c, (x0, x1) in enumerate(col_iv):
            regions.append(Region(x0, y0, x1 - x0, y1 - y0, index=r * cols + c))
    return RegionGrid(rows, cols, overlap, (width, height), tuple(regions))


def parse_grid_shape(text: str) -> tuple[int, int]:
    """Parse a 'RxC' grid shape string, e.g. '1x3' -> (1, 3)."""
    m = re.fullmatch(r"(\d+)\s*[xX]\s*(\d+)", text.strip())
    if m is None:
        raise GeometryTooSmallError(f"cannot parse grid shape {text!r}")
    return int(m.group(1)), int(m.group(2))


def crop(array: np.ndarray, region: Region) -> np.ndarray:
    """Crop the trailing (H, W) axes of ``array`` to ``region`` (copying)."""
    h, w = array.shape[-2], array.shape[-1]
    if not region.within((w, h)):
        raise RegionOutOfBoundsError(f"{region} outside array {w}x{h}")
    ys, xs = region.slices
    return np.ascontiguousarray(array[..., ys, xs])


@dataclass
class LabelMap:
    """Per-pixel class ids in ``[0, num_classes)`` over an (H, W) grid."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2:
            raise ShapeMismatchError(f"labels must be 2-D, got {self.labels.shape}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ShapeMismatchError(
                f"labels outside [0, {self.num_classes}): "
                f"range [{self.labels.min()}, {self.labels.max()}]"
            )

    @property
    def geometry(self) -> Geometry:
        return self.labels.shape[1], self.labels.shape[0]

    def crop(self, region: Region) -> "LabelMap":
        return LabelMap(crop(self.labels, region), self.num_classes)

    def copy(self) -> "LabelMap":
        return LabelMap(self.labels.copy(), self.num_classes)


def merge_labels(grid: RegionGrid, per_region) -> LabelMap:
    """Merge one region-sized label map per region back into a full frame.

    ``per_region`` is a sequence of (LabelMap, priority) aligned with
    ``grid.regions``. Overlapped pixels take the label from the region with
    the highest priority; ties go to the lowest region index. The rule only
    looks at (priority, index) per pixel, so it is independent of evaluation
    order.
    """
    if len(per_region) != len(grid.regions):
        raise MissingRegionError(
            f"expected {len(grid.regions)} region maps, got {len(per_region)}"
        )
    width, height = grid.geometry
    num_classes = per_region[0][0].num_classes
    out = np.zeros((height, width), dtype=np.int64)
    best = np.full((height, width), -np.inf)
    for region, (label_map, priority) in zip(grid.regions, per_region):
        if label_map.labels.shape != (region.height, region.width):
            raise ShapeMismatchError(
                f"region {region.index}: map shape {label_map.labels.shape} != "
                f"({region.height}, {region.width})"
            )
        if label_map.num_classes != num_classes:
            raise ShapeMismatchError("inconsistent num_classes across region maps")
        ys, xs = region.slices
        take = float(priority) > best[ys, xs]
        out[ys, xs] = np.where(take, label_map.labels, out[ys, xs])
        best[ys, xs] = np.where(take, float(priority), best[ys, xs])
    if np.isneginf(best).any():
        raise MissingRegionError("grid does not cover the frame")  # unreachable for valid grids
    return LabelMap(out, num_classes)


# --- PGM (P5) serialization -------------------------------------------------
#
# Label maps travel as binary PGM with maxval = num_classes - 1; frames use
# maxval 255. One byte per pixel, so maxval must stay below 256.

def write_pgm(path, values: np.ndarray, maxval: int) -> None:
    if not 1 <= maxval <= 255:
        raise IoFailureError(f"PGM maxval {maxval} outside [1, 255]", path)
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise IoFailureError(f"PGM needs a 2-D array, got {arr.shape}", path)
    if arr.min() < 0 or arr.max() > maxval:
        raise IoFailureError(f"PGM values outside [0, {maxval}]", path)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(arr.astype(np.uint8).tobytes())
    except OSError as exc:
        raise IoFailureError(f"cannot write PGM ({exc})", path) from exc


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary PGM; returns (values, maxval)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailureError(f"cannot read PGM ({exc})", path) from exc
    if not data.startswith(b"P5"):
        raise IoFailureError("not a binary PGM (P5) file", path)
    # Header tokens may be separated by arbitrary whitespace and comments.
    pos, tokens = 2, []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise IoFailureError("truncated PGM header", path)
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval < 1 or maxval > 255:
        raise IoFailureError(f"unsupported PGM maxval {maxval}", path)
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise IoFailureError("truncated PGM raster", path)
    values = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return values.copy(), maxval


def write_label_map(path, label_map: LabelMap) -> None:
    if label_map.num_classes < 2:
        raise IoFailureError("label PGM needs at least 2 classes", path)
    write_pgm(path, label_map.labels, label_map.num_classes - 1)


def read_label_map(path) -> LabelMap:
    values, maxval = read_pgm(path)
    return LabelMap(values.astype(np.int64), maxval + 1)
