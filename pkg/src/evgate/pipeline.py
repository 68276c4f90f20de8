"""Split -> gate -> segment/reuse -> merge: the event-gated frame loop.

Each frame is decomposed by a fixed overlapping grid. Every region tracks
the events that arrived since segment output for it was last computed; when
that per-region density reaches the gate threshold (or a periodic reset
frame forces it), the region is re-segmented by the network and its cache
entry refreshed, otherwise the cached labels are reused verbatim (or
flow-warped in the ablation). Region results merge back into a full frame,
overlaps resolved by the density recorded when each entry was produced.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyCacheReuseError,
    IoFailureError,
    ManifestError,
    MissingFlowError,
    SequenceTooShortError,
    ShapeMismatchError,
)
from .events import EventWindow, accumulate_density, read_events_file
from .metrics import ConfusionMatrix, accumulate_confusion, miou as compute_miou, throughput
from .regions import (
    LabelMap,
    RegionGrid,
    build_grid,
    crop,
    merge_labels,
    read_label_map,
    read_pgm,
)
from .snn.flops import trace_flops
from .snn.network import SegSNNnet
from .warp import FlowField, read_flow, warp_labels

PROCESS = "process"
REUSE = "reuse"


@dataclass(frozen=True)
class GateConfig:
    threshold: float
    reset_period: int = 5
    rows: int = 1
    cols: int = 3
    overlap: int = 20
    interval_mode: str = "per_region"  # or "global": always measure since the previous frame
    frame_rate: float | None = None    # informational only

    def __post_init__(self):
        if self.threshold < 0:
            raise ShapeMismatchError("gate threshold must be >= 0")
        if self.reset_period < 1:
            raise ShapeMismatchError("reset period must be >= 1")
        if self.interval_mode not in ("per_region", "global"):
            raise ShapeMismatchError(f"unknown interval mode {self.interval_mode!r}")


def decide(density: float, cfg: GateConfig, is_reset_frame: bool) -> str:
    """PROCESS when forced by a reset or when density reaches the threshold."""
    if is_reset_frame or density >= cfg.threshold:
        return PROCESS
    return REUSE


@dataclass
class RegionDecision:
    region_index: int
    action: str
    density: float


@dataclass
class FrameDecision:
    frame_index: int
    is_reset: bool
    decisions: list[RegionDecision]

    @property
    def processed(self) -> int:
        return sum(1 for d in self.decisions if d.action == PROCESS)

    @property
    def reused(self) -> int:
        return sum(1 for d in self.decisions if d.action == REUSE)


@dataclass
class CacheEntry:
    labels: LabelMap
    priority: float
    frame_index: int


class KeyframeCache:
    """Per-region cached labels plus pending event counts since last refresh."""

    def __init__(self, num_regions: int):
        self.entries: list[CacheEntry | None] = [None] * num_regions
        self.pending = np.zeros(num_regions, dtype=np.int64)
        self.frame_counter = 0

    def complete(self) -> bool:
        return all(e is not None for e in self.entries)


@dataclass
class MetricsSample:
    wall_time: float
    acc_flops: int
    mac_flops: int
    fired: int
    neurons: int
    decision: FrameDecision


def _frame_to_input(frame: np.ndarray, in_channels: int) -> np.ndarray:
    x = frame.astype(float) / 255.0
    if x.ndim == 2:
        x = x[None]
    if x.shape[0] != in_channels:
        if in_channels == 1:
            x = x.mean(axis=0, keepdims=True)
        else:
            x = np.repeat(x[:1], in_channels, axis=0)
    return x


def process_frame(frame: np.ndarray, events: EventWindow | None,
                  cache: KeyframeCache, net: SegSNNnet, cfg: GateConfig,
                  grid: RegionGrid, flow: FlowField | None = None,
                  reuse_mode: str = "copy", pool: ThreadPoolExecutor | None = None):
    """Gate, segment or reuse, and merge one frame.

    Returns (merged LabelMap, FrameDecision, MetricsSample). The caller owns
    frame ordering; ``cache`` carries all inter-frame state.
    """
    start = time.perf_counter()
    frame_index = cache.frame_counter
    is_reset = frame_index % cfg.reset_period == 0

    if events is not None and len(events):
        density_map = accumulate_density(events)
        counts = np.array([int(density_map.counts[r.slices].sum()) for r in grid.regions],
                          dtype=np.int64)
    else:
        counts = np.zeros(len(grid.regions), dtype=np.int64)
    if cfg.interval_mode == "global":
        cache.pending[:] = counts
    else:
        cache.pending += counts

    areas = np.array([r.area for r in grid.regions], dtype=float)
    densities = cache.pending / areas
    decisions = [RegionDecision(r.index, decide(float(densities[r.index]), cfg, is_reset),
                                float(densities[r.index]))
                 for r in grid.regions]

    x = _frame_to_input(frame, net.spec.in_channels)
    to_process = [d.region_index for d in decisions if d.action == PROCESS]
    crops = {i: crop(x, grid.regions[i]) for i in to_process}
    if pool is not None and len(to_process) > 1:
        futures = {i: pool.submit(net.segment, crops[i]) for i in to_process}
        results = {i: futures[i].result() for i in to_process}
    else:
        results = {i: net.segment(crops[i]) for i in to_process}

    acc = mac = fired = neurons = 0
    for d in decisions:
        region = grid.regions[d.region_index]
        if d.action == PROCESS:
            scores, trace = results[d.region_index]
            labels = LabelMap(np.argmax(scores, axis=0), net.spec.num_classes)
            cache.entries[d.region_index] = CacheEntry(labels, d.density, frame_index)
            cache.pending[d.region_index] = 0
            a, m = trace_flops(trace)
            acc += a
            mac += m
            fired += trace.total_fired()
            neurons += trace.total_spiking_neurons()
        else:
            entry = cache.entries[d.region_index]
            if entry is None:
                raise EmptyCacheReuseError(f"region {d.region_index} reused before first refresh")
            if reuse_mode == "warp":
                if flow is None:
                    raise MissingFlowError(f"frame {frame_index}: no flow for warp reuse")
                entry.labels = warp_labels(entry.labels, flow.crop(region))

    merged = merge_from_cache(grid, cache)
    cache.frame_counter += 1
    sample = MetricsSample(
        wall_time=time.perf_counter() - start,
        acc_flops=acc, mac_flops=mac, fired=fired, neurons=neurons,
        decision=FrameDecision(frame_index, is_reset, decisions),
    )
    return merged, sample.decision, sample


def merge_from_cache(grid: RegionGrid, cache: KeyframeCache) -> LabelMap:
    per_region = [(entry.labels, entry.priority) for entry in cache.entries]
    return merge_labels(grid, per_region)


# --- corpora on disk ---------------------------------------------------------------


@dataclass(frozen=True)
class CorpusEntry:
    frame_path: Path
    events_path: Path
    gt_path: Path | None = None
    flow_path: Path | None = None


@dataclass
class Corpus:
    root: Path
    geometry: tuple[int, int]
    num_classes: int
    period_us: int
    entries: list[CorpusEntry]

    def __len__(self) -> int:
        return len(self.entries)

    def load_frame(self, i: int) -> np.ndarray:
        path = self.entries[i].frame_path
        try:
            values, _ = read_pgm(path)
        except IoFailureError:
            raise
        return values

    def load_events(self, i: int) -> EventWindow:
        path = self.entries[i].events_path
        try:
            return read_events_file(path, geometry=self.geometry)
        except OSError as exc:
            raise IoFailureError(f"cannot read events ({exc})", str(path)) from exc

    def load_gt(self, i: int) -> LabelMap | None:
        path = self.entries[i].gt_path
        return None if path is None else read_label_map(path)

    def load_flow(self, i: int) -> FlowField | None:
        path = self.entries[i].flow_path
        return None if path is None else read_flow(path)


def load_corpus(manifest_path) -> Corpus:
    """Parse a sequence manifest: '# evgate-corpus k=v ...' then one frame per line."""
    manifest_path = Path(manifest_path)
    try:
        lines = manifest_path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest ({exc})", str(manifest_path)) from exc
    root = manifest_path.parent
    meta = {"width": 0, "height": 0, "classes": 0, "period_us": 10_000}
    entries: list[CorpusEntry] = []
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line.lstrip("# ").split():
                if "=" in token:
                    key, value = token.split("=", 1)
                    if key in meta:
                        meta[key] = int(value)
            continue
        cols = line.split()
        if len(cols) < 2:
            raise ManifestError(f"line {line_no}: need at least frame and events paths",
                                str(manifest_path))
        entries.append(CorpusEntry(
            frame_path=root / cols[0],
            events_path=root / cols[1],
            gt_path=root / cols[2] if len(cols) > 2 and cols[2] != "-" else None,
            flow_path=root / cols[3] if len(cols) > 3 and cols[3] != "-" else None,
        ))
    if not entries:
        raise SequenceTooShortError(f"manifest {manifest_path} lists no frames")
    return Corpus(root, (meta["width"], meta["height"]), meta["classes"],
                  meta["period_us"], entries)


# --- full-sequence evaluation ----------------------------------------------------------


@dataclass
class SequenceReport:
    threshold: float
    grid: RegionGrid
    n_frames: int
    frame_times: list[float]
    acc_flops: int
    mac_flops: int
    processed_per_region: list[int]
    reused_per_region: list[int]
    confusion: ConfusionMatrix | None
    fired: int
    neurons: int
    label_maps: list[LabelMap] = field(default_factory=list)
    region_dims: list[tuple[int, int]] = field(default_factory=list)

    @property
    def miou(self) -> float | None:
        if self.confusion is None:
            return None
        return compute_miou(self.confusion)

    @property
    def fps(self) -> float:
        return throughput(self.frame_times)

    @property
    def mean_latency(self) -> float:
        return float(np.mean(self.frame_times))

    @property
    def total_processed(self) -> int:
        return sum(self.processed_per_region)

    @property
    def activation_rate(self) -> float:
        return self.fired / self.neurons if self.neurons else 0.0


def run_sequence(corpus: Corpus, cfg: GateConfig, net: SegSNNnet,
                 reuse_mode: str = "copy", collect_labels: bool = True,
                 threads: int = 1, progress=None) -> SequenceReport:
    """Stream the gate over a corpus and aggregate the run's metrics."""
    if len(corpus) < 1:
        raise SequenceTooShortError("sequence needs at least one frame")
    first_frame = corpus.load_frame(0)
    geometry = (first_frame.shape[1], first_frame.shape[0])
    grid = build_grid(geometry, cfg.rows, cfg.cols, cfg.overlap)
    if reuse_mode == "warp":
        missing = [str(e.flow_path) for e in corpus.entries[1:] if e.flow_path is None]
        if missing:
            raise MissingFlowError(f"{len(missing)} transitions lack flow fields")

    cache = KeyframeCache(len(grid.regions))
    confusion = ConfusionMatrix.zeros(net.spec.num_classes) if any(
        e.gt_path is not None for e in corpus.entries) else None
    processed = np.zeros(len(grid.regions), dtype=np.int64)
    reused = np.zeros(len(grid.regions), dtype=np.int64)
    times: list[float] = []
    acc = mac = fired = neurons = 0
    label_maps: list[LabelMap] = []

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for i in range(len(corpus)):
            frame = first_frame if i == 0 else corpus.load_frame(i)
            events = None if i == 0 else corpus.load_events(i)
            flow = corpus.load_flow(i) if reuse_mode == "warp" and i > 0 else None
            merged, decision, sample = process_frame(
                frame, events, cache, net, cfg, grid, flow=flow,
                reuse_mode=reuse_mode, pool=pool)
            for d in decision.decisions:
                if d.action == PROCESS:
                    processed[d.region_index] += 1
                else:
                    reused[d.region_index] += 1
            times.append(sample.wall_time)
            acc += sample.acc_flops
            mac += sample.mac_flops
            fired += sample.fired
            neurons += sample.neurons
            gt = corpus.load_gt(i)
            if gt is not None and confusion is not None:
                accumulate_confusion(gt, merged, confusion)
            if collect_labels:
                label_maps.append(merged)
            if progress is not None:
                progress(i, len(corpus))
    finally:
        if pool is not None:
            pool.shutdown()

    return SequenceReport(
        threshold=cfg.threshold, grid=grid, n_frames=len(corpus),
        frame_times=times, acc_flops=acc, mac_flops=mac,
        processed_per_region=processed.tolist(), reused_per_region=reused.tolist(),
        confusion=confusion, fired=fired, neurons=neurons,
        label_maps=label_maps,
        region_dims=[(r.height, r.width) for r in grid.regions],
    )


def run_sequence_warp(corpus: Corpus, cfg: GateConfig, net: SegSNNnet,
                      collect_labels: bool = True, threads: int = 1,
                      progress=None) -> SequenceReport:
    """Ablation variant: REUSE regions are flow-warped instead of copied."""
    return run_sequence(corpus, cfg, net, reuse_mode="warp",
                        collect_labels=collect_labels, threads=threads, progress=progress)
