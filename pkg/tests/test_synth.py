import numpy as np
import pytest

from evgate.errors import SceneSpecError
from evgate.events import accumulate_density
from evgate.regions import read_label_map, read_pgm
from evgate.synth import (
    PRESETS,
    Primitive,
    SceneSpec,
    disk,
    load_scene_spec,
    preset_static,
    preset_three_strips,
    preset_translate,
    primitive_track,
    rect,
    render_sequence,
    write_corpus,
)
from evgate.warp import read_flow, warp_labels


def tiny_spec(**kwargs):
    defaults = dict(width=32, height=24, num_classes=3, frames=5, contrast=0.2,
                    primitives=(rect(1, (6, 4), (2, 3), (2, 0), 200),))
    defaults.update(kwargs)
    return SceneSpec(**defaults)


class TestRendering:
    def test_static_scene_has_zero_events(self):
        seq = render_sequence(tiny_spec(primitives=(rect(1, (6, 4), (2, 3), (0, 0), 200),)))
        assert all(len(w) == 0 for w in seq.windows)

    def test_moving_rectangle_events_only_on_edges(self):
        seq = render_sequence(tiny_spec())
        w = seq.windows[1]
        assert len(w) > 0
        d = accumulate_density(w)
        # interior of the rectangle is constant intensity: silent
        # frame 0 box columns [2,8), frame 1 [4,10): shared interior [4,8)
        assert d.counts[4, 5] == 0 and d.counts[4, 6] == 0
        # leading and trailing edge columns carry the activity
        assert d.counts[3:7, 2:4].sum() > 0
        assert d.counts[3:7, 8:10].sum() > 0

    def test_event_count_quantization(self):
        # background 0 -> intensity 1: log step log(2) = 0.693; contrast 0.2
        # gives floor(3.466) = 3 events at each changed pixel
        spec = tiny_spec(background=0,
                         primitives=(rect(1, (4, 4), (0, 0), (4, 0), 1),),
                         contrast=0.2)
        seq = render_sequence(spec)
        d = accumulate_density(seq.windows[1])
        changed = d.counts[d.counts > 0]
        assert (changed == 3).all()

    def test_polarity_sign_of_change(self):
        spec = tiny_spec(background=0, primitives=(rect(1, (4, 4), (0, 0), (4, 0), 64),))
        w = render_sequence(spec).windows[1]
        for e in w:
            # pixels the object vacated got darker (-1), newly covered brighter (+1)
            assert e.p == (1 if e.x >= 4 else -1)

    def test_doubled_speed_at_least_as_many_events(self):
        slow = render_sequence(tiny_spec(primitives=(rect(1, (6, 4), (2, 3), (1, 0), 200),)))
        fast = render_sequence(tiny_spec(primitives=(rect(1, (6, 4), (2, 3), (2, 0), 200),)))
        assert len(fast.windows[1]) >= len(slow.windows[1])

    def test_quiet_regions_have_exactly_zero_density(self):
        seq = render_sequence(tiny_spec())
        d = accumulate_density(seq.windows[1])
        assert d.counts[:, 16:].sum() == 0  # object never reaches the right half

    def test_timestamps_inside_transition_window(self):
        seq = render_sequence(tiny_spec(period_us=1000))
        w = seq.windows[2]
        assert w.t_start == 1000 and w.t_end == 2000
        assert (w.t >= 1000).all() and (w.t < 2000).all()

    def test_labels_topmost_primitive_wins(self):
        spec = tiny_spec(primitives=(
            rect(1, (8, 8), (2, 2), (0, 0), 100),
            rect(2, (4, 4), (4, 4), (0, 0), 180),
        ))
        seq = render_sequence(spec)
        lab = seq.labels[0].labels
        assert lab[5, 5] == 2  # later primitive paints on top
        assert lab[2, 2] == 1
        assert lab[0, 0] == 0

    def test_bounce_keeps_primitive_inside_bounds(self):
        spec = tiny_spec(frames=60, primitives=(
            rect(1, (6, 4), (2, 3), (3, 2), 200, bounds=(0, 0, 20, 16)),))
        track = primitive_track(spec, spec.primitives[0])
        for x, y in track:
            assert 0 <= x <= 20 - 6 and 0 <= y <= 16 - 4

    def test_start_outside_bounds_rejected(self):
        with pytest.raises(SceneSpecError):
            render_sequence(tiny_spec(primitives=(
                rect(1, (6, 4), (30, 3), (1, 0), 200),)))

    def test_flow_warp_reproduces_next_labels_for_translation(self):
        spec = preset_translate(frames=10)
        seq = render_sequence(spec)
        for i in range(1, spec.frames):
            warped = warp_labels(seq.labels[i - 1], seq.flows[i])
            assert (warped.labels == seq.labels[i].labels).all(), f"frame {i}"


class TestPresets:
    def test_three_strips_density_profile(self):
        from evgate.events import mean_density
        from evgate.regions import build_grid

        seq = render_sequence(preset_three_strips(frames=30))
        grid = build_grid((96, 64), 1, 3, 20)
        dens = np.array([[mean_density(accumulate_density(w), r) for r in grid.regions]
                         for w in seq.windows[1:]])
        left, middle, right = dens.mean(axis=0)
        assert left >= 2.5 * middle
        assert right >= 2.5 * middle

    def test_static_preset_truly_static(self):
        seq = render_sequence(preset_static(frames=8))
        assert all(len(w) == 0 for w in seq.windows)

    def test_translate_preset_never_bounces(self):
        spec = preset_translate(frames=28)
        for prim in spec.primitives:
            track = primitive_track(spec, prim)
            deltas = {(b[0] - a[0], b[1] - a[1]) for a, b in zip(track, track[1:])}
            assert deltas == {(2, 0)}

    def test_all_presets_render(self):
        for name, factory in PRESETS.items():
            seq = render_sequence(factory(frames=6))
            assert len(seq.frames) == 6, name


class TestCorpusIo:
    def test_round_trip_bit_identical(self, tmp_path):
        seq = render_sequence(tiny_spec())
        manifest = write_corpus(seq, tmp_path / "corpus")
        lines = [l for l in manifest.read_text().splitlines() if l and not l.startswith("#")]
        assert len(lines) == 5  # one per frame
        root = manifest.parent
        for i, line in enumerate(lines):
            frame_rel, events_rel, label_rel, flow_rel = line.split()
            frame, maxval = read_pgm(root / frame_rel)
            assert maxval == 255
            assert (frame == seq.frames[i]).all()
            lm = read_label_map(root / label_rel)
            assert (lm.labels == seq.labels[i].labels).all()
            assert lm.num_classes == seq.labels[i].num_classes
            flow = read_flow(root / flow_rel)
            assert (flow.vectors == seq.flows[i].vectors).all()
            from evgate.events import read_events_file

            w = read_events_file(root / events_rel)
            assert [tuple(e) for e in w] == [tuple(e) for e in seq.windows[i]]

    def test_corpus_without_flows(self, tmp_path):
        seq = render_sequence(tiny_spec())
        manifest = write_corpus(seq, tmp_path / "corpus", with_flows=False)
        lines = [l for l in manifest.read_text().splitlines() if not l.startswith("#")]
        assert all(len(l.split()) == 3 for l in lines if l)


class TestSceneSpecFile:
    def test_ini_round_trip(self, tmp_path):
        path = tmp_path / "scene.ini"
        path.write_text("""
[scene]
width = 40
height = 30
classes = 3
frames = 7
contrast = 0.25
background = 16
period_us = 5000

[primitive:box]
kind = rect
class = 1
size = 6x4
start = 2,3
velocity = 1,0
intensity = 120

[primitive:ball]
kind = disk
class = 2
size = 7x7
start = 20,10
velocity = 0,1
intensity = 200
bounds = 16,4,36,26
""", encoding="utf-8")
        spec = load_scene_spec(path)
        assert spec.width == 40 and spec.frames == 7
        assert len(spec.primitives) == 2
        assert spec.primitives[1].kind == "disk"
        assert spec.primitives[1].bounds == (16, 4, 36, 26)
        render_sequence(spec)  # must be renderable

    def test_missing_scene_section(self, tmp_path):
        path = tmp_path / "scene.ini"
        path.write_text("[wrong]\nwidth = 4\n", encoding="utf-8")
        with pytest.raises(SceneSpecError):
            load_scene_spec(path)

    def test_invalid_contrast(self):
        with pytest.raises(SceneSpecError):
            tiny_spec(contrast=0.0)

    def test_primitive_class_outside_range(self):
        with pytest.raises(SceneSpecError):
            tiny_spec(primitives=(rect(7, (2, 2), (0, 0), (0, 0), 50),))
