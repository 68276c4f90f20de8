import pytest

from evgate.pipeline import load_corpus
from evgate.snn.network import DESK_SPEC, SegSNNnet
from evgate.synth import preset_static, preset_three_strips, preset_translate, render_sequence, write_corpus


@pytest.fixture(scope="session")
def strips_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("strips")
    manifest = write_corpus(render_sequence(preset_three_strips(frames=20)), root)
    return load_corpus(manifest)


@pytest.fixture(scope="session")
def static_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("static")
    manifest = write_corpus(render_sequence(preset_static(frames=12)), root)
    return load_corpus(manifest)


@pytest.fixture(scope="session")
def translate_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("translate")
    manifest = write_corpus(render_sequence(preset_translate(frames=14)), root)
    return load_corpus(manifest)


@pytest.fixture(scope="session")
def desk_net():
    return SegSNNnet(DESK_SPEC, seed=123)
