import json

import numpy as np
import pytest
import torch
from PIL import Image

from core.errors import ConfigError
from episodes.folds import get_fold
from episodes.manifest import DatasetManifest
from episodes.sampler import EpisodeSampler
from network.segmenter import build_model
from network.semantics import build_provider
from utils.attention_maps import UNIFORM_GRAY, channel_mean, export_attention_maps, gate_image, normalize_map
from utils.dependencies import DependencyChecker


@pytest.fixture(scope="module")
def sampler(shapes_root):
    manifest = DatasetManifest.load(shapes_root)
    fold = get_fold(manifest.canonical_classes(), 0, 5, 1)
    return EpisodeSampler(manifest, fold, 'meta-test', k=1, l=2, seed=1)


def test_normalize_spans_full_range():
    out = normalize_map(np.array([[0.2, 0.4], [0.6, 1.0]]))
    assert out.dtype == np.uint8
    assert out.min() == 0 and out.max() == 255


def test_constant_map_is_gray():
    assert np.all(normalize_map(np.full((3, 3), 0.7)) == UNIFORM_GRAY)


def test_gate_image():
    gate = torch.rand(6, 4, 4)
    image = gate_image(gate, 16)
    assert image.size == (16, 16)
    assert image.mode == 'L'
    np.testing.assert_allclose(channel_mean(gate), gate.double().mean(0).numpy())


def test_export_writes_one_map_per_query(tmp_path, sampler, shapes_root, tiny_model_config):
    model = build_model(tiny_model_config, seed=0)
    provider = build_provider({'source': 'auto'}, shapes_root)
    paths = export_attention_maps(model, sampler, provider, tmp_path / 'maps', 3, 32)
    assert len(paths) == 6
    for path in paths:
        assert Image.open(path).size == (32, 32)
    lines = (tmp_path / 'maps' / 'index.jsonl').read_text().splitlines()
    assert [json.loads(line)['index'] for line in lines] == [0, 1, 2]


def test_concat_conditioning_has_no_maps(tmp_path, sampler, shapes_root, tiny_model_config):
    tiny_model_config.interaction = 'cond'
    model = build_model(tiny_model_config, seed=0)
    provider = build_provider({'source': 'auto'}, shapes_root)
    with pytest.raises(ConfigError):
        export_attention_maps(model, sampler, provider, tmp_path / 'maps', 1, 32)


def test_dependency_report():
    status = DependencyChecker.report()
    assert status['ok']
    assert status['required']['torch']
