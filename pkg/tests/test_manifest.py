import json

import numpy as np
import pytest
from PIL import Image

from core.errors import ManifestError, UnknownClass
from episodes.manifest import DatasetManifest


def _write_dataset(root, with_index=False):
    (root / 'images').mkdir(parents=True)
    (root / 'annotations').mkdir()
    (root / 'classes.txt').write_text("cat\ndog\n")
    ids = {
        'a': np.array([[0, 1], [1, 0]], dtype=np.uint8),
        'b': np.array([[2, 2], [255, 0]], dtype=np.uint8),
        'c': np.array([[1, 2], [0, 0]], dtype=np.uint8),
    }
    for name, mask in ids.items():
        Image.fromarray(np.full((2, 2, 3), 100, dtype=np.uint8)).save(root / 'images' / f"{name}.png")
        Image.fromarray(mask).save(root / 'annotations' / f"{name}.png")
    if with_index:
        (root / 'index.json').write_text(json.dumps({'version': 1, 'images': {'a': ['dog']}}))
    return root


def test_load_scans_annotations(tmp_path):
    manifest = DatasetManifest.load(_write_dataset(tmp_path))
    assert manifest.classes == ['cat', 'dog']
    assert manifest.images_of('cat') == ['a', 'c']
    assert manifest.images_of('dog') == ['b', 'c']
    assert not manifest.is_video
    assert manifest.load_image('a').shape == (2, 2, 3)
    assert manifest.load_annotation('b').ids.tolist() == [[2, 2], [255, 0]]


def test_index_cache_is_used(tmp_path):
    manifest = DatasetManifest.load(_write_dataset(tmp_path, with_index=True))
    assert 'a' in manifest.images_of('dog')


def test_write_index_roundtrip(tmp_path):
    manifest = DatasetManifest.load(_write_dataset(tmp_path))
    path = manifest.write_index()
    payload = json.loads(path.read_text())
    assert payload['images']['c'] == ['cat', 'dog']
    assert DatasetManifest.load(tmp_path).by_class == manifest.by_class


def test_unknown_class_lookup(tmp_path):
    manifest = DatasetManifest.load(_write_dataset(tmp_path))
    with pytest.raises(UnknownClass):
        manifest.images_of('horse')


def test_missing_pieces_are_reported(tmp_path):
    with pytest.raises(ManifestError):
        DatasetManifest.load(tmp_path)
    root = _write_dataset(tmp_path / 'd')
    (root / 'annotations' / 'a.png').unlink()
    with pytest.raises(ManifestError):
        DatasetManifest.load(root)


def test_index_with_unknown_class_is_rejected(tmp_path):
    root = _write_dataset(tmp_path)
    (root / 'index.json').write_text(json.dumps({'version': 1, 'images': {'a': ['horse']}}))
    with pytest.raises(ManifestError):
        DatasetManifest.load(root)


def test_sequences_file_validation(tmp_path):
    root = _write_dataset(tmp_path)
    (root / 'sequences.txt').write_text("seq_0 cat\n")
    with pytest.raises(ManifestError):
        DatasetManifest.load(root)


def test_video_manifest(video_root):
    manifest = DatasetManifest.load(video_root)
    assert manifest.is_video
    for seq_id, record in manifest.sequences.items():
        assert len(record.frames) == 4
        assert manifest.frames_with(seq_id, record.label) == list(record.frames)
        assert all(manifest.images[f].sequence == seq_id for f in record.frames)
    assert sum(len(manifest.sequences_of(c)) for c in manifest.classes) == len(manifest.sequences)
