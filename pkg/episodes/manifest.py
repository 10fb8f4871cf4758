"""
Dataset manifest: the on-disk layout shared by real benchmarks and the
synthetic generator.

    <root>/classes.txt            one class name per line; id = line number (1-based)
    <root>/images/<name>.png|jpg  RGB images; <name> may be "<sequence>/<frame>"
    <root>/annotations/<name>.png class-id map (0 background, 255 void), or an
                                  instance-id map with <name>.json {"<id>": "<class>"}
    <root>/sequences.txt          optional, "<sequence> <class>" per line (video data)
    <root>/index.json             optional cache of per-image class lists

Every referenced file is checked when the manifest loads.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from PIL import Image

from core.errors import ManifestError, UnknownClass
from episodes.masks import Annotation

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = ('.png', '.jpg', '.jpeg')
INDEX_VERSION = 1


@dataclass(frozen=True)
class ImageRecord:
    name: str
    image_path: Path
    annotation_path: Path
    instances_path: Optional[Path] = None
    classes: Tuple[str, ...] = ()
    sequence: Optional[str] = None


@dataclass(frozen=True)
class SequenceRecord:
    sequence_id: str
    label: str
    frames: Tuple[str, ...]


@dataclass
class DatasetManifest:
    root: Path
    classes: List[str]
    images: Dict[str, ImageRecord]
    sequences: Dict[str, SequenceRecord] = field(default_factory=dict)

    def __post_init__(self):
        self.by_class: Dict[str, List[str]] = {c: [] for c in self.classes}
        for name in sorted(self.images):
            for label in self.images[name].classes:
                self.by_class.setdefault(label, []).append(name)
        self.sequences_by_class: Dict[str, List[str]] = {c: [] for c in self.classes}
        for seq_id in sorted(self.sequences):
            self.sequences_by_class.setdefault(self.sequences[seq_id].label, []).append(seq_id)

    @property
    def is_video(self) -> bool:
        return bool(self.sequences)

    def canonical_classes(self) -> List[str]:
        return sorted(self.classes)

    def images_of(self, label: str) -> List[str]:
        if label not in self.by_class:
            raise UnknownClass(f"class '{label}' is not in the manifest")
        return self.by_class[label]

    def sequences_of(self, label: str) -> List[str]:
        if label not in self.sequences_by_class:
            raise UnknownClass(f"class '{label}' is not in the manifest")
        return self.sequences_by_class[label]

    def frames_with(self, sequence_id: str, label: str) -> List[str]:
        """Frames of a sequence, in order, whose annotation contains ``label``."""
        return [f for f in self.sequences[sequence_id].frames if label in self.images[f].classes]

    def load_image(self, name: str) -> np.ndarray:
        record = self.images[name]
        try:
            with Image.open(record.image_path) as img:
                return np.asarray(img.convert('RGB'), dtype=np.uint8)
        except OSError as e:
            raise ManifestError(f"Не удалось прочитать изображение {record.image_path}: {e}")

    def load_annotation(self, name: str) -> Annotation:
        record = self.images[name]
        try:
            with Image.open(record.annotation_path) as img:
                ids = np.asarray(img, dtype=np.uint8).copy()
        except OSError as e:
            raise ManifestError(f"Не удалось прочитать разметку {record.annotation_path}: {e}")
        if ids.ndim != 2:
            raise ManifestError(f"Разметка должна быть одноканальной: {record.annotation_path}")

        instances = None
        if record.instances_path is not None:
            instances = _read_instances(record.instances_path)
        return Annotation(ids, self.classes, instances)

    @classmethod
    def load(cls, root: Union[str, Path]) -> 'DatasetManifest':
        root = Path(root)
        classes_file = root / 'classes.txt'
        if not classes_file.exists():
            raise ManifestError(f"Не найден список классов: {classes_file}")
        with open(classes_file, 'r', encoding='utf-8') as f:
            classes = [line.strip() for line in f if line.strip()]
        if len(set(classes)) != len(classes):
            raise ManifestError(f"Повторяющиеся классы в {classes_file}")

        records = _scan_images(root)
        if not records:
            raise ManifestError(f"В {root / 'images'} нет изображений")

        cached = _read_index(root)
        indexed: Dict[str, ImageRecord] = {}
        for name, record in records.items():
            labels = cached.get(name)
            if labels is None:
                labels = _classes_in(record, classes)
            unknown = set(labels) - set(classes)
            if unknown:
                raise ManifestError(f"{name}: классы {sorted(unknown)} отсутствуют в classes.txt")
            indexed[name] = ImageRecord(
                name, record.image_path, record.annotation_path, record.instances_path,
                tuple(sorted(labels)), name.split('/', 1)[0] if '/' in name else None
            )

        sequences = _read_sequences(root, indexed, classes)
        manifest = cls(root, classes, indexed, sequences)
        logger.info(f"Загружен манифест {root}", extra={
            'classes': len(classes), 'images': len(indexed), 'sequences': len(sequences)
        })
        return manifest

    def write_index(self, extra: Optional[Dict[str, Any]] = None) -> Path:
        """Store per-image class lists so the next load skips annotation scans.

        ``extra`` keys are stored alongside; the synthetic generator keeps its
        shape records there.
        """
        target = self.root / 'index.json'
        payload = {
            **(extra or {}),
            'version': INDEX_VERSION,
            'images': {name: list(r.classes) for name, r in sorted(self.images.items())},
        }
        with open(target, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=1, sort_keys=True)
        return target


def _scan_images(root: Path) -> Dict[str, ImageRecord]:
    image_dir = root / 'images'
    annotation_dir = root / 'annotations'
    if not image_dir.is_dir():
        raise ManifestError(f"Не найдена директория изображений: {image_dir}")
    if not annotation_dir.is_dir():
        raise ManifestError(f"Не найдена директория разметки: {annotation_dir}")

    records = {}
    for path in sorted(image_dir.rglob('*')):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        name = path.relative_to(image_dir).with_suffix('').as_posix()
        annotation = annotation_dir / f"{name}.png"
        if not annotation.exists():
            raise ManifestError(f"Нет разметки для {name}: {annotation}")
        instances = annotation_dir / f"{name}.json"
        records[name] = ImageRecord(name, path, annotation, instances if instances.exists() else None)
    return records


def _read_instances(path: Path) -> Dict[int, str]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"Некорректный файл экземпляров {path}: {e}")
    return {int(k): str(v) for k, v in raw.items()}


def _classes_in(record: ImageRecord, classes: List[str]) -> List[str]:
    with Image.open(record.annotation_path) as img:
        ids = np.asarray(img, dtype=np.uint8)
    instances = _read_instances(record.instances_path) if record.instances_path else None
    return list(Annotation(ids, classes, instances).present_classes())


def _read_index(root: Path) -> Dict[str, List[str]]:
    path = root / 'index.json'
    if not path.exists():
        return {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.warning(f"Индекс {path} поврежден, разметка будет просканирована: {e}")
        return {}
    if payload.get('version') != INDEX_VERSION:
        return {}
    return payload.get('images', {})


def _read_sequences(root: Path, images: Dict[str, ImageRecord],
                    classes: List[str]) -> Dict[str, SequenceRecord]:
    path = root / 'sequences.txt'
    if not path.exists():
        return {}

    frames: Dict[str, List[str]] = {}
    for name in sorted(images):
        if images[name].sequence is not None:
            frames.setdefault(images[name].sequence, []).append(name)

    sequences = {}
    with open(path, 'r', encoding='utf-8') as f:
        for number, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ManifestError(f"{path}:{number}: ожидается '<sequence> <class>'")
            seq_id, label = parts[0], ' '.join(parts[1:])
            if label not in classes:
                raise ManifestError(f"{path}:{number}: неизвестный класс {label}")
            if seq_id not in frames:
                raise ManifestError(f"{path}:{number}: нет кадров для последовательности {seq_id}")
            sequences[seq_id] = SequenceRecord(seq_id, label, tuple(frames[seq_id]))
    return sequences
