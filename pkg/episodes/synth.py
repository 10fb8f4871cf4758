"""
Synthetic shapes dataset: the desk-scale substrate for training and tests.

Each image holds one primary shape plus up to two distractor shapes of other
classes; the class of a shape is its type, colours are random. Video mode
emits short sequences where every shape drifts by a few pixels per frame and
annotations are instance maps with a class sidecar.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw

from episodes.manifest import DatasetManifest

logger = logging.getLogger(__name__)

SHAPES = ('circle', 'square', 'triangle', 'star', 'ring',
          'hexagon', 'cross', 'diamond', 'ellipse', 'pentagon')

# corners/12, roundness, elongation, hollow, concave, symmetry order/8
ATTRIBUTES: Dict[str, Tuple[float, ...]] = {
    'circle': (0.0, 1.0, 0.0, 0.0, 0.0, 1.0),
    'square': (4 / 12, 0.0, 0.0, 0.0, 0.0, 4 / 8),
    'triangle': (3 / 12, 0.0, 0.0, 0.0, 0.0, 3 / 8),
    'star': (10 / 12, 0.0, 0.0, 0.0, 1.0, 5 / 8),
    'ring': (0.0, 1.0, 0.0, 1.0, 0.0, 1.0),
    'hexagon': (6 / 12, 0.3, 0.0, 0.0, 0.0, 6 / 8),
    'cross': (12 / 12, 0.0, 0.0, 0.0, 1.0, 4 / 8),
    'diamond': (4 / 12, 0.0, 0.4, 0.0, 0.0, 2 / 8),
    'ellipse': (0.0, 1.0, 0.5, 0.0, 0.0, 2 / 8),
    'pentagon': (5 / 12, 0.2, 0.0, 0.0, 0.0, 5 / 8),
}

MAX_SHAPES = 3


@dataclass
class SynthParams:
    n_classes: int = 5
    images_per_class: int = 20
    canvas: int = 64
    distractors: int = 2
    video: bool = False
    sequences_per_class: int = 4
    frames: int = 8
    jitter: int = 3
    embedding_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_classes <= len(SHAPES):
            raise ValueError(f"n_classes must be in 1..{len(SHAPES)}, got {self.n_classes}")
        if self.canvas < 16:
            raise ValueError(f"canvas must be at least 16 px, got {self.canvas}")


@dataclass
class ShapeSpec:
    kind: str
    cx: float
    cy: float
    radius: float
    angle: float
    color: Tuple[int, int, int]

    def moved(self, dx: int, dy: int, canvas: int) -> 'ShapeSpec':
        r = self.radius
        cx = float(np.clip(self.cx + dx, r, canvas - 1 - r))
        cy = float(np.clip(self.cy + dy, r, canvas - 1 - r))
        return ShapeSpec(self.kind, cx, cy, r, self.angle, self.color)

    @classmethod
    def from_dict(cls, raw: Dict) -> 'ShapeSpec':
        return cls(raw['kind'], raw['cx'], raw['cy'], raw['radius'], raw['angle'], tuple(raw['color']))


def _star_points(n: int, r: float, inner: Optional[float], angle: float,
                 cx: float, cy: float) -> List[Tuple[float, float]]:
    points = []
    steps = 2 * n if inner is not None else n
    for i in range(steps):
        radius = r if inner is None or i % 2 == 0 else inner
        theta = angle + 2 * math.pi * i / steps
        points.append((cx + radius * math.cos(theta), cy + radius * math.sin(theta)))
    return points


def _rotated(points: Sequence[Tuple[float, float]], angle: float,
             cx: float, cy: float) -> List[Tuple[float, float]]:
    c, s = math.cos(angle), math.sin(angle)
    return [(cx + x * c - y * s, cy + x * s + y * c) for x, y in points]


def rasterize_shape(spec: ShapeSpec, canvas: int) -> np.ndarray:
    """Boolean canvas×canvas mask of one shape."""
    img = Image.new('L', (canvas, canvas), 0)
    draw = ImageDraw.Draw(img)
    cx, cy, r, a = spec.cx, spec.cy, spec.radius, spec.angle

    if spec.kind == 'circle':
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=1)
    elif spec.kind == 'ring':
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=1)
        inner = 0.5 * r
        draw.ellipse([cx - inner, cy - inner, cx + inner, cy + inner], fill=0)
    elif spec.kind == 'ellipse':
        outline = [(r * math.cos(t), 0.55 * r * math.sin(t))
                   for t in np.linspace(0, 2 * math.pi, 48, endpoint=False)]
        draw.polygon(_rotated(outline, a, cx, cy), fill=1)
    elif spec.kind in ('triangle', 'square', 'pentagon', 'hexagon'):
        n = {'triangle': 3, 'square': 4, 'pentagon': 5, 'hexagon': 6}[spec.kind]
        draw.polygon(_star_points(n, r, None, a, cx, cy), fill=1)
    elif spec.kind == 'diamond':
        draw.polygon(_rotated([(r, 0), (0, 0.6 * r), (-r, 0), (0, -0.6 * r)], a, cx, cy), fill=1)
    elif spec.kind == 'star':
        draw.polygon(_star_points(5, r, 0.45 * r, a, cx, cy), fill=1)
    elif spec.kind == 'cross':
        t = 0.33 * r
        arms = [(t, r), (t, t), (r, t), (r, -t), (t, -t), (t, -r),
                (-t, -r), (-t, -t), (-r, -t), (-r, t), (-t, t), (-t, r)]
        draw.polygon(_rotated(arms, a, cx, cy), fill=1)
    else:
        raise ValueError(f"unknown shape: {spec.kind}")

    return np.asarray(img, dtype=np.uint8).astype(bool)


def compose(specs: Sequence[ShapeSpec], canvas: int, classes: Sequence[str],
            instances: bool = False) -> np.ndarray:
    """Annotation map of shapes painted in order (later shapes occlude earlier ones).

    Values are class ids (1-based) or, with ``instances``, shape index + 1.
    """
    ids = np.zeros((canvas, canvas), dtype=np.uint8)
    for i, spec in enumerate(specs):
        ids[rasterize_shape(spec, canvas)] = i + 1 if instances else list(classes).index(spec.kind) + 1
    return ids


def _random_shape(kind: str, canvas: int, rng: np.random.Generator) -> ShapeSpec:
    r = float(rng.uniform(0.12 * canvas, 0.22 * canvas))
    cx, cy = (float(v) for v in rng.uniform(r, canvas - 1 - r, size=2))
    color = tuple(int(v) for v in rng.integers(60, 256, size=3))
    return ShapeSpec(kind, cx, cy, r, float(rng.uniform(0, 2 * math.pi)), color)


def _shapes_for(kind: str, classes: Sequence[str], params: SynthParams,
                rng: np.random.Generator) -> List[ShapeSpec]:
    others = [c for c in classes if c != kind]
    n_extra = int(rng.integers(0, min(params.distractors, MAX_SHAPES - 1) + 1)) if others else 0
    extra = [others[int(i)] for i in rng.integers(0, len(others), size=n_extra)] if n_extra else []
    # the primary shape goes last so it is never occluded
    return [_random_shape(c, params.canvas, rng) for c in extra] + [_random_shape(kind, params.canvas, rng)]


def _render(specs: Sequence[ShapeSpec], background: np.ndarray, canvas: int,
            rng: np.random.Generator) -> np.ndarray:
    noise = rng.integers(-12, 13, size=(canvas, canvas, 3))
    image = background[None, None, :] + noise
    for spec in specs:
        mask = rasterize_shape(spec, canvas)
        image[mask] = np.asarray(spec.color) + noise[mask] // 2
    return np.clip(image, 0, 255).astype(np.uint8)


def _embedding_lines(classes: Sequence[str], dim: int, seed: int) -> List[str]:
    rng = np.random.default_rng(seed + 7919)
    basis = rng.standard_normal((dim, len(next(iter(ATTRIBUTES.values())))))
    lines = [f"{len(classes)} {dim}"]
    for kind in classes:
        vector = basis @ (2 * np.asarray(ATTRIBUTES[kind]) - 1) + 0.05 * rng.standard_normal(dim)
        lines.append(kind + ' ' + ' '.join(f"{v:.6f}" for v in vector))
    return lines


def synth_shapes(out_dir: Union[str, Path], params: Optional[SynthParams] = None,
                 rng: Optional[np.random.Generator] = None) -> DatasetManifest:
    params = params or SynthParams()
    rng = rng or np.random.default_rng(params.seed)
    root = Path(out_dir)
    (root / 'images').mkdir(parents=True, exist_ok=True)
    (root / 'annotations').mkdir(parents=True, exist_ok=True)

    classes = sorted(SHAPES[:params.n_classes])
    index_shapes: Dict[str, List[Dict]] = {}
    sequences: List[Tuple[str, str]] = []

    def write(name: str, specs: List[ShapeSpec], background: np.ndarray) -> None:
        image = _render(specs, background, params.canvas, rng)
        ids = compose(specs, params.canvas, classes, instances=params.video)
        image_path = root / 'images' / f"{name}.png"
        annotation_path = root / 'annotations' / f"{name}.png"
        image_path.parent.mkdir(parents=True, exist_ok=True)
        annotation_path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(image).save(image_path)
        Image.fromarray(ids).save(annotation_path)

        if params.video:
            mapping = {str(i + 1): s.kind for i, s in enumerate(specs)}
            with open(annotation_path.with_suffix('.json'), 'w', encoding='utf-8') as f:
                json.dump(mapping, f, sort_keys=True)
        index_shapes[name] = [asdict(s) for s in specs]

    counter = 0
    for kind in classes:
        if not params.video:
            for _ in range(params.images_per_class):
                background = rng.integers(0, 90, size=3)
                write(f"img_{counter:05d}", _shapes_for(kind, classes, params, rng), background)
                counter += 1
            continue

        for _ in range(params.sequences_per_class):
            seq_id = f"seq_{counter:04d}"
            counter += 1
            sequences.append((seq_id, kind))
            specs = _shapes_for(kind, classes, params, rng)
            background = rng.integers(0, 90, size=3)
            for frame in range(params.frames):
                if frame:
                    specs = [
                        s.moved(*(int(v) for v in rng.integers(-params.jitter, params.jitter + 1, size=2)),
                                params.canvas)
                        for s in specs
                    ]
                write(f"{seq_id}/{frame:03d}", specs, background)

    with open(root / 'classes.txt', 'w', encoding='utf-8') as f:
        f.write('\n'.join(classes) + '\n')
    if sequences:
        with open(root / 'sequences.txt', 'w', encoding='utf-8') as f:
            f.write(''.join(f"{seq_id} {kind}\n" for seq_id, kind in sequences))
    with open(root / 'embeddings.txt', 'w', encoding='utf-8') as f:
        f.write('\n'.join(_embedding_lines(classes, params.embedding_dim, params.seed)) + '\n')
    # the scan of the written annotations is the source of per-image classes
    (root / 'index.json').unlink(missing_ok=True)
    manifest = DatasetManifest.load(root)
    manifest.write_index({'shapes': index_shapes, 'params': asdict(params)})

    logger.info(f"Сгенерирован синтетический датасет в {root}", extra={
        'classes': len(classes), 'images': len(manifest.images), 'video': params.video
    })
    return manifest


def load_shapes(root: Union[str, Path]) -> Dict[str, List[ShapeSpec]]:
    """Shape specs recorded by ``synth_shapes``, keyed by image name."""
    with open(Path(root) / 'index.json', 'r', encoding='utf-8') as f:
        payload = json.load(f)
    return {name: [ShapeSpec.from_dict(s) for s in specs] for name, specs in payload.get('shapes', {}).items()}
