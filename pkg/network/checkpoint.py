"""
Single-file checkpoints: named tensors plus the ModelConfig document.
"""

import logging
import pickle
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import torch

from core.errors import CheckpointError
from network.segmenter import FewShotSegmenter, ModelConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def save_checkpoint(model: FewShotSegmenter, path: Union[str, Path],
                    metadata: Optional[Dict[str, Any]] = None) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        'format_version': FORMAT_VERSION,
        'model_config': model.cfg.to_dict(),
        'state_dict': model.state_dict(),
        'metadata': metadata or {},
    }, target)
    logger.info(f"Чекпоинт сохранен: {target}")
    return target


def load_checkpoint(path: Union[str, Path],
                    expected: Optional[ModelConfig] = None) -> Tuple[FewShotSegmenter, Dict[str, Any]]:
    """Rebuild the model; a config differing from ``expected`` is an error."""
    source = Path(path)
    try:
        archive = torch.load(source, map_location='cpu', weights_only=False)
    except (OSError, RuntimeError, EOFError, pickle.UnpicklingError) as e:
        raise CheckpointError(f"Не удалось прочитать чекпоинт {source}: {e}")

    if not isinstance(archive, dict) or archive.get('format_version') != FORMAT_VERSION:
        raise CheckpointError(f"Неизвестный формат чекпоинта: {source}")

    cfg = ModelConfig(**archive['model_config'])
    if expected is not None and expected.to_dict() != cfg.to_dict():
        diff = {
            k: (v, cfg.to_dict()[k]) for k, v in expected.to_dict().items() if cfg.to_dict()[k] != v
        }
        raise CheckpointError(f"Конфигурация чекпоинта не совпадает: {diff}")

    # encoder weights come from the state dict, not from the original file
    model = FewShotSegmenter(replace(cfg, encoder_weights=None))
    model.cfg = cfg
    try:
        model.load_state_dict(archive['state_dict'], strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"Веса чекпоинта не подходят к модели: {e}")
    model.eval()
    return model, archive.get('metadata', {})
