"""
Frozen image encoders. Both variants output stride-8 feature maps.
"""

import logging
from pathlib import Path
from typing import Optional

import torch
import torch.nn as nn

from core.errors import CheckpointError, ConfigError, InvalidImage

logger = logging.getLogger(__name__)


class TinyEncoder(nn.Module):
    """Four 3×3 conv layers, three of stride 2; used for tests and desk runs."""

    def __init__(self, out_channels: int = 64, bias: bool = True):
        super().__init__()
        self.out_channels = out_channels
        self.features = nn.Sequential(
            nn.Conv2d(3, 32, 3, stride=2, padding=1, bias=bias), nn.ReLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1, bias=bias), nn.ReLU(),
            nn.Conv2d(64, out_channels, 3, stride=2, padding=1, bias=bias), nn.ReLU(),
            nn.Conv2d(out_channels, out_channels, 3, stride=1, padding=1, bias=bias), nn.ReLU(),
        )

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.features(images)


class ResNetEncoder(nn.Module):
    """ResNet-50 truncated at ``layer2`` or ``layer3`` with dilated stage 3.

    Weights come from a local state-dict file; nothing is downloaded.
    """

    TAP_CHANNELS = {'layer2': 512, 'layer3': 1024}

    def __init__(self, weights_path: Optional[str] = None, tap: str = 'layer3'):
        super().__init__()
        if tap not in self.TAP_CHANNELS:
            raise ConfigError(f"Неизвестная точка съема признаков: {tap}")
        try:
            from torchvision.models import resnet50
        except ImportError as e:
            raise ConfigError(f"Для энкодера resnet50 требуется torchvision: {e}")

        backbone = resnet50(weights=None, replace_stride_with_dilation=[False, True, True])
        if weights_path:
            path = Path(weights_path)
            if not path.exists():
                raise CheckpointError(f"Файл весов энкодера не найден: {path}")
            state = torch.load(path, map_location='cpu')
            missing, unexpected = backbone.load_state_dict(state, strict=False)
            logger.info(f"Загружены веса энкодера из {path}",
                        extra={'missing': len(missing), 'unexpected': len(unexpected)})
        else:
            logger.warning("Энкодер resnet50 без предобученных весов")

        self.tap = tap
        self.out_channels = self.TAP_CHANNELS[tap]
        stages = [backbone.conv1, backbone.bn1, backbone.relu, backbone.maxpool, backbone.layer1, backbone.layer2]
        if tap == 'layer3':
            stages.append(backbone.layer3)
        self.features = nn.Sequential(*stages)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.features(images)


def build_encoder(name: str, feature_channels: int, weights_path: Optional[str] = None,
                  tap: str = 'layer3') -> nn.Module:
    if name == 'tiny':
        encoder: nn.Module = TinyEncoder(feature_channels)
    elif name == 'resnet50':
        encoder = ResNetEncoder(weights_path, tap)
    else:
        raise ConfigError(f"Неизвестный энкодер: {name}")
    freeze(encoder)
    return encoder


def freeze(encoder: nn.Module) -> nn.Module:
    for param in encoder.parameters():
        param.requires_grad_(False)
    encoder.eval()
    return encoder


def check_images(images: torch.Tensor) -> None:
    if images.dim() != 4 or images.shape[1] != 3:
        raise InvalidImage(f"expected B×3×H×W RGB batch, got {tuple(images.shape)}")
