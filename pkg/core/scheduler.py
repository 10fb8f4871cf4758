#!/usr/bin/env python3
"""
Training schedule: epoch arithmetic, optimizer and the stepped learning rate
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List

import torch
from torch.optim import SGD
from torch.optim.lr_scheduler import MultiStepLR

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochPlan:
    """An epoch is train_tasks / batch_size / max_epochs optimizer steps,
    so max_epochs epochs sample train_tasks episodes in total."""

    train_tasks: int
    batch_size: int
    max_epochs: int

    @property
    def steps_per_epoch(self) -> int:
        return max(1, self.train_tasks // (self.batch_size * self.max_epochs))

    @property
    def total_steps(self) -> int:
        return self.steps_per_epoch * self.max_epochs

    @property
    def total_tasks(self) -> int:
        return self.total_steps * self.batch_size

    @classmethod
    def from_params(cls, training: Dict[str, Any]) -> 'EpochPlan':
        return cls(int(training['train_tasks']), int(training['batch_size']), int(training['max_epochs']))


def lr_at_epoch(epoch: int, base_lr: float, decay_epochs: Iterable[int], factor: float = 0.1) -> float:
    """Learning rate in effect during a 1-based epoch.

    The rate drops after each listed epoch: with decay at 35, epoch 35 still
    trains at base_lr and epoch 36 at base_lr * factor.
    """
    decays = sum(1 for milestone in decay_epochs if epoch > milestone)
    return base_lr * factor ** decays


class TrainingSchedule:
    """Optimizer plus epoch-stepped LR schedule for the trainable parameters"""

    def __init__(self, params: Iterable[torch.nn.Parameter], training: Dict[str, Any]):
        self.training = training
        self.plan = EpochPlan.from_params(training)
        self.base_lr = float(training['lr'])
        self.decay_epochs: List[int] = [int(e) for e in training.get('lr_decay_epochs') or []]
        self.factor = float(training.get('lr_decay_factor', 0.1))

        self.optimizer = SGD(
            list(params),
            lr=self.base_lr,
            momentum=float(training['momentum']),
            weight_decay=float(training['weight_decay'])
        )
        self.lr_scheduler = MultiStepLR(self.optimizer, milestones=self.decay_epochs, gamma=self.factor)
        self.epoch = 1

        logger.info(
            f"Schedule: {self.plan.max_epochs} epochs x {self.plan.steps_per_epoch} steps, "
            f"lr {self.base_lr}, decay at {self.decay_epochs}"
        )

    @property
    def current_lr(self) -> float:
        return float(self.optimizer.param_groups[0]['lr'])

    def expected_lr(self, epoch: int) -> float:
        return lr_at_epoch(epoch, self.base_lr, self.decay_epochs, self.factor)

    def end_epoch(self) -> None:
        """Advance to the next epoch and verify the optimizer follows the plan"""
        self.lr_scheduler.step()
        self.epoch += 1
        expected = self.expected_lr(self.epoch)
        if abs(self.current_lr - expected) > 1e-12 * max(1.0, expected):
            logger.warning(f"LR drift at epoch {self.epoch}: {self.current_lr} vs {expected}")
