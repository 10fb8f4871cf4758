"""
Мета-обучение и мета-тестирование.

Обучение оптимизирует проекцию, взаимодействие и декодер на эпизодах из
meta-train классов фолда; энкодер заморожен. Оценка идет фиксированное число
эпизодов на meta-test классах без выбора модели.
"""

import json
import logging
import signal
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import torch
from torch.utils.data import DataLoader

from core.config_manager import ConfigManager
from core.errors import ClassLeak, CoSegError, DivergenceDetected, FrozenEncoderViolation, TooFewRuns
from core.metrics import ConfusionAccumulator, aggregate_runs, fold_report
from core.registry_manager import RegistryManager
from core.scheduler import TrainingSchedule
from episodes.folds import FoldSpec, get_fold
from episodes.loader import EpisodeBatch, EpisodeDataset, collate_episodes
from episodes.manifest import DatasetManifest
from episodes.sampler import EpisodeSampler
from network.checkpoint import save_checkpoint
from network.segmenter import FewShotSegmenter, ModelConfig, build_model, segmentation_loss
from network.semantics import EmbeddingProvider, build_provider
from notification.telegram_bot import TrainingNotifier

logger = logging.getLogger(__name__)


@dataclass
class RunRecord:
    run_id: str
    seed: int
    fold: int
    mode: str
    variant: str
    interaction: str
    k: int
    status: str = 'running'
    losses: List[float] = field(default_factory=list)
    learning_rates: List[float] = field(default_factory=list)
    steps: int = 0
    final_metrics: Optional[Dict[str, Any]] = None
    checkpoint: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def set_determinism(seed: int, deterministic: bool = True) -> None:
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.backends.cudnn.benchmark = False


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')
    return path


class MetaTrainer:
    """Движок мета-обучения: обучение, оценка и серии запусков по сидам"""

    def __init__(self, config: ConfigManager, manifest: DatasetManifest,
                 provider: Optional[EmbeddingProvider] = None,
                 notifier: Optional[TrainingNotifier] = None,
                 run_dir: Optional[Union[str, Path]] = None):
        self.config = config
        self.manifest = manifest
        self.provider = provider or build_provider(config.get_semantics_params(), manifest.root)
        self.notifier = notifier or TrainingNotifier(config)
        self.run_dir = Path(run_dir) if run_dir else None
        self.registry = RegistryManager(config, self.run_dir) if self.run_dir else None

        self.training = config.get_training_params()
        self.evaluation = config.get_evaluation_params()
        self.episodes = config.get_episode_params()
        self.deterministic = bool(config.get('common', 'deterministic', True))
        self._previous_handlers: Dict[int, Any] = {}

        logger.info("Инициализирован движок мета-обучения")

    # -- конфигурация ------------------------------------------------------

    def fold_spec(self, fold_id: Optional[int] = None) -> FoldSpec:
        fold_id = self.episodes.get('fold', 0) if fold_id is None else fold_id
        return get_fold(self.manifest.canonical_classes(), int(fold_id),
                        int(self.episodes['n_folds']), int(self.episodes['per_fold']))

    def model_config(self) -> ModelConfig:
        return ModelConfig.from_params(self.config.get_model_params(), self.provider.dim)

    def run_id(self, seed: int, fold: int) -> str:
        model = self.config.get_model_params()
        return f"fold{fold}-seed{seed}-{model['variant']}-{model['interaction']}"

    def _sampler(self, fold: FoldSpec, split: str, seed: int) -> EpisodeSampler:
        return EpisodeSampler(
            self.manifest, fold, split, self.episodes.get('mode', 'static'),
            int(self.training['k']), int(self.training['l']), seed
        )

    def _loader(self, dataset: EpisodeDataset, batch_size: int, workers: int) -> DataLoader:
        return DataLoader(
            dataset, batch_size=batch_size, shuffle=False, num_workers=workers,
            collate_fn=collate_episodes, drop_last=False
        )

    # -- сигналы -----------------------------------------------------------

    def _handle_interrupt(self, signum, frame):
        """Обработка прерывания"""
        logger.warning(f"Получен сигнал прерывания {signum}")
        raise KeyboardInterrupt

    def _install_signal_handlers(self) -> None:
        if threading.current_thread() is not threading.main_thread():
            return
        for signum in (signal.SIGINT, signal.SIGTERM):
            self._previous_handlers[signum] = signal.signal(signum, self._handle_interrupt)

    def _restore_signal_handlers(self) -> None:
        for signum, handler in self._previous_handlers.items():
            signal.signal(signum, handler)
        self._previous_handlers = {}

    # -- обучение ----------------------------------------------------------

    @staticmethod
    def check_batch(batch: EpisodeBatch, fold: FoldSpec) -> None:
        leaked = sorted(set(batch.labels) - set(fold.train_classes))
        if leaked:
            raise ClassLeak(f"meta-test classes {leaked} in a training batch of fold {fold.fold_id}")

    @staticmethod
    def train_step(model: FewShotSegmenter, schedule: TrainingSchedule, batch: EpisodeBatch) -> float:
        """One SGD step on a batch; returns the loss before the update."""
        seg = model(batch.support_images, batch.query_images, batch.embeddings)
        loss = segmentation_loss(seg.logits, batch.query_masks)
        value = float(loss.detach())
        if not np.isfinite(value):
            return value
        schedule.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        schedule.optimizer.step()
        return value

    @staticmethod
    def check_encoder(model: FewShotSegmenter, before: Dict[str, torch.Tensor]) -> None:
        after = model.encoder.state_dict()
        changed = [name for name, value in before.items() if not torch.equal(value, after[name])]
        if changed:
            raise FrozenEncoderViolation(f"encoder tensors changed during training: {changed[:5]}")

    def meta_train(self, model: FewShotSegmenter, fold: FoldSpec, seed: int,
                   run_id: Optional[str] = None) -> RunRecord:
        """Обучить модель на meta-train классах фолда"""
        cfg = model.cfg
        record = RunRecord(
            run_id or self.run_id(seed, fold.fold_id), seed, fold.fold_id,
            self.episodes.get('mode', 'static'), cfg.variant, cfg.interaction, int(self.training['k'])
        )
        set_determinism(seed, self.deterministic)

        schedule = TrainingSchedule(model.trainable_parameters(), self.training)
        plan = schedule.plan
        dataset = EpisodeDataset(
            self._sampler(fold, 'meta-train', seed), self.provider, int(self.training['train_size']),
            plan.total_tasks, augment=bool(self.training.get('augment', True))
        )
        loader = self._loader(dataset, plan.batch_size, int(self.training.get('workers', 0)))
        strict = bool(self.training.get('strict', False))
        encoder_before = model.encoder_state()

        self.notifier.send_run_started(record.run_id, {
            'variant': cfg.variant, 'interaction': cfg.interaction, 'fold': fold.fold_id,
            'mode': record.mode, 'k': record.k, 'seed': seed
        })
        logger.info(f"Начало мета-обучения {record.run_id}", extra={
            'epochs': plan.max_epochs, 'steps_per_epoch': plan.steps_per_epoch, 'tasks': plan.total_tasks
        })

        start_time = datetime.now()
        model.train()
        self._install_signal_handlers()
        try:
            epoch_losses: List[float] = []
            for step, batch in enumerate(loader, 1):
                self.check_batch(batch, fold)
                value = self.train_step(model, schedule, batch)
                if not np.isfinite(value):
                    record.status = 'diverged'
                    record.steps = step
                    raise DivergenceDetected(
                        f"loss became {value} at epoch {schedule.epoch}, step {step}", record
                    )
                epoch_losses.append(value)

                if step % plan.steps_per_epoch == 0:
                    record.losses.append(float(np.mean(epoch_losses)))
                    record.learning_rates.append(schedule.current_lr)
                    logger.info(f"Эпоха {schedule.epoch}/{plan.max_epochs}", extra={
                        'loss': record.losses[-1], 'lr': schedule.current_lr
                    })
                    epoch_losses = []
                    if strict:
                        self.check_encoder(model, encoder_before)
                    schedule.end_epoch()
                record.steps = step

        except KeyboardInterrupt:
            record.status = 'interrupted'
            self.notifier.send_run_failed(record.run_id, "Обучение прервано сигналом", 130)
            raise
        except DivergenceDetected as e:
            self.notifier.send_run_failed(record.run_id, str(e), e.exit_code)
            self._save_record(record)
            raise
        finally:
            self._restore_signal_handlers()
            model.eval()

        self.check_encoder(model, encoder_before)
        record.status = 'completed'

        if self.run_dir:
            target = self._seed_dir(seed, fold.fold_id) / 'checkpoint.pt'
            save_checkpoint(model, target, {'run_id': record.run_id, 'seed': seed, 'fold': fold.fold_id})
            record.checkpoint = str(target.relative_to(self.run_dir))
        self._save_record(record)

        duration = str(datetime.now() - start_time).split('.')[0]
        self.notifier.send_run_completed(record.run_id, record.losses[-1] if record.losses else float('nan'), duration)
        logger.info(f"Мета-обучение {record.run_id} завершено за {duration}")
        return record

    # -- оценка ------------------------------------------------------------

    def meta_test(self, model: FewShotSegmenter, fold: FoldSpec, seed: int,
                  tasks: Optional[int] = None, workers: Optional[int] = None) -> Dict[str, Any]:
        """Оценить модель на meta-test классах фолда"""
        tasks = int(tasks or self.evaluation['eval_tasks'])
        workers = int(self.evaluation.get('workers', 0) if workers is None else workers)
        dataset = EpisodeDataset(
            self._sampler(fold, 'meta-test', seed), self.provider,
            int(self.evaluation['test_size']), tasks, augment=False
        )
        loader = self._loader(dataset, int(self.training['batch_size']), workers)

        acc = ConfusionAccumulator()
        model.eval()
        with torch.no_grad():
            for batch in loader:
                pred = model(batch.support_images, batch.query_images, batch.embeddings).prediction()
                for i, label in enumerate(batch.labels):
                    acc.accumulate(pred[i], batch.query_masks[i], label)

        report = fold_report(acc, fold.test_classes)
        result = {
            'fold': fold.fold_id,
            'mode': self.episodes.get('mode', 'static'),
            'k': int(self.training['k']),
            'seed': seed,
            'tasks': tasks,
            'classes': list(fold.test_classes),
            'counts': acc.to_dict(),
            **report,
        }
        logger.info(f"Мета-тест фолда {fold.fold_id}: mIoU={report['miou']:.4f} bIoU={report['biou']:.4f}",
                    extra={'episodes': report['episodes']})
        return result

    # -- серии запусков ----------------------------------------------------

    def _seed_dir(self, seed: int, fold: int) -> Path:
        return self.run_dir / f"seed_{seed}" / f"fold_{fold}"

    def _save_record(self, record: RunRecord) -> None:
        if self.run_dir:
            write_json(self._seed_dir(record.seed, record.fold) / 'record.json', record.to_dict())

    def run_seed(self, seed: int, fold: FoldSpec, evaluate: bool = True) -> RunRecord:
        model = build_model(self.model_config(), seed)
        record = self.meta_train(model, fold, seed)
        if evaluate:
            metrics = self.meta_test(model, fold, seed)
            record.final_metrics = metrics
            self.notifier.send_evaluation_completed(record.run_id, metrics['miou'], metrics['biou'],
                                                    metrics['episodes'])
            if self.run_dir:
                metrics_path = write_json(self._seed_dir(seed, fold.fold_id) / 'metrics.json', metrics)
                self._save_record(record)
                self.registry.add_run(
                    record.run_id, seed, fold.fold_id, record.mode, record.variant, record.interaction,
                    record.k, metrics['miou'], metrics['biou'], record.checkpoint or "",
                    str(metrics_path.relative_to(self.run_dir))
                )
        elif self.registry:
            self.registry.add_run(record.run_id, seed, fold.fold_id, record.mode, record.variant,
                                  record.interaction, record.k, checkpoint=record.checkpoint or "")
        return record

    def multi_seed(self, seeds: Sequence[int], fold: Optional[FoldSpec] = None,
                   allow_partial: bool = False, evaluate: bool = True) -> Dict[str, Any]:
        """Запустить обучение и оценку для каждого сида и агрегировать результаты"""
        if not seeds:
            raise ValueError("seed list is empty")
        fold = fold or self.fold_spec()

        records: List[RunRecord] = []
        failures: List[Dict[str, Any]] = []
        for seed in seeds:
            try:
                records.append(self.run_seed(int(seed), fold, evaluate))
            except CoSegError as e:
                if not allow_partial:
                    raise
                logger.error(f"Запуск с сидом {seed} завершился ошибкой: {e}")
                failures.append({'seed': int(seed), 'error': type(e).__name__, 'exit_code': e.exit_code})

        results = [r.final_metrics for r in records if r.final_metrics]
        report = build_report(results) if results else {}
        report['runs'] = [
            {'seed': r.seed, 'fold': r.fold, 'status': r.status, 'losses': r.losses, 'run_id': r.run_id}
            for r in records
        ]
        report['failures'] = failures
        if self.run_dir:
            write_json(self.run_dir / 'report.json', report)
        return report


def _summary(values: List[float]) -> Dict[str, Any]:
    try:
        mean, ci95 = aggregate_runs(values)
    except TooFewRuns:
        mean, ci95 = (float(values[0]) if values else None), None
    return {'values': values, 'mean': mean, 'ci95': ci95}


def build_report(results: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    """Aggregate per-run metrics documents into the results report.

    Per fold: run values, mean and ci95 of mIoU and bIoU, class IoUs averaged
    over runs. Overall: per run, the mean over folds, then mean and ci95 over
    runs present in every fold.
    """
    by_fold: Dict[int, List[Dict[str, Any]]] = {}
    for result in sorted(results, key=lambda r: (r['fold'], r['seed'])):
        by_fold.setdefault(int(result['fold']), []).append(result)

    folds = {}
    for fold_id, runs in sorted(by_fold.items()):
        classes = sorted({c for r in runs for c in r['class_iou']})
        folds[str(fold_id)] = {
            'seeds': [r['seed'] for r in runs],
            'class_iou': {c: float(np.mean([r['class_iou'][c] for r in runs if c in r['class_iou']]))
                          for c in classes},
            'miou': _summary([float(r['miou']) for r in runs]),
            'biou': _summary([float(r['biou']) for r in runs]),
        }

    # runs are paired across folds by position in seed order
    n_complete = min((len(runs) for runs in by_fold.values()), default=0)
    first = next(iter(by_fold.values()), [])
    overall: Dict[str, List[float]] = {'miou': [], 'biou': []}
    for i in range(n_complete):
        for key in overall:
            overall[key].append(float(np.mean([runs[i][key] for runs in by_fold.values()])))

    return {
        'folds': folds,
        'seeds': [r['seed'] for r in first[:n_complete]],
        'miou': _summary(overall['miou']),
        'biou': _summary(overall['biou']),
    }


def collect_results(run_dir: Union[str, Path]) -> List[Dict[str, Any]]:
    """All metrics.json documents under a run directory."""
    results = []
    for path in sorted(Path(run_dir).glob('seed_*/fold_*/metrics.json')):
        with open(path, 'r', encoding='utf-8') as f:
            results.append(json.load(f))
    return results
