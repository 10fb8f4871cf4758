import csv
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

logger = logging.getLogger(__name__)

FIELDS = [
    'timestamp', 'run_id', 'seed', 'fold', 'mode', 'variant',
    'interaction', 'k', 'miou', 'biou', 'checkpoint', 'metrics_path'
]


class RegistryManager:
    """Менеджер реестра запусков обучения и оценки"""

    def __init__(self, config, root: Optional[Union[str, Path]] = None):
        self.config = config
        registry = Path(config.get('common', 'registry_csv', 'runs.csv'))
        self.registry_file = Path(root) / registry if root is not None and not registry.is_absolute() else registry
        self.stats_file = self.registry_file.with_suffix('.json')
        self._ensure_registry_exists()
        self._load_stats()

    def _ensure_registry_exists(self):
        """Убедиться, что файл реестра существует"""
        if not self.registry_file.exists():
            self.registry_file.parent.mkdir(parents=True, exist_ok=True)
            with open(self.registry_file, 'w', newline='') as f:
                writer = csv.writer(f, delimiter=';')
                writer.writerow(FIELDS)
            logger.info(f"Создан новый реестр: {self.registry_file}")

    def _load_stats(self):
        """Загрузить статистику"""
        self.stats = {}
        if self.stats_file.exists():
            try:
                with open(self.stats_file, 'r') as f:
                    self.stats = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                logger.warning(f"Статистика реестра повреждена, создается заново: {e}")

    def _save_stats(self):
        """Сохранить статистику"""
        with open(self.stats_file, 'w') as f:
            json.dump(self.stats, f, indent=2, sort_keys=True)

    def add_run(self, run_id: str, seed: int, fold: int, mode: str, variant: str,
                interaction: str, k: int, miou: Optional[float] = None, biou: Optional[float] = None,
                checkpoint: str = "", metrics_path: str = "") -> None:
        """Добавить запись о запуске в реестр"""
        timestamp = datetime.now().isoformat()

        with open(self.registry_file, 'a', newline='') as f:
            writer = csv.writer(f, delimiter=';')
            writer.writerow([
                timestamp, run_id, seed, fold, mode, variant, interaction, k,
                '' if miou is None else f"{miou:.6f}",
                '' if biou is None else f"{biou:.6f}",
                checkpoint, metrics_path
            ])

        self.stats['total_runs'] = self.stats.get('total_runs', 0) + 1
        self.stats['last_run'] = timestamp
        self.stats['last_run_id'] = run_id
        if miou is not None:
            self.stats['best_miou'] = max(self.stats.get('best_miou', 0.0), miou)

        self._save_stats()
        logger.info(f"Добавлен запуск в реестр: {run_id}")

    def list_runs(self) -> List[Dict[str, str]]:
        """Получить список всех запусков"""
        if not self.registry_file.exists():
            return []

        with open(self.registry_file, 'r', newline='') as f:
            return list(csv.DictReader(f, delimiter=';'))

    def get_run_stats(self) -> Dict[str, Any]:
        """Получить статистику запусков"""
        runs = self.list_runs()
        scored = [float(r['miou']) for r in runs if r['miou']]

        return {
            'total_runs': len(runs),
            'oldest_run': min(runs, key=lambda x: x['timestamp'])['timestamp'] if runs else None,
            'newest_run': max(runs, key=lambda x: x['timestamp'])['timestamp'] if runs else None,
            'unique_runs': len(set(r['run_id'] for r in runs)),
            'best_miou': max(scored) if scored else None,
        }
