import copy
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import yaml

from core.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG: Dict[str, Any] = {
    'common': {
        'log_level': 'INFO',
        'run_dir': './runs',
        'registry_csv': 'runs.csv',
        'deterministic': True,
    },
    'logging': {
        'format': 'json',
        'file': None,
        'max_size': '100M',
        'backup_count': 5,
        'date_format': '%Y-%m-%d %H:%M:%S',
    },
    'semantics': {
        'source': 'auto',
        'path': None,
        'dim': 300,
        'fallback': False,
        'seed': 0,
    },
    'model': {
        'variant': 'vs',
        'interaction': 'scoatt',
        'encoder': 'tiny',
        'encoder_weights': None,
        'encoder_tap': 'layer3',
        'feature_channels': 256,
        'semantic_dim': 256,
        'stack_depth': 2,
        'share_weights': False,
        'share_gate': True,
        'projection_relu': False,
        'decoder_channels': 256,
        'iom_iterations': 3,
        'aspp_rates': [6, 12, 18],
    },
    'training': {
        'lr': 0.01,
        'momentum': 0.9,
        'weight_decay': 5e-4,
        'lr_decay_epochs': [35, 40, 45],
        'lr_decay_factor': 0.1,
        'batch_size': 4,
        'max_epochs': 50,
        'train_tasks': 12000,
        'train_size': 321,
        'k': 1,
        'l': 1,
        'augment': True,
        'strict': False,
        'workers': 0,
    },
    'evaluation': {
        'eval_tasks': 5000,
        'test_size': 500,
        'seeds': [1, 2, 3, 4, 5],
        'workers': 0,
    },
    'episodes': {
        'mode': 'static',
        'fold': 0,
        'n_folds': 4,
        'per_fold': 5,
    },
    'telegram': {
        'enabled': False,
        'token': 'YOUR_BOT_TOKEN_HERE',
        'chat_id': 'YOUR_CHAT_ID_HERE',
        'notification_level': 'INFO',
        'run_started': True,
        'run_completed': True,
        'run_failed': True,
        'evaluation_completed': True,
    },
}

# Desk preset: tiny encoder, short schedule, synthetic 5-class folds.
PRESETS: Dict[str, Dict[str, Any]] = {
    'full': {},
    'desk': {
        'model': {
            'encoder': 'tiny',
            'feature_channels': 64,
            'semantic_dim': 64,
            'decoder_channels': 64,
            'aspp_rates': [2, 4, 6],
        },
        'training': {
            'train_tasks': 300,
            'max_epochs': 3,
            'lr_decay_epochs': [],
            'train_size': 64,
        },
        'evaluation': {
            'eval_tasks': 200,
            'test_size': 64,
        },
        'episodes': {
            'n_folds': 5,
            'per_fold': 1,
        },
    },
}

VARIANTS = ('vs', 'v', 's')
INTERACTIONS = ('cond', 'coatt', 'scoatt')
ENCODERS = ('tiny', 'resnet50')
EPISODE_MODES = ('static', 'tosfl-instance', 'tosfl-category')
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')

# Поля LogRecord, которые не попадают в JSON как extras
_RESERVED_RECORD_FIELDS = set(vars(logging.LogRecord('', 0, '', 0, '', (), None))) | {'message', 'asctime'}


class JsonLinesFormatter(logging.Formatter):
    """Форматтер логов: одна JSON-строка на запись"""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            'ts': self.formatTime(record, self.datefmt),
            'level': record.levelname,
            'logger': record.name,
            'msg': record.getMessage(),
        }
        for key, value in record.__dict__.items():
            if key not in _RESERVED_RECORD_FIELDS and not key.startswith('_'):
                payload[key] = value
        if record.exc_info:
            payload['exc'] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False, default=str)


def _deep_merge(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in (extra or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class ConfigManager:
    """Менеджер конфигурации с поддержкой YAML"""

    _log_handlers: List[logging.Handler] = []

    def __init__(self, config_path: Optional[str] = None, preset: Optional[str] = None,
                 overrides: Optional[Dict[str, Any]] = None, setup_logging: bool = False):
        self.config_path = self._resolve_config_path(config_path)
        self.config = self._load_config()
        if preset:
            self.apply_preset(preset)
        if overrides:
            self.config = _deep_merge(self.config, overrides)
        if setup_logging:
            self._setup_logging()

    def _resolve_config_path(self, config_path: Optional[str]) -> Optional[Path]:
        """Определить путь к конфигурационному файлу"""
        if config_path:
            path = Path(config_path)
            if not path.exists():
                raise ConfigError(f"Файл конфигурации не найден: {path}")
            return path.resolve()

        search_paths = [
            Path.cwd() / "coseg.yaml",
            Path.cwd() / "coseg.yml",
            Path.home() / ".config" / "coseg" / "coseg.yaml",
            Path("/etc") / "coseg" / "coseg.yaml",
        ]
        for path in search_paths:
            if path.exists():
                return path.resolve()

        # Без файла работаем на встроенных значениях по умолчанию
        return None

    def _load_config(self) -> Dict[str, Any]:
        """Загрузить конфигурацию из YAML файла поверх значений по умолчанию"""
        if self.config_path is None:
            return copy.deepcopy(DEFAULT_CONFIG)

        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                loaded = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Ошибка синтаксиса YAML: {e}")
        except OSError as e:
            raise ConfigError(f"Ошибка загрузки конфигурации: {e}")

        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("Корень конфигурации должен быть словарем")

        config = _deep_merge(DEFAULT_CONFIG, loaded)
        preset = loaded.get('preset')
        if preset:
            config = _deep_merge(config, PRESETS.get(preset, {}))
            config = _deep_merge(config, loaded)
        return config

    def _setup_logging(self) -> None:
        """Настроить логирование на основе конфигурации"""
        log_config = self.get_section('logging')
        log_level = getattr(logging, str(self.get('common', 'log_level', 'INFO')).upper(), logging.INFO)
        date_format = log_config.get('date_format', '%Y-%m-%d %H:%M:%S')

        if log_config.get('format', 'json') == 'json':
            formatter: logging.Formatter = JsonLinesFormatter(datefmt=date_format)
        else:
            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                datefmt=date_format
            )

        root = logging.getLogger()
        for handler in ConfigManager._log_handlers:
            root.removeHandler(handler)
        ConfigManager._log_handlers = []

        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setFormatter(formatter)
        handlers: List[logging.Handler] = [stream_handler]

        # Файловый обработчик
        log_file = log_config.get('file')
        if log_file:
            try:
                from logging.handlers import RotatingFileHandler

                file_handler = RotatingFileHandler(
                    log_file,
                    maxBytes=self._parse_size(log_config.get('max_size', '100M')),
                    backupCount=log_config.get('backup_count', 5)
                )
                file_handler.setFormatter(formatter)
                handlers.append(file_handler)
            except OSError as e:
                logger.error(f"Ошибка настройки файлового логирования: {e}")

        for handler in handlers:
            handler.setLevel(log_level)
            root.addHandler(handler)
        root.setLevel(log_level)
        ConfigManager._log_handlers = handlers

    def setup_logging(self) -> None:
        """Переустановить обработчики логов после изменения конфигурации"""
        self._setup_logging()

    @staticmethod
    def _parse_size(size_str: str) -> int:
        """Преобразовать строку размера в байты"""
        size_str = str(size_str).strip().upper()

        multipliers = {
            'K': 1024,
            'M': 1024 * 1024,
            'G': 1024 * 1024 * 1024,
        }

        if size_str[-1] in multipliers:
            return int(float(size_str[:-1]) * multipliers[size_str[-1]])
        return int(size_str)

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """Получить значение из конфигурации"""
        keys = [section] + key.split('.')
        value: Any = self.config

        for k in keys:
            if isinstance(value, dict):
                value = value.get(k)
            else:
                return default

        return value if value is not None else default

    def get_section(self, section: str) -> Dict[str, Any]:
        """Получить всю секцию конфигурации"""
        return copy.deepcopy(self.config.get(section, {}))

    def update(self, section: str, key: str, value: Any) -> None:
        """Обновить значение в конфигурации"""
        keys = [section] + key.split('.')
        config = self.config

        for k in keys[:-1]:
            if k not in config or not isinstance(config[k], dict):
                config[k] = {}
            config = config[k]

        config[keys[-1]] = value

    def apply_preset(self, name: str) -> None:
        """Наложить именованный пресет (desk / full)"""
        if name not in PRESETS:
            raise ConfigError(f"Неизвестный пресет: {name}. Доступны: {', '.join(PRESETS)}")
        self.config = _deep_merge(self.config, PRESETS[name])
        self.config['preset'] = name
        logger.debug(f"Применен пресет {name}")

    def apply_overrides(self, assignments: Iterable[str]) -> None:
        """Применить переопределения вида section.key=value"""
        for assignment in assignments:
            if '=' not in assignment or '.' not in assignment.split('=', 1)[0]:
                raise ConfigError(f"Ожидается section.key=value, получено: {assignment}")
            dotted, raw = assignment.split('=', 1)
            section, key = dotted.split('.', 1)
            try:
                value = yaml.safe_load(raw)
            except yaml.YAMLError:
                value = raw
            self.update(section, key, value)

    def get_semantics_params(self) -> Dict[str, Any]:
        """Получить параметры источника эмбеддингов"""
        return self.get_section('semantics')

    def get_model_params(self) -> Dict[str, Any]:
        """Получить параметры модели"""
        return self.get_section('model')

    def get_training_params(self) -> Dict[str, Any]:
        """Получить параметры мета-обучения"""
        return self.get_section('training')

    def get_evaluation_params(self) -> Dict[str, Any]:
        """Получить параметры мета-тестирования"""
        return self.get_section('evaluation')

    def get_episode_params(self) -> Dict[str, Any]:
        """Получить параметры эпизодов"""
        return self.get_section('episodes')

    def get_telegram_enabled(self) -> bool:
        """Проверить, включены ли уведомления Telegram"""
        return bool(self.get('telegram', 'enabled', False))

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.config)

    def save(self, path: Optional[str] = None) -> Path:
        """Сохранить конфигурацию в файл"""
        target = Path(path) if path else self.config_path
        if target is None:
            raise ConfigError("Не указан путь для сохранения конфигурации")
        target.parent.mkdir(parents=True, exist_ok=True)

        with open(target, 'w', encoding='utf-8') as f:
            yaml.safe_dump(self.config, f, default_flow_style=False, allow_unicode=True, indent=2, sort_keys=True)

        logger.info(f"Конфигурация сохранена в {target}")
        return target

    @staticmethod
    def write_default(path: str) -> Path:
        """Создать файл конфигурации по умолчанию"""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, 'w', encoding='utf-8') as f:
            yaml.safe_dump(DEFAULT_CONFIG, f, default_flow_style=False, allow_unicode=True, indent=2)
        return target

    def validate(self) -> List[str]:
        """Проверить валидность конфигурации"""
        errors = []

        model = self.get_section('model')
        if model.get('variant') not in VARIANTS:
            errors.append(f"Неизвестный вариант модели: {model.get('variant')}")
        if model.get('interaction') not in INTERACTIONS:
            errors.append(f"Неизвестный тип взаимодействия: {model.get('interaction')}")
        if model.get('encoder') not in ENCODERS:
            errors.append(f"Неизвестный энкодер: {model.get('encoder')}")
        for key in ('feature_channels', 'semantic_dim', 'stack_depth', 'decoder_channels', 'iom_iterations'):
            value = model.get(key)
            if not isinstance(value, int) or value < 1:
                errors.append(f"model.{key} должно быть целым >= 1: {value}")

        training = self.get_section('training')
        for key in ('lr', 'momentum', 'weight_decay', 'lr_decay_factor'):
            value = training.get(key)
            if not isinstance(value, (int, float)) or value < 0:
                errors.append(f"training.{key} должно быть неотрицательным: {value}")
        for key in ('batch_size', 'max_epochs', 'train_tasks', 'train_size', 'k', 'l'):
            value = training.get(key)
            if not isinstance(value, int) or value < 1:
                errors.append(f"training.{key} должно быть целым >= 1: {value}")

        decay = training.get('lr_decay_epochs') or []
        if any(not isinstance(e, int) or e < 1 for e in decay):
            errors.append(f"training.lr_decay_epochs должны быть положительными: {decay}")
        elif any(b <= a for a, b in zip(decay, decay[1:])):
            errors.append(f"training.lr_decay_epochs должны строго возрастать: {decay}")

        evaluation = self.get_section('evaluation')
        for key in ('eval_tasks', 'test_size'):
            value = evaluation.get(key)
            if not isinstance(value, int) or value < 1:
                errors.append(f"evaluation.{key} должно быть целым >= 1: {value}")
        if not evaluation.get('seeds'):
            errors.append("evaluation.seeds не может быть пустым")

        if self.get('episodes', 'mode') not in EPISODE_MODES:
            errors.append(f"Неизвестный режим эпизодов: {self.get('episodes', 'mode')}")

        log_level = str(self.get('common', 'log_level', 'INFO')).upper()
        if log_level not in LOG_LEVELS:
            errors.append(f"Некорректный уровень логирования: {log_level}")
        if self.get('logging', 'format', 'json') not in ('json', 'text'):
            errors.append(f"Некорректный формат логов: {self.get('logging', 'format')}")

        # Проверка Telegram настроек если включен
        if self.get_telegram_enabled():
            token = self.get('telegram', 'token')
            chat_id = self.get('telegram', 'chat_id')
            if not token or token == 'YOUR_BOT_TOKEN_HERE':
                errors.append("Telegram token не настроен")
            if not chat_id or chat_id == 'YOUR_CHAT_ID_HERE':
                errors.append("Telegram chat_id не настроен")

        return errors
