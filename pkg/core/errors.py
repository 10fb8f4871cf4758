"""
Иерархия исключений CoSeg.

Каждое исключение несет код выхода CLI: 1 - ошибка пользователя,
2 - ошибка ввода/вывода, 3 - численный сбой.
"""

from typing import Any, Optional

EXIT_USER = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


class CoSegError(Exception):
    """Базовое исключение системы"""

    exit_code = EXIT_USER


class ConfigError(CoSegError, ValueError):
    """Некорректная конфигурация"""


class UnknownLabel(CoSegError, KeyError):
    """Метка класса отсутствует в словаре эмбеддингов"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown label"


class DimensionMismatch(CoSegError, ValueError):
    """Размерность эмбеддинга не совпадает с параметрами проекции"""


class ShapeMismatch(CoSegError, ValueError):
    """Несовместимые формы тензоров"""


class NonFiniteValue(CoSegError, ValueError):
    """Во входных данных есть NaN или Inf"""


class EmptySupport(CoSegError, ValueError):
    """Пустой support set (k = 0)"""


class InvalidImage(CoSegError, ValueError):
    """Изображение с неверным числом каналов"""


class BadPartition(CoSegError, ValueError):
    """Классы не делятся на фолды без остатка"""


class InsufficientData(CoSegError, ValueError):
    """Недостаточно изображений или последовательностей для эпизода"""


class UnknownClass(CoSegError, ValueError):
    """Класс отсутствует в манифесте"""


class EmptyClass(CoSegError, ValueError):
    """Для класса не накоплено ни одного эпизода"""


class EmptyUnion(CoSegError, ValueError):
    """Объединение масок пусто, IoU не определен"""


class TooFewRuns(CoSegError, ValueError):
    """Для доверительного интервала нужно минимум два запуска"""


class ClassLeak(CoSegError):
    """Класс meta-test попал в обучающий батч"""


class ManifestError(CoSegError, OSError):
    """Файлы датасета отсутствуют или повреждены"""

    exit_code = EXIT_IO


class CheckpointError(CoSegError, OSError):
    """Чекпоинт не читается или не совпадает с конфигурацией"""

    exit_code = EXIT_IO


class DivergenceDetected(CoSegError, ArithmeticError):
    """Loss стал NaN/Inf во время мета-обучения"""

    exit_code = EXIT_NUMERIC

    def __init__(self, message: str, record: Optional[Any] = None):
        super().__init__(message)
        self.record = record


class FrozenEncoderViolation(CoSegError, RuntimeError):
    """Веса энкодера изменились во время обучения"""

    exit_code = EXIT_NUMERIC
