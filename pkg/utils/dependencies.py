import importlib
import logging
import sys
from typing import Any, Dict

logger = logging.getLogger(__name__)


class DependencyChecker:
    """Проверка Python зависимостей"""

    DEPENDENCIES = {
        'torch': 'torch',
        'numpy': 'numpy',
        'PIL': 'Pillow',
        'yaml': 'PyYAML',
    }

    OPTIONAL_DEPENDENCIES = {
        'torchvision': 'torchvision',
        'telegram': 'python-telegram-bot',
        'pytest': 'pytest',
        'hypothesis': 'hypothesis',
    }

    @staticmethod
    def _module_version(module_name: str) -> str:
        """Получить версию модуля или пустую строку, если модуль не установлен"""
        try:
            module = importlib.import_module(module_name)
        except ImportError:
            return ""
        return str(getattr(module, '__version__', 'unknown'))

    @staticmethod
    def report() -> Dict[str, Any]:
        """Собрать состояние окружения в словарь"""
        required = {name: DependencyChecker._module_version(name) for name in DependencyChecker.DEPENDENCIES}
        optional = {name: DependencyChecker._module_version(name) for name in DependencyChecker.OPTIONAL_DEPENDENCIES}

        cuda = False
        if required['torch']:
            import torch
            cuda = bool(torch.cuda.is_available())

        return {
            'python': sys.version.split()[0],
            'required': required,
            'optional': optional,
            'cuda': cuda,
            'ok': all(required.values()),
        }

    @staticmethod
    def check_all() -> bool:
        """Проверить все зависимости и вывести сводку в stderr"""
        status = DependencyChecker.report()
        out = sys.stderr

        print("\n🔍 Проверка зависимостей:", file=out)
        print("-" * 40, file=out)
        print(f"🐍 Python {status['python']}", file=out)

        print("📦 Обязательные модули:", file=out)
        for name, version in status['required'].items():
            if version:
                print(f"  ✅ {name} {version}", file=out)
            else:
                print(f"  ❌ {name} - ТРЕБУЕТСЯ УСТАНОВКА ({DependencyChecker.DEPENDENCIES[name]})", file=out)

        print("\n📦 Опциональные модули:", file=out)
        for name, version in status['optional'].items():
            if version:
                print(f"  ✅ {name} {version}", file=out)
            else:
                print(f"  ⚠️  {name} - опциональный модуль отсутствует", file=out)

        print(f"\n💻 CUDA: {'доступна' if status['cuda'] else 'недоступна, обучение на CPU'}", file=out)
        print("\n" + "=" * 40, file=out)

        if status['ok']:
            print("✅ Все обязательные зависимости удовлетворены", file=out)
        else:
            missing = [DependencyChecker.DEPENDENCIES[n] for n, v in status['required'].items() if not v]
            print("❌ Отсутствуют обязательные зависимости", file=out)
            print(f"\n💡 Выполните: pip install {' '.join(missing)}", file=out)

        return status['ok']

