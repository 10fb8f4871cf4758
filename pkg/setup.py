#!/usr/bin/env python3
"""
Setup script for CoSeg
"""

import subprocess
import sys
from pathlib import Path

from setuptools import find_packages, setup

STANDARD_COMMANDS = {'build', 'build_py', 'build_ext', 'sdist', 'bdist_wheel', 'install', 'develop', 'egg_info', 'dist_info', 'editable_wheel'}


def get_version():
    """Get version from package"""
    try:
        with open('core/__init__.py', 'r') as f:
            for line in f:
                if line.startswith('__version__'):
                    return line.split('=')[1].strip().strip('"\'')
    except OSError:
        pass
    return "1.0.0"


def read_requirements():
    lines = Path('requirements.txt').read_text(encoding='utf-8').splitlines()
    return [line.split('#')[0].strip() for line in lines if line.split('#')[0].strip()]


def check_dependencies():
    """Check installed dependencies"""
    print("🔍 Проверка зависимостей...")

    from utils.dependencies import DependencyChecker
    return DependencyChecker.check_all()


def install_python_deps():
    """Install Python dependencies"""
    print("📦 Установка Python зависимостей...")

    result = subprocess.run([
        sys.executable, "-m", "pip", "install",
        "-r", "requirements.txt"
    ], capture_output=True, text=True)

    if result.returncode == 0:
        print("✅ Python зависимости установлены")
        return True

    print("❌ Ошибка установки зависимостей:")
    print(result.stderr)
    return False


def create_default_config():
    """Create default configuration"""
    config_path = Path("coseg.yaml")

    if config_path.exists():
        print(f"📝 Конфигурация уже существует: {config_path}")
        return

    print("📝 Создание конфигурации по умолчанию...")
    from core.config_manager import ConfigManager
    ConfigManager.write_default(str(config_path))
    print(f"✅ Конфигурация создана: {config_path}")


def show_help():
    """Show help message"""
    print("""
CoSeg - Установка
=================

Использование:
  python3 setup.py [опции]

Опции:
  --deps         Установить зависимости из requirements.txt
  --help         Показать эту справку

Стандартные команды setuptools (install, develop, sdist, bdist_wheel)
передаются в setuptools без изменений.
""")


def package_setup():
    setup(
        name='coseg',
        version=get_version(),
        description='Few-shot semantic segmentation with stacked semantic co-attention',
        packages=find_packages(exclude=('tests', 'tests.*', 'examples', 'examples.*')),
        py_modules=['coseg'],
        install_requires=read_requirements(),
        python_requires='>=3.8',
        entry_points={'console_scripts': ['coseg=coseg:main']},
    )


def main():
    """Main setup function"""
    args = sys.argv[1:]
    if any(arg in STANDARD_COMMANDS for arg in args):
        package_setup()
        return

    if "--help" in args:
        show_help()
        return

    print("=" * 60)
    print("       CoSeg - Установка")
    print("=" * 60)

    if sys.version_info < (3, 8):
        print("❌ Требуется Python 3.8 или выше")
        sys.exit(1)

    print(f"🐍 Python версия: {sys.version_info.major}.{sys.version_info.minor}")

    if "--deps" in args:
        print("\n" + "=" * 40)
        if not install_python_deps():
            sys.exit(1)

    print("\n" + "=" * 40)
    if not check_dependencies():
        print("\n⚠️  Не все обязательные зависимости установлены (python3 setup.py --deps)")
        sys.exit(1)

    print("\n" + "=" * 40)
    create_default_config()

    print("\n" + "=" * 60)
    print("✅ Установка завершена успешно!")
    print("=" * 60)
    print("""
📖 Следующие шаги:
  1. Сгенерируйте синтетический набор:
     python3 coseg.py synth --out data/shapes
  2. Обучите модель на одном фолде:
     python3 coseg.py train --root data/shapes --out runs/desk --preset desk --fold 0 --seeds 1 --evaluate
  3. Соберите отчет:
     python3 coseg.py report --run-dir runs/desk
""")
    print("\n📚 Полная документация в README.md")


if __name__ == "__main__":
    main()
