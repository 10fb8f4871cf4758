#!/usr/bin/env python3
"""
CoSeg - few-shot сегментация с условием на слово-эмбеддинг класса
Единая точка входа: синтетические данные, эпизоды, обучение, оценка, карты внимания
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

BASE_DIR = Path(__file__).parent
sys.path.insert(0, str(BASE_DIR))

from core import __version__
from core.config_manager import EPISODE_MODES, INTERACTIONS, PRESETS, VARIANTS, ConfigManager
from core.errors import EXIT_IO, EXIT_USER, ConfigError, CoSegError

logger = logging.getLogger('coseg')

EXIT_INTERRUPTED = 130


class UsageError(Exception):
    """Некорректные аргументы командной строки"""


class CliParser(argparse.ArgumentParser):
    """argparse с кодом выхода 1 для ошибок аргументов"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _emit(payload: Dict[str, Any], as_json: bool) -> None:
    if as_json:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + '\n')


def _say(text: str) -> None:
    print(text, file=sys.stderr)


class CoSegSystem:
    """Главный класс системы: конфигурация и диспетчеризация команд"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.json_output = bool(args.json)
        self.seed = int(args.seed) if args.seed is not None else 0

        self.config = ConfigManager(args.config, preset=getattr(args, 'preset', None))
        self.config.apply_overrides(args.set or [])
        self._apply_flags(args)
        self.config.setup_logging()

        errors = self.config.validate()
        if errors:
            raise ConfigError("; ".join(errors))

        logger.debug(f"Конфигурация: {self.config.config_path or 'встроенная'}")

    def _apply_flags(self, args: argparse.Namespace) -> None:
        """Перенести выделенные флаги CLI в конфигурацию"""
        mapping = {
            'fold': ('episodes', 'fold'),
            'mode': ('episodes', 'mode'),
            'variant': ('model', 'variant'),
            'interaction': ('model', 'interaction'),
            'k': ('training', 'k'),
            'l': ('training', 'l'),
            'tasks': ('evaluation', 'eval_tasks'),
        }
        for attr, (section, key) in mapping.items():
            value = getattr(args, attr, None)
            if value is not None:
                self.config.update(section, key, value)
        workers = getattr(args, 'workers', None)
        if workers is not None:
            self.config.update('training', 'workers', workers)
            self.config.update('evaluation', 'workers', workers)

    # -- общие помощники ---------------------------------------------------

    def _manifest(self, root: str):
        from episodes.manifest import DatasetManifest
        return DatasetManifest.load(root)

    def _fold(self, manifest):
        from episodes.folds import get_fold
        episodes = self.config.get_episode_params()
        return get_fold(manifest.canonical_classes(), int(episodes['fold']),
                        int(episodes['n_folds']), int(episodes['per_fold']))

    def _provider(self, manifest):
        from network.semantics import build_provider
        return build_provider(self.config.get_semantics_params(), manifest.root)

    # -- команды -----------------------------------------------------------

    def synth(self) -> int:
        """Сгенерировать синтетический датасет фигур"""
        from episodes.synth import SynthParams, synth_shapes

        args = self.args
        params = SynthParams(
            n_classes=args.classes, images_per_class=args.images_per_class, canvas=args.canvas,
            distractors=args.distractors, video=args.video, sequences_per_class=args.sequences_per_class,
            frames=args.frames, seed=self.seed
        )
        manifest = synth_shapes(args.out, params)
        _say(f"✅ Датасет создан: {args.out} ({len(manifest.images)} изображений, "
             f"{len(manifest.classes)} классов)")
        _emit({
            'root': str(args.out),
            'classes': manifest.classes,
            'images': len(manifest.images),
            'sequences': len(manifest.sequences),
        }, self.json_output)
        return 0

    def dump_episodes(self) -> int:
        """Выгрузить эпизоды в виде изображений и index.jsonl"""
        from episodes.loader import dump_episodes
        from episodes.sampler import EpisodeSampler

        args = self.args
        manifest = self._manifest(args.root)
        training = self.config.get_training_params()
        sampler = EpisodeSampler(manifest, self._fold(manifest), args.split,
                                 self.config.get('episodes', 'mode'),
                                 int(training['k']), int(training['l']), self.seed)
        index = dump_episodes(sampler, args.out, args.count)
        _say(f"✅ Выгружено эпизодов: {args.count} -> {index}")
        _emit({'index': str(index), 'episodes': args.count, 'fold': sampler.fold.fold_id,
               'split': args.split, 'mode': sampler.mode}, self.json_output)
        return 0

    def train(self) -> int:
        """Мета-обучение по списку сидов, опционально с оценкой"""
        from core.trainer import MetaTrainer

        args = self.args
        seeds = self._seeds()
        run_dir = Path(args.out)
        run_dir.mkdir(parents=True, exist_ok=True)
        self.config.save(str(run_dir / 'config.yaml'))

        manifest = self._manifest(args.root)
        trainer = MetaTrainer(self.config, manifest, self._provider(manifest), run_dir=run_dir)
        fold = trainer.fold_spec()

        _say("=" * 60)
        _say(f"🚀 Мета-обучение: фолд {fold.fold_id}, сиды {seeds}")
        _say(f"📁 Данные: {args.root}")
        _say(f"📝 Запуск: {run_dir}")
        _say("=" * 60)

        report = trainer.multi_seed(seeds, fold, allow_partial=args.allow_partial, evaluate=args.evaluate)
        if report.get('miou'):
            miou = report['miou']
            ci = f" ± {miou['ci95'] * 100:.1f}" if miou.get('ci95') is not None else ""
            _say(f"✅ mIoU: {miou['mean'] * 100:.1f}{ci}")
        _emit(report, self.json_output)
        return 0 if not report.get('failures') else EXIT_USER

    def _seeds(self) -> List[int]:
        if self.args.seeds:
            try:
                return [int(s) for s in self.args.seeds.split(',') if s.strip()]
            except ValueError:
                raise ConfigError(f"Некорректный список сидов: {self.args.seeds}")
        if self.args.seed is not None:
            return [self.seed]
        return [int(s) for s in self.config.get('evaluation', 'seeds')]

    def evaluate(self) -> int:
        """Мета-тестирование сохраненной модели"""
        from core.trainer import MetaTrainer, write_json
        from network.checkpoint import load_checkpoint

        args = self.args
        model, _ = load_checkpoint(args.checkpoint)
        manifest = self._manifest(args.root)
        trainer = MetaTrainer(self.config, manifest, self._provider(manifest))
        result = trainer.meta_test(model, trainer.fold_spec(), self.seed)
        if args.out:
            write_json(Path(args.out), result)
        _say(f"✅ mIoU: {result['miou'] * 100:.1f}  bIoU: {result['biou'] * 100:.1f} "
             f"({result['episodes']} эпизодов)")
        _emit(result, self.json_output)
        return 0

    def attention_maps(self) -> int:
        """Сохранить карты гейтов ко-внимания"""
        from episodes.sampler import EpisodeSampler
        from network.checkpoint import load_checkpoint
        from utils.attention_maps import export_attention_maps

        args = self.args
        model, _ = load_checkpoint(args.checkpoint)
        manifest = self._manifest(args.root)
        training = self.config.get_training_params()
        sampler = EpisodeSampler(manifest, self._fold(manifest), args.split,
                                 self.config.get('episodes', 'mode'),
                                 int(training['k']), int(training['l']), self.seed)
        paths = export_attention_maps(model, sampler, self._provider(manifest), args.out, args.count,
                                      int(self.config.get('evaluation', 'test_size')))
        _say(f"✅ Карт внимания: {len(paths)} -> {args.out}")
        _emit({'maps': len(paths), 'out': str(args.out)}, self.json_output)
        return 0

    def report(self) -> int:
        """Собрать отчет по всем запускам в директории"""
        from core.trainer import write_json, build_report, collect_results

        args = self.args
        results = collect_results(args.run_dir)
        if not results:
            raise ConfigError(f"В {args.run_dir} нет результатов оценки")
        report = build_report(results)
        target = Path(args.out) if args.out else Path(args.run_dir) / 'report.json'
        write_json(target, report)
        _say(f"📊 Отчет: {target} ({len(results)} результатов)")

        registry_file = Path(args.run_dir) / self.config.get('common', 'registry_csv', 'runs.csv')
        if registry_file.exists():
            from core.registry_manager import RegistryManager

            stats = RegistryManager(self.config, args.run_dir).get_run_stats()
            best = stats['best_miou']
            _say(f"🗂️  Реестр: {stats['total_runs']} запусков, лучший mIoU: "
                 f"{'-' if best is None else f'{best * 100:.1f}'}")
            report = {**report, 'registry': stats}
        _emit(report, self.json_output)
        return 0

    def check(self) -> int:
        """Проверить окружение и конфигурацию"""
        from utils.dependencies import DependencyChecker

        ok = DependencyChecker.check_all()
        status = DependencyChecker.report()
        status['config'] = str(self.config.config_path or 'builtin')
        status['version'] = __version__
        _emit(status, self.json_output)
        return 0 if ok else EXIT_USER


def build_parser() -> CliParser:
    parser = CliParser(
        prog='coseg',
        description="CoSeg - few-shot семантическая сегментация с ко-вниманием",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Примеры использования:
  %(prog)s synth --out data/shapes --classes 5
  %(prog)s dump-episodes --root data/shapes --out episodes --count 10
  %(prog)s train --root data/shapes --out runs/desk --preset desk --seeds 1,2,3 --evaluate
  %(prog)s eval --checkpoint runs/desk/seed_1/fold_0/checkpoint.pt --root data/shapes --preset desk
  %(prog)s attention-maps --checkpoint runs/desk/seed_1/fold_0/checkpoint.pt --root data/shapes --out maps
  %(prog)s report --run-dir runs/desk
  %(prog)s check
        """
    )
    parser.add_argument('--config', help='Путь к файлу конфигурации YAML')
    parser.add_argument('--json', action='store_true', help='Машиночитаемый вывод в stdout')
    parser.add_argument('--seed', type=int, help='Сид генератора случайных чисел')
    parser.add_argument('--set', action='append', metavar='SECTION.KEY=VALUE',
                        help='Переопределить значение конфигурации')
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")

    episode_opts = CliParser(add_help=False)
    episode_opts.add_argument('--preset', choices=sorted(PRESETS), help='Набор параметров (desk / full)')
    episode_opts.add_argument('--fold', type=int, help='Номер фолда')
    episode_opts.add_argument('--mode', choices=EPISODE_MODES, help='Режим эпизодов')
    episode_opts.add_argument('--k', type=int, help='Число support изображений')
    episode_opts.add_argument('--l', type=int, help='Число query изображений')

    model_opts = CliParser(add_help=False)
    model_opts.add_argument('--variant', choices=VARIANTS, help='Модальности: vs, v или s')
    model_opts.add_argument('--interaction', choices=INTERACTIONS, help='Взаимодействие: cond, coatt, scoatt')

    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    synth = commands.add_parser('synth', help='Сгенерировать синтетический датасет')
    synth.add_argument('--out', required=True, help='Директория датасета')
    synth.add_argument('--classes', type=int, default=5)
    synth.add_argument('--images-per-class', type=int, default=20)
    synth.add_argument('--canvas', type=int, default=64)
    synth.add_argument('--distractors', type=int, default=2)
    synth.add_argument('--video', action='store_true', help='Последовательности кадров')
    synth.add_argument('--sequences-per-class', type=int, default=4)
    synth.add_argument('--frames', type=int, default=8)

    dump = commands.add_parser('dump-episodes', parents=[episode_opts], help='Выгрузить эпизоды')
    dump.add_argument('--root', required=True, help='Корень датасета')
    dump.add_argument('--out', required=True, help='Директория для эпизодов')
    dump.add_argument('--split', choices=('meta-train', 'meta-test'), default='meta-test')
    dump.add_argument('--count', type=int, default=10)

    train = commands.add_parser('train', parents=[episode_opts, model_opts], help='Мета-обучение')
    train.add_argument('--root', required=True, help='Корень датасета')
    train.add_argument('--out', required=True, help='Директория запуска')
    train.add_argument('--seeds', help='Список сидов через запятую')
    train.add_argument('--evaluate', action='store_true', help='Оценить после обучения')
    train.add_argument('--allow-partial', action='store_true', help='Продолжать при ошибке отдельного сида')
    train.add_argument('--workers', type=int, help='Процессы загрузки эпизодов')

    evaluate = commands.add_parser('eval', parents=[episode_opts], help='Мета-тестирование')
    evaluate.add_argument('--checkpoint', required=True)
    evaluate.add_argument('--root', required=True)
    evaluate.add_argument('--tasks', type=int, help='Число эпизодов')
    evaluate.add_argument('--out', help='Файл для метрик JSON')
    evaluate.add_argument('--workers', type=int)

    maps = commands.add_parser('attention-maps', parents=[episode_opts], help='Карты гейтов ко-внимания')
    maps.add_argument('--checkpoint', required=True)
    maps.add_argument('--root', required=True)
    maps.add_argument('--out', required=True)
    maps.add_argument('--split', choices=('meta-train', 'meta-test'), default='meta-test')
    maps.add_argument('--count', type=int, default=4)

    report = commands.add_parser('report', help='Отчет по директории запуска')
    report.add_argument('--run-dir', required=True)
    report.add_argument('--out')

    commands.add_parser('check', help='Проверить окружение')
    return parser


COMMANDS = {
    'synth': CoSegSystem.synth,
    'dump-episodes': CoSegSystem.dump_episodes,
    'train': CoSegSystem.train,
    'eval': CoSegSystem.evaluate,
    'attention-maps': CoSegSystem.attention_maps,
    'report': CoSegSystem.report,
    'check': CoSegSystem.check,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Разобрать аргументы, выполнить команду и вернуть код выхода"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USER
    except SystemExit as e:
        # --help и --version
        return int(e.code or 0)

    try:
        system = CoSegSystem(args)
        return COMMANDS[args.command](system)
    except CoSegError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f"Ошибка ввода/вывода: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        print("\n⚠️  Операция прервана пользователем", file=sys.stderr)
        return EXIT_INTERRUPTED
    except Exception as e:
        logger.exception(f"Критическая ошибка: {e}")
        print(f"❌ Критическая ошибка: {e}", file=sys.stderr)
        return EXIT_USER


def main():
    """Точка входа"""
    sys.exit(run())


if __name__ == "__main__":
    main()
