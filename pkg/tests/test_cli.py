import json

import pytest

from coseg import run

TINY = [
    '--set', 'model.feature_channels=8', '--set', 'model.semantic_dim=4',
    '--set', 'model.decoder_channels=8', '--set', 'model.iom_iterations=2',
    '--set', 'model.aspp_rates=[1, 2]',
    '--set', 'training.train_tasks=8', '--set', 'training.max_epochs=2',
    '--set', 'training.batch_size=2', '--set', 'training.train_size=32',
    '--set', 'training.augment=false',
    '--set', 'evaluation.eval_tasks=4', '--set', 'evaluation.test_size=32',
]


@pytest.fixture(autouse=True)
def _isolated_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def dataset(tmp_path):
    root = tmp_path / 'shapes'
    code = run(['--seed', '2', 'synth', '--out', str(root), '--classes', '5',
                '--images-per-class', '8', '--canvas', '32'])
    assert code == 0
    return root


def test_help_and_usage_errors(capsys):
    assert run(['--help']) == 0
    assert run(['frobnicate']) == 1
    assert run(['train', '--root', 'x']) == 1
    assert run(['--set', 'model.variant=xyz', 'check']) == 1


def test_synth_and_dump(tmp_path, dataset, capsys):
    assert (dataset / 'embeddings.txt').exists()
    out = tmp_path / 'episodes'
    code = run(['--json', 'dump-episodes', '--preset', 'desk', '--root', str(dataset),
                '--out', str(out), '--count', '3', '--fold', '2'])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload['episodes'] == 3
    assert payload['fold'] == 2
    assert len((out / 'index.jsonl').read_text().splitlines()) == 3


def test_missing_dataset_is_io_error(tmp_path):
    assert run(['dump-episodes', '--root', str(tmp_path / 'nothing'), '--out', str(tmp_path / 'o')]) == 2


def test_train_eval_and_maps(tmp_path, dataset, capsys):
    out = tmp_path / 'run'
    code = run(TINY + ['--json', 'train', '--preset', 'desk', '--root', str(dataset), '--out', str(out),
                       '--seeds', '1', '--evaluate'])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report['seeds'] == [1]
    assert (out / 'config.yaml').exists()
    assert (out / 'seed_1' / 'fold_0' / 'metrics.json').exists()
    assert (out / 'runs.csv').exists()

    checkpoint = out / 'seed_1' / 'fold_0' / 'checkpoint.pt'
    metrics = tmp_path / 'eval.json'
    code = run(TINY + ['--seed', '3', 'eval', '--preset', 'desk', '--checkpoint', str(checkpoint),
                       '--root', str(dataset), '--out', str(metrics)])
    assert code == 0
    result = json.loads(metrics.read_text())
    assert result['episodes'] == 4
    assert result['seed'] == 3

    maps = tmp_path / 'maps'
    code = run(TINY + ['attention-maps', '--preset', 'desk', '--checkpoint', str(checkpoint),
                       '--root', str(dataset), '--out', str(maps), '--count', '2'])
    assert code == 0
    assert len(list(maps.glob('episode_*/query_*_gate.png'))) == 2

    capsys.readouterr()
    assert run(['--json', 'report', '--run-dir', str(out)]) == 0
    rebuilt = json.loads(capsys.readouterr().out)
    assert rebuilt['folds']['0']['miou']['values'] == report['folds']['0']['miou']['values']
    assert rebuilt['registry']['total_runs'] == 1
    assert rebuilt['registry']['best_miou'] == pytest.approx(report['miou']['mean'], abs=1e-6)
    assert 'registry' not in json.loads((out / 'report.json').read_text())


def test_same_seed_reports_are_identical(tmp_path, dataset):
    for name in ('a', 'b'):
        args = TINY + ['train', '--preset', 'desk', '--root', str(dataset), '--out', str(tmp_path / name),
                       '--seeds', '4', '--evaluate']
        assert run(args) == 0
    assert (tmp_path / 'a' / 'report.json').read_bytes() == (tmp_path / 'b' / 'report.json').read_bytes()


def test_eval_missing_checkpoint(tmp_path, dataset):
    code = run(TINY + ['eval', '--preset', 'desk', '--checkpoint', str(tmp_path / 'none.pt'),
                       '--root', str(dataset)])
    assert code == 2


def test_report_without_results(tmp_path):
    (tmp_path / 'empty').mkdir()
    assert run(['report', '--run-dir', str(tmp_path / 'empty')]) == 1
