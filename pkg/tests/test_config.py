import json
import logging

import pytest
import yaml

from core.config_manager import DEFAULT_CONFIG, ConfigManager, JsonLinesFormatter
from core.errors import ConfigError


@pytest.fixture(autouse=True)
def _isolated_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def test_builtin_defaults():
    config = ConfigManager()
    assert config.config_path is None
    assert config.get('training', 'lr_decay_epochs') == [35, 40, 45]
    assert config.get('training', 'train_tasks') == 12000
    assert config.get('model', 'interaction') == 'scoatt'
    assert config.get('model', 'missing', 'fallback') == 'fallback'
    assert config.validate() == []


def test_desk_preset_keeps_unrelated_defaults():
    config = ConfigManager(preset='desk')
    assert config.get('episodes', 'n_folds') == 5
    assert config.get('model', 'encoder') == 'tiny'
    assert config.get('training', 'k') == 1
    assert config.get('training', 'momentum') == 0.9


def test_unknown_preset():
    with pytest.raises(ConfigError):
        ConfigManager(preset='huge')


def test_overrides_are_parsed_as_yaml():
    config = ConfigManager()
    config.apply_overrides(['training.lr=0.05', 'model.aspp_rates=[1, 2]', 'training.augment=no',
                            'episodes.mode=tosfl-category'])
    assert config.get('training', 'lr') == 0.05
    assert config.get('model', 'aspp_rates') == [1, 2]
    assert config.get('training', 'augment') is False
    assert config.get('episodes', 'mode') == 'tosfl-category'


@pytest.mark.parametrize("assignment", ["lr=0.1", "training.lr", "=3"])
def test_malformed_override(assignment):
    with pytest.raises(ConfigError):
        ConfigManager().apply_overrides([assignment])


@pytest.mark.parametrize("section,key,value", [
    ('model', 'variant', 'xyz'),
    ('model', 'interaction', 'dense'),
    ('model', 'stack_depth', 0),
    ('training', 'lr', -1.0),
    ('training', 'k', 0),
    ('training', 'lr_decay_epochs', [40, 35]),
    ('evaluation', 'seeds', []),
    ('episodes', 'mode', 'panoptic'),
    ('common', 'log_level', 'LOUD'),
])
def test_validate_reports_errors(section, key, value):
    config = ConfigManager()
    config.update(section, key, value)
    assert len(config.validate()) == 1


def test_enabled_telegram_needs_credentials():
    config = ConfigManager()
    config.update('telegram', 'enabled', True)
    assert len(config.validate()) == 2


def test_file_layered_over_defaults(tmp_path):
    path = tmp_path / 'custom.yaml'
    path.write_text(yaml.safe_dump({'preset': 'desk', 'training': {'max_epochs': 7}}))
    config = ConfigManager(str(path))
    assert config.get('training', 'max_epochs') == 7
    assert config.get('training', 'train_tasks') == 300
    assert config.get('training', 'lr') == 0.01


def test_cwd_file_is_found(tmp_path):
    (tmp_path / 'coseg.yaml').write_text("training:\n  k: 5\n")
    config = ConfigManager()
    assert config.config_path == (tmp_path / 'coseg.yaml').resolve()
    assert config.get('training', 'k') == 5


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        ConfigManager(str(tmp_path / 'absent.yaml'))
    broken = tmp_path / 'broken.yaml'
    broken.write_text("training: [unclosed\n")
    with pytest.raises(ConfigError):
        ConfigManager(str(broken))
    listing = tmp_path / 'list.yaml'
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        ConfigManager(str(listing))


def test_save_and_reload(tmp_path):
    config = ConfigManager(preset='desk')
    config.update('model', 'stack_depth', 3)
    target = config.save(str(tmp_path / 'run' / 'config.yaml'))
    reloaded = ConfigManager(str(target))
    assert reloaded.to_dict() == config.to_dict()


def test_write_default(tmp_path):
    target = ConfigManager.write_default(str(tmp_path / 'coseg.yaml'))
    assert yaml.safe_load(target.read_text()) == DEFAULT_CONFIG


def test_json_formatter_keeps_extras():
    record = logging.LogRecord('coseg.trainer', logging.INFO, __file__, 1, "epoch %d", (3,), None)
    record.loss = 0.25
    payload = json.loads(JsonLinesFormatter().format(record))
    assert payload['msg'] == "epoch 3"
    assert payload['level'] == 'INFO'
    assert payload['logger'] == 'coseg.trainer'
    assert payload['loss'] == 0.25
    assert 'args' not in payload


def test_setup_logging_replaces_handlers(tmp_path):
    config = ConfigManager()
    config.update('logging', 'file', str(tmp_path / 'coseg.log'))
    config.setup_logging()
    config.setup_logging()
    assert len(ConfigManager._log_handlers) == 2
    logging.getLogger('coseg.test').info("hello", extra={'fold': 1})
    for handler in ConfigManager._log_handlers:
        handler.flush()
    line = (tmp_path / 'coseg.log').read_text().splitlines()[-1]
    assert json.loads(line)['fold'] == 1
