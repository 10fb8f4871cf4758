import logging

import pytest

from core.config_manager import ConfigManager
from episodes.synth import SynthParams, synth_shapes
from network.segmenter import ModelConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _quiet_logs():
    logging.getLogger().setLevel(logging.WARNING)
    yield
    for handler in ConfigManager._log_handlers:
        logging.getLogger().removeHandler(handler)
    ConfigManager._log_handlers = []


@pytest.fixture
def tiny_model_config():
    return ModelConfig(
        embedding_dim=8, feature_channels=8, semantic_dim=4, decoder_channels=8,
        stack_depth=2, iom_iterations=2, aspp_rates=[1, 2],
    )


@pytest.fixture(scope="session")
def shapes_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("shapes")
    synth_shapes(root, SynthParams(n_classes=5, images_per_class=8, canvas=32, embedding_dim=8, seed=3))
    return root


@pytest.fixture(scope="session")
def video_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("video")
    synth_shapes(root, SynthParams(n_classes=5, video=True, sequences_per_class=3, frames=4,
                                   canvas=32, embedding_dim=8, seed=5))
    return root


@pytest.fixture
def make_config(tmp_path):
    """Desk config with a tiny model and small schedule; extra overrides merge on top."""
    def factory(**sections):
        overrides = {
            'common': {'run_dir': str(tmp_path / 'runs')},
            'model': {'feature_channels': 8, 'semantic_dim': 4, 'decoder_channels': 8,
                      'iom_iterations': 2, 'aspp_rates': [1, 2]},
            'training': {'train_tasks': 8, 'max_epochs': 2, 'batch_size': 2, 'train_size': 32,
                         'lr_decay_epochs': [], 'augment': False},
            'evaluation': {'eval_tasks': 4, 'test_size': 32, 'seeds': [1]},
        }
        for section, values in sections.items():
            overrides.setdefault(section, {}).update(values)
        return ConfigManager(None, preset='desk', overrides=overrides)
    return factory
