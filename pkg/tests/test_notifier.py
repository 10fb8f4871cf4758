from core.config_manager import ConfigManager
from notification.telegram_bot import TrainingNotifier


class FakeBot:
    def __init__(self, fail=False):
        self.sent = []
        self.fail = fail

    def send_message(self, **kwargs):
        if self.fail:
            raise ConnectionError("network is down")
        self.sent.append(kwargs)


class AsyncBot(FakeBot):
    async def _deliver(self, kwargs):
        self.sent.append(kwargs)

    def send_message(self, **kwargs):
        return self._deliver(kwargs)


def _enabled(bot, level='INFO'):
    config = ConfigManager()
    config.update('telegram', 'notification_level', level)
    notifier = TrainingNotifier(config)
    notifier.enabled = True
    notifier.bot = bot
    notifier.chat_id = '42'
    return notifier


def test_disabled_by_default():
    notifier = TrainingNotifier(ConfigManager())
    assert notifier.bot is None
    assert not notifier.send_message("hello")
    assert not notifier.send_run_failed('run', 'boom', 3)


def test_messages_are_sent():
    bot = FakeBot()
    notifier = _enabled(bot)
    assert notifier.send_run_started('fold0-seed1', {'variant': 'vs', 'fold': 0, 'seed': 1})
    assert notifier.send_evaluation_completed('fold0-seed1', 0.5, 0.7, 100)
    assert len(bot.sent) == 2
    assert bot.sent[0]['chat_id'] == '42'
    assert '`fold0-seed1`' in bot.sent[0]['text']
    assert '50.0' in bot.sent[1]['text']


def test_level_filter():
    bot = FakeBot()
    notifier = _enabled(bot, level='ERROR')
    assert not notifier.send_run_completed('run', 0.1, '0:00:05')
    assert notifier.send_run_failed('run', 'loss became nan', 3)
    assert bot.sent[0]['text'].startswith('❌')


def test_toggles_suppress_messages():
    bot = FakeBot()
    notifier = _enabled(bot)
    notifier.notify_run_started = False
    assert not notifier.send_run_started('run', {})
    assert bot.sent == []


def test_failures_are_swallowed():
    notifier = _enabled(FakeBot(fail=True))
    assert not notifier.send_run_completed('run', 0.1)


def test_coroutine_api_is_awaited():
    bot = AsyncBot()
    notifier = _enabled(bot)
    assert notifier.send_message("ping")
    assert bot.sent[0]['text'].endswith("ping")
