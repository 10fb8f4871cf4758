import asyncio
import inspect
import logging
from datetime import datetime
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

LEVEL_PRIORITY = {
    'DEBUG': 10,
    'INFO': 20,
    'SUCCESS': 20,
    'WARNING': 30,
    'ERROR': 40,
    'CRITICAL': 50
}

LEVEL_PREFIX = {
    'ERROR': '❌',
    'WARNING': '⚠️ ',
    'INFO': 'ℹ️ ',
    'SUCCESS': '✅',
}


class TrainingNotifier:
    """Уведомления о запусках обучения через Telegram Bot API"""

    def __init__(self, config):
        self.config = config
        self.enabled = config.get_telegram_enabled()
        self.bot = None
        self.chat_id = None
        self.notification_level = str(config.get('telegram', 'notification_level', 'INFO')).upper()

        # Индивидуальные настройки уведомлений
        self.notify_run_started = config.get('telegram', 'run_started', True)
        self.notify_run_completed = config.get('telegram', 'run_completed', True)
        self.notify_run_failed = config.get('telegram', 'run_failed', True)
        self.notify_evaluation_completed = config.get('telegram', 'evaluation_completed', True)

        if not self.enabled:
            logger.debug("Telegram уведомления отключены в конфигурации")
            return

        token = config.get('telegram', 'token')
        self.chat_id = config.get('telegram', 'chat_id')
        if not token or not self.chat_id or token == 'YOUR_BOT_TOKEN_HERE':
            logger.warning("Telegram не настроен, уведомления отключены")
            return

        try:
            from telegram import Bot

            self.bot = Bot(token=token)
            logger.info("Telegram бот инициализирован")
        except Exception as e:
            logger.error(f"Ошибка инициализации Telegram бота: {e}")
            self.bot = None

    def _should_notify(self, level: str) -> bool:
        """Проверить, нужно ли отправлять уведомление данного уровня"""
        if not self.enabled or not self.bot:
            return False
        current_level = LEVEL_PRIORITY.get(level.upper(), 20)
        config_level = LEVEL_PRIORITY.get(self.notification_level, 20)
        return current_level >= config_level

    def send_message(self, text: str, level: str = "INFO", parse_mode: Optional[str] = "Markdown") -> bool:
        """Отправить сообщение в Telegram; сетевые ошибки только логируются"""
        if not self._should_notify(level):
            return False

        prefix = LEVEL_PREFIX.get(level.upper())
        if prefix:
            text = f"{prefix} {text}"

        try:
            result = self.bot.send_message(
                chat_id=self.chat_id,
                text=text,
                parse_mode=parse_mode,
                disable_notification=(level == "DEBUG")
            )
            # python-telegram-bot >= 20 возвращает корутину
            if inspect.isawaitable(result):
                asyncio.run(result)
            logger.info(f"Telegram сообщение отправлено ({level}): {text[:100]}")
            return True
        except Exception as e:
            logger.error(f"Ошибка отправки Telegram сообщения: {e}")
            return False

    def send_run_started(self, run_id: str, settings: Dict[str, Any]) -> bool:
        """Отправить уведомление о начале обучения"""
        if not self.notify_run_started:
            return False

        message = (
            f"🚀 *НАЧАЛО ОБУЧЕНИЯ*\n"
            f"📝 Запуск: `{run_id}`\n"
        )
        for key in ('variant', 'interaction', 'fold', 'mode', 'k', 'seed'):
            if key in settings:
                message += f"• {key}: `{settings[key]}`\n"
        message += f"⏰ Время: {self._get_current_time()}"
        return self.send_message(message, level="INFO")

    def send_run_completed(self, run_id: str, final_loss: float, duration: str = "") -> bool:
        """Отправить уведомление о завершении обучения"""
        if not self.notify_run_completed:
            return False

        message = (
            f"*ОБУЧЕНИЕ ЗАВЕРШЕНО*\n"
            f"📝 Запуск: `{run_id}`\n"
            f"📉 Итоговый loss: `{final_loss:.4f}`\n"
        )
        if duration:
            message += f"⏱️ Длительность: `{duration}`\n"
        message += f"⏰ Время: {self._get_current_time()}"
        return self.send_message(message, level="SUCCESS")

    def send_run_failed(self, run_id: str, error: str, exit_code: Optional[int] = None) -> bool:
        """Отправить уведомление об ошибке обучения"""
        if not self.notify_run_failed:
            return False

        message = (
            f"*ОШИБКА ОБУЧЕНИЯ*\n"
            f"📝 Запуск: `{run_id}`\n"
        )
        if exit_code:
            message += f"🔧 Код выхода: `{exit_code}`\n"
        message += f"💥 Ошибка: `{error[:200]}`\n"
        message += f"⏰ Время: {self._get_current_time()}"
        return self.send_message(message, level="ERROR")

    def send_evaluation_completed(self, run_id: str, miou: float, biou: float, episodes: int) -> bool:
        """Отправить результаты мета-тестирования"""
        if not self.notify_evaluation_completed:
            return False

        message = (
            f"📊 *ОЦЕНКА ЗАВЕРШЕНА*\n"
            f"📝 Запуск: `{run_id}`\n"
            f"🎯 mIoU: `{miou * 100:.1f}`\n"
            f"🎯 bIoU: `{biou * 100:.1f}`\n"
            f"🔢 Эпизодов: `{episodes}`\n"
            f"⏰ Время: {self._get_current_time()}"
        )
        return self.send_message(message, level="INFO")

    @staticmethod
    def _get_current_time() -> str:
        """Получить текущее время в формате строки"""
        return datetime.now().strftime("%Y-%m-%d %H:%M:%S")
