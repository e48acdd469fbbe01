import sys
import logging
from typing import Dict, Optional

from ansi2html import Ansi2HTMLConverter
from colorlog import ColoredFormatter

SUPPORTED_LOG_LEVELS = [
    "DEBUG",
    "INFO",
    "SUCCESS",
    "NOTE",
    "WARNING",
    "ERROR",
    "CRITICAL",
]

BASE_LOGGER_NAME = "neuralgarch"

LOG_COLORS = {
    "DEBUG": "cyan",
    "INFO": "white",
    "SUCCESS": "green",
    "NOTE": "blue",
    "WARNING": "yellow",
    "ERROR": "red",
    "CRITICAL": "red,bg_white",
}


def _colored_formatter() -> ColoredFormatter:
    return ColoredFormatter(
        "%(log_color)s%(asctime)s | %(levelname)s - %(name)s : %(message)s",
        datefmt=None,
        reset=True,
        log_colors=LOG_COLORS,
        secondary_log_colors={},
        style="%",
    )


class HtmlLogArchive(logging.Handler):
    """Logging handler that archives colored log records as an HTML page.

    Records are formatted with the same colorlog format as the console and
    converted with ansi2html, so the archive looks like the terminal did.
    """

    def __init__(self, path: str):
        super().__init__()
        self.path = path
        self.converter = Ansi2HTMLConverter(inline=True)
        self.setFormatter(_colored_formatter())
        self._lines = []

    def emit(self, record):
        try:
            self._lines.append(self.converter.convert(self.format(record), full=False))
        except Exception:
            self.handleError(record)

    def flush(self):
        body = "<br/>\n".join(self._lines)
        page = self.converter.convert("", full=True).replace(
            "</pre>", body + "\n</pre>", 1
        )
        with open(self.path, "w", encoding="utf-8") as f:
            f.write(page)

    def close(self):
        self.flush()
        super().close()


class Logger:
    _loggers: Dict[str, logging.Logger] = {}  # Loggers by component name
    SUCCESS_LEVEL_NUM = 25
    NOTE_LEVEL_NUM = 26

    @classmethod
    def _base_logger(cls) -> logging.Logger:
        base = logging.getLogger(BASE_LOGGER_NAME)
        if not base.handlers:
            logging.addLevelName(cls.SUCCESS_LEVEL_NUM, "SUCCESS")
            logging.addLevelName(cls.NOTE_LEVEL_NUM, "NOTE")
            console_handler = logging.StreamHandler(sys.stderr)
            console_handler.setFormatter(_colored_formatter())
            base.addHandler(console_handler)
            base.setLevel(logging.DEBUG)
        return base

    def _configure_logger(self, log_level: str, component: str) -> logging.Logger:
        """Creates (or re-levels) the logger for one component."""
        if log_level not in SUPPORTED_LOG_LEVELS:
            print(
                f"⚠️ WARNING: Invalid LOG_LEVEL '{log_level}', falling back to 'INFO'.",
                file=sys.stderr,
            )
            log_level = "INFO"

        self._base_logger()
        logger = self._loggers.get(component)
        if logger is None:
            logger = logging.getLogger(f"{BASE_LOGGER_NAME}.{component}")
            self._loggers[component] = logger
        logger.setLevel(log_level)
        return logger

    def __init__(self, log_level: str = "INFO", component: Optional[str] = None):
        self.logger = self._configure_logger(log_level, component or "main")

    @classmethod
    def attach_handler(cls, handler: logging.Handler):
        """Route every component's records to an extra handler."""
        cls._base_logger().addHandler(handler)

    @classmethod
    def detach_handler(cls, handler: logging.Handler):
        cls._base_logger().removeHandler(handler)
        handler.close()

    @classmethod
    def set_global_level(cls, log_level: str):
        """Re-level every component logger created so far."""
        for component in list(cls._loggers):
            Logger(log_level, component)

    def debug(self, message, *args, **kwargs):
        self.logger.debug(message, *args, **kwargs)

    def info(self, message, *args, **kwargs):
        self.logger.info(message, *args, **kwargs)

    def success(self, message, *args, **kwargs):
        if self.logger.isEnabledFor(Logger.SUCCESS_LEVEL_NUM):
            self.logger._log(Logger.SUCCESS_LEVEL_NUM, message, args, **kwargs)

    def note(self, message, *args, **kwargs):
        if self.logger.isEnabledFor(Logger.NOTE_LEVEL_NUM):
            self.logger._log(Logger.NOTE_LEVEL_NUM, message, args, **kwargs)

    def warning(self, message, *args, **kwargs):
        self.logger.warning(message, *args, **kwargs)

    def error(self, message, *args, **kwargs):
        kwargs.setdefault("exc_info", sys.exc_info()[0] is not None)
        self.logger.error(message, *args, **kwargs)

    def critical(self, message, *args, **kwargs):
        kwargs.setdefault("exc_info", sys.exc_info()[0] is not None)
        self.logger.critical(message, *args, **kwargs)

    def get_level_name(self) -> str:
        return logging.getLevelName(self.logger.level)
