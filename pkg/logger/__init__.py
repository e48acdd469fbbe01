from .logger import BASE_LOGGER_NAME, HtmlLogArchive, Logger, SUPPORTED_LOG_LEVELS

__all__ = ["BASE_LOGGER_NAME", "HtmlLogArchive", "Logger", "SUPPORTED_LOG_LEVELS"]
