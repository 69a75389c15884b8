import logging
import os
import sys
from datetime import datetime

_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _default_logs_dir():
    return os.environ.get(
        'VIA_LOG_DIR',
        os.path.join(os.path.dirname(os.path.dirname(__file__)), 'logs')
    )


def get_logger(name, level=None):
    """
    Configure and return a logger with the given name.

    Args:
        name: Logger name, typically __name__ from the calling module
        level: Logging level (defaults to VIA_LOG_LEVEL or INFO)

    Returns:
        logging.Logger: Configured logger
    """
    logger = logging.getLogger(name)
    if level is None:
        level = os.environ.get('VIA_LOG_LEVEL', 'INFO').upper()
    logger.setLevel(level)

    # Handlers are attached once per logger name
    if logger.handlers:
        return logger

    formatter = logging.Formatter(_FORMAT)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # Create file handler if logs directory exists or can be created
    logs_dir = _default_logs_dir()
    if not os.path.exists(logs_dir):
        try:
            os.makedirs(logs_dir)
        except Exception:
            pass

    if os.path.isdir(logs_dir) and os.access(logs_dir, os.W_OK):
        log_file = os.path.join(
            logs_dir,
            f"{datetime.now().strftime('%Y-%m-%d')}.log"
        )
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger
