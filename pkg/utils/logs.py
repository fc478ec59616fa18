import functools
import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = "WARNING") -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.WARNING), format=LOG_FORMAT)


def logged(func):
    """Log entry/exit of a function at DEBUG level on its module logger."""
    logger = logging.getLogger(func.__module__)

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        logger.debug("calling %s", func.__name__)
        result = func(*args, **kwargs)
        logger.debug("finished %s", func.__name__)
        return result

    return wrapper
