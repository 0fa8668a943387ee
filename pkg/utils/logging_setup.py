import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logger(debug=False, logfile=None):
    """Configure root logging once for the CLI"""
    level = logging.DEBUG if debug else logging.INFO
    handlers = [logging.StreamHandler()]
    if logfile:
        handlers.append(logging.FileHandler(logfile))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)
    logging.getLogger(__name__).debug("Logger initialized. Debug=%s", debug)
