import sys
import logging

from . import (util, settings, tensor, metrics, execmodel, ecr, pecr,
               pipeline, dataset)
from .conf import conf

__all__ = ('conf', 'init', 'quit')

_handler = None


class _Formatter (logging.Formatter):
    # 'warning: message', like the rest of our stderr output
    def format (self, record):
        record.levelname_lower = record.levelname.lower()
        return logging.Formatter.format(self, record)


def init (level=None):
    """Initialise the engine: install the stderr log handler.

init([level])

:arg level: log level name (``'debug'``, ``'info'``, ``'warning'``...);
            defaults to ``'debug'`` if :data:`conf.DEBUG` is set, else
            :data:`conf.LOG_LEVEL`.

Calling this again replaces the handler.

"""
    global _handler
    if level is None:
        level = 'debug' if conf.DEBUG else conf.LOG_LEVEL
    root = logging.getLogger('ecrconv')
    if _handler is not None:
        root.removeHandler(_handler)
    _handler = logging.StreamHandler(sys.stderr)
    _handler.setFormatter(_Formatter('%(levelname_lower)s: %(message)s'))
    root.addHandler(_handler)
    root.setLevel(getattr(logging, str(level).upper(), logging.WARNING))


def quit ():
    """Uninitialise the engine: remove the log handler."""
    global _handler
    if _handler is not None:
        logging.getLogger('ecrconv').removeHandler(_handler)
        _handler.flush()
        _handler = None
