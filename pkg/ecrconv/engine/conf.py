import os
from os.path import join as join_path, expanduser

from . import settings


def _conf_dir (ident):
    base = os.environ.get('XDG_CONFIG_HOME') or \
           join_path(expanduser('~'), '.config')
    return join_path(base, ident)


class Conf (object):

    IDENT = 'ecrconv'
    DEBUG = False
    LOG_LEVEL = 'warning'

    # paths
    CONF_DIR = _conf_dir(IDENT)
    CONF = os.environ.get('ECRCONV_CONF') or join_path(CONF_DIR, 'conf.json')
    ENV_PREFIX = 'ECRCONV_'

    # execution model
    WORKERS = 1
    SHARED_MEMORY_BUDGET = 49152 # bytes per block

    # element sizes, in bytes
    FLOAT_SIZE = 4
    INDEX_SIZE = 4

    # numeric agreement between methods
    TOLERANCE = 1e-5


conf = settings.SettingsManager(Conf, Conf.CONF, Conf.ENV_PREFIX,
                                filter_caps=True)
