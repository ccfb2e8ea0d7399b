"""Settings handling.

Provides :class:`DummySettingsManager` and :class:`SettingsManager` (reads
overrides from a JSON file and the environment).

"""

import os
import json
import logging

log = logging.getLogger(__name__)


class DummySettingsManager (object):
    """An object for handling settings.

DummySettingsManager(settings, filter_caps=False)

:arg settings,filter_caps: as taken by :meth:`add`.

To access and change settings, use attributes of this object.  To restore a
setting to its default (initial) value, delete it.  To add a new setting, just
set it to a value (or use :meth:`add`).  Note that a setting may not begin with
'_'.

"""

    def __init__ (self, settings, filter_caps=False):
        self._settings = {}
        self._defaults = {}
        self.add(settings, filter_caps)

    def add (self, settings, filter_caps=False):
        """Add more settings.

:arg settings: a dict used to store the settings, or a class with settings as
               attributes.
:arg filter_caps: if ``True``, ignore all settings whose names are not entirely
                  upper-case.

The values given here become the defaults restored by deleting a setting.

"""
        if isinstance(settings, type):
            settings = dict((k, v) for k, v in vars(settings).items()
                                   if not k.startswith('_'))
        for k, v in settings.items():
            if not filter_caps or k.isupper():
                if k.startswith('_'):
                    raise ValueError('invalid setting name: \'{0}\''.format(k))
                self._defaults[k] = v
                setattr(self, k, self._override(k, v))

    def _override (self, k, v):
        return v

    def __getattr__ (self, k):
        try:
            return self._settings[k]
        except KeyError:
            raise AttributeError('no such setting: \'{0}\''.format(k))

    def __setattr__ (self, k, v):
        if k[0] == '_':
            object.__setattr__(self, k, v)
        else:
            self._settings[k] = v

    def __delattr__ (self, k):
        setattr(self, k, self._defaults[k])

    def __contains__ (self, k):
        return k in self._settings

    def items (self):
        """``(name, value)`` pairs for all settings, sorted by name."""
        return sorted(self._settings.items())


class SettingsManager (DummySettingsManager):
    """An object for handling settings, with external overrides.

SettingsManager(settings, fn, env_prefix, filter_caps=False)

:arg fn: JSON file containing a ``{setting: value}`` object.  A missing file is
         ignored; an invalid one is ignored with a warning.
:arg env_prefix: environment variables named ``env_prefix + setting`` override
                 both the defaults and the file.  Their values are parsed as
                 JSON where possible, else used as strings.

Other arguments are as taken by :class:`DummySettingsManager`.  Overrides are
applied whenever settings are added, so settings added later (by an
application package) can be overridden the same way.

"""

    def __init__ (self, settings, fn, env_prefix, filter_caps=False):
        self._fn = fn
        self._env_prefix = env_prefix
        self._file_settings = self._load(fn)
        DummySettingsManager.__init__(self, settings, filter_caps)

    @staticmethod
    def _load (fn):
        try:
            with open(fn) as f:
                loaded = json.load(f)
        except (IOError, OSError):
            return {}
        except ValueError:
            log.warning('invalid JSON: \'%s\'', fn)
            return {}
        if not isinstance(loaded, dict):
            log.warning('expected a JSON object: \'%s\'', fn)
            return {}
        return loaded

    def _override (self, k, v):
        if k in self._file_settings:
            v = self._file_settings[k]
        raw = os.environ.get(self._env_prefix + k)
        if raw is not None:
            try:
                v = json.loads(raw)
            except ValueError:
                v = raw
            log.debug('setting %s from environment: %r', k, v)
        return v

    def reload (self):
        """Re-read the file and environment, resetting every setting to its
default plus overrides."""
        self._file_settings = self._load(self._fn)
        for k, v in self._defaults.items():
            setattr(self, k, self._override(k, v))
