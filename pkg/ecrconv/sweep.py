"""Parameter sweeps: run every method over a list of problem points.

A sweep config is a JSON object::

    {
        "methods": ["dense", "ecr"],
        "points": [{"size": 14, "kernel": 3, "stride": 1, "sparsity": 0.9}],
        "grid": {"size": [6, 14], "sparsity": [0.5, 0.9], "pool": [null, {"w": 2}]}
    }

``points`` are taken as given, then ``grid`` adds the product of its value
lists.  Either may be missing; a bare JSON list is taken as ``points``.  A
point has ``size`` (or ``height`` and ``width``), and optionally
``channels``, ``kernel`` (a size, or ``[k_h, k_w]``), ``stride``,
``sparsity``, ``seed`` and ``pool`` (``{"w", "h", "stride", "mode"}``).

Each point's map comes from :func:`generate <engine.dataset.generate>` and its
filter from :func:`random_filter <engine.dataset.random_filter>`, both seeded
by the point, so a sweep always computes the same numbers.

"""

import json
import itertools
import logging

from .engine import conf
from .engine.tensor import (ConvConfig, PoolConfig, Dims, dense_conv,
                            im2col_conv, im2col_csr_conv, relu, pool,
                            sparsity)
from .engine.metrics import (OpCount, theta, traffic_separate, traffic_fused,
                             traffic_conv, traffic_im2col_csr)
from .engine.ecr import ecr_conv
from .engine.pecr import pecr_fused, pack_counts
from .engine.dataset import generate, random_filter
from .engine.pipeline import multichannel_conv_pool
from .engine.util import ConfigError, max_abs_diff, pair, require_positive
from .report import Timer

log = logging.getLogger(__name__)

#: Every method a sweep can run.
METHODS = ('dense', 'im2col', 'im2col-csr', 'ecr', 'pecr')
#: Order :func:`expand_grid` varies keys in, outermost first.
GRID_KEYS = ('size', 'height', 'width', 'channels', 'kernel', 'stride',
             'pool', 'sparsity', 'seed')
POINT_COLUMNS = ('point', 'height', 'width', 'channels', 'k_h', 'k_w',
                 'stride', 'sparsity', 'seed', 'pool_w', 'pool_h',
                 'pool_stride', 'pool_mode', 'theta')
TAIL_COLUMNS = ('transfer_floats_conv', 'transfer_floats_separate',
                'transfer_floats_fused', 'global_bytes_conv',
                'global_bytes_im2col_csr', 'max_abs_diff', 'agree', 'note')


class SweepPoint (object):
    """One problem of a sweep.

SweepPoint(height, width, channels=1, kernel=3, stride=1, sparsity=0.7,
           seed=0, pool=None)

:arg kernel: kernel size, or ``(k_h, k_w)``.
:arg pool: :class:`PoolConfig <engine.tensor.PoolConfig>` or ``None``.

"""

    def __init__ (self, height, width, channels=1, kernel=3, stride=1,
                  sparsity=0.7, seed=0, pool=None):
        require_positive(height=height, width=width, channels=channels)
        self.height = int(height)
        self.width = int(width)
        self.channels = int(channels)
        self.k_h, self.k_w = pair(kernel)
        self.conv = ConvConfig(stride)
        if not 0 <= sparsity <= 1:
            raise ConfigError('sparsity must be in [0, 1], got {0}'
                              .format(sparsity))
        self.sparsity = float(sparsity)
        self.seed = int(seed)
        self.pool = pool
        # fails early on a kernel or pooling window that does not fit
        dims = self.dims()
        if pool is not None:
            dims.pool_out()
        else:
            dims.conv_out()

    @classmethod
    def from_dict (cls, d):
        """:raise ConfigError: for unknown keys or malformed values."""
        if not isinstance(d, dict):
            raise ConfigError('sweep point must be an object, got {0!r}'
                              .format(d))
        unknown = set(d) - set(GRID_KEYS)
        if unknown:
            raise ConfigError('unknown sweep point keys: {0}'
                              .format(', '.join(sorted(unknown))))
        try:
            height = d.get('height', d.get('size'))
            width = d.get('width', d.get('size'))
            if height is None or width is None:
                raise ConfigError('sweep point needs a size: {0!r}'.format(d))
            p = d.get('pool')
            pool_cfg = None
            if p is not None:
                pool_cfg = PoolConfig(p['w'], p.get('h'), p.get('stride'),
                                      p.get('mode', 'max'))
            kernel = d.get('kernel', 3)
            if isinstance(kernel, list):
                kernel = tuple(kernel)
            return cls(height, width, d.get('channels', 1), kernel,
                       d.get('stride', 1), d.get('sparsity', 0.7),
                       d.get('seed', 0), pool_cfg)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError('malformed sweep point {0!r}: {1}'.format(d, e))

    def __repr__ (self):
        return 'SweepPoint({0})'.format(self.params())

    def dims (self):
        p = ((None, None, None) if self.pool is None else
             (self.pool.p_w, self.pool.p_h, self.pool.stride))
        return Dims(self.width, self.height, self.k_w, self.k_h,
                    self.conv.stride, *p, channels=self.channels)

    def params (self):
        """CSV columns describing the point."""
        d = {'height': self.height, 'width': self.width,
             'channels': self.channels, 'k_h': self.k_h, 'k_w': self.k_w,
             'stride': self.conv.stride, 'sparsity': self.sparsity,
             'seed': self.seed}
        if self.pool is not None:
            d.update(pool_w=self.pool.p_w, pool_h=self.pool.p_h,
                     pool_stride=self.pool.stride, pool_mode=self.pool.mode)
        return d

    def inputs (self):
        """``(fmap, filter)`` for this point."""
        fmap = generate(self.height, self.width, self.channels,
                        self.sparsity, self.seed)
        filt = random_filter(self.k_h, self.k_w, self.channels,
                             self.seed + 1)
        return (fmap, filt)


def expand_grid (grid):
    """Point dicts for every combination of a grid's value lists.

expand_grid(grid) -> [dict]

Keys vary in :data:`GRID_KEYS` order, the first outermost.

"""
    if not isinstance(grid, dict):
        raise ConfigError('sweep grid must be an object')
    unknown = set(grid) - set(GRID_KEYS)
    if unknown:
        raise ConfigError('unknown sweep grid keys: {0}'
                          .format(', '.join(sorted(unknown))))
    keys = [k for k in GRID_KEYS if k in grid]
    values = []
    for k in keys:
        v = grid[k]
        values.append(v if isinstance(v, list) else [v])
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def check_methods (methods):
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ConfigError('unknown sweep method: \'{0}\' (expected one '
                              'of {1})'.format(m, ', '.join(METHODS)))
    return methods


def parse_config (doc):
    """Points and methods of a sweep config document.

parse_config(doc) -> (points, methods)

:raise ConfigError: for a malformed document.

"""
    if isinstance(doc, list):
        doc = {'points': doc}
    if not isinstance(doc, dict):
        raise ConfigError('sweep config must be an object or a list')
    unknown = set(doc) - {'points', 'grid', 'methods'}
    if unknown:
        raise ConfigError('unknown sweep config keys: {0}'
                          .format(', '.join(sorted(unknown))))
    raw = doc.get('points', [])
    if not isinstance(raw, list):
        raise ConfigError('sweep points must be a list')
    raw = raw + (expand_grid(doc['grid']) if 'grid' in doc else [])
    methods = check_methods(doc.get('methods', conf.SWEEP_METHODS))
    return ([SweepPoint.from_dict(d) for d in raw], methods)


def load_config (path):
    """Read and parse a JSON sweep config file."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except ValueError as e:
        raise ConfigError('{0}: invalid JSON: {1}'.format(path, e))
    return parse_config(doc)


def preset (name):
    """Points and methods of a named preset in :data:`conf.SWEEP_PRESETS`."""
    presets = conf.SWEEP_PRESETS
    if name not in presets:
        raise ConfigError('unknown sweep preset: \'{0}\' (expected one of {1})'
                          .format(name, ', '.join(sorted(presets))))
    return parse_config({'points': list(presets[name])})


def columns (methods):
    """CSV header of a sweep over ``methods``."""
    cols = list(POINT_COLUMNS)
    for m in methods:
        cols += ['wall_ns_' + m, 'muls_' + m, 'adds_' + m]
    if 'dense' in methods:
        cols += ['speedup_' + m for m in methods if m != 'dense']
    return cols + list(TAIL_COLUMNS)


def _run_method (point, method, fmap, filt, counters, exec_cfg):
    # output of one method at one point, or None if it does not apply
    if point.pool is None:
        if method == 'dense':
            return dense_conv(fmap, filt, point.conv, counters)
        elif method == 'im2col':
            return im2col_conv(fmap, filt, point.conv, counters)
        elif method == 'im2col-csr':
            return im2col_csr_conv(fmap, filt, point.conv, counters)
        elif method == 'ecr':
            return ecr_conv(fmap, filt, point.conv, counters, exec_cfg)
        return None
    if method == 'im2col':
        out = im2col_conv(fmap, filt, point.conv, counters)
        return pool(relu(out), point.pool)
    if method == 'im2col-csr':
        out = im2col_csr_conv(fmap, filt, point.conv, counters)
        return pool(relu(out), point.pool)
    if method == 'pecr':
        return pecr_fused(fmap, filt, point.conv, point.pool, counters,
                          exec_cfg)
    m = 'dense-separate' if method == 'dense' else method
    return multichannel_conv_pool(fmap, [filt], point.conv, point.pool, m,
                                  counters, exec_cfg)


def run_point (point, methods, exec_cfg=None, index=0):
    """Run every method at one point.

run_point(point, methods, exec_cfg=None, index=0) -> row

:return: dict keyed by :func:`columns`.  ``agree`` is ``1`` if every output
         is within :data:`conf.TOLERANCE` of the first method's.

"""
    fmap, filt = point.inputs()
    dims = point.dims()
    row = point.params()
    row['point'] = index
    row['theta'] = theta(sparsity(fmap), point.width)
    notes = []
    outs = []
    for m in methods:
        if m == 'pecr' and point.pool is not None:
            try:
                pack_counts(dims)
            except ConfigError as e:
                notes.append('pecr skipped: {0}'.format(e))
                continue
        counters = OpCount()
        with Timer() as t:
            out = _run_method(point, m, fmap, filt, counters, exec_cfg)
        if out is None:
            continue
        row['wall_ns_' + m] = t.ns
        row['muls_' + m] = counters.multiplications
        row['adds_' + m] = counters.additions
        outs.append(out)
    if 'wall_ns_dense' in row:
        for m in methods:
            if m != 'dense' and 'wall_ns_' + m in row:
                row['speedup_' + m] = (float(row['wall_ns_dense']) /
                                       max(row['wall_ns_' + m], 1))
    if point.pool is None:
        conv_traffic = traffic_conv(dims)
        row['transfer_floats_conv'] = conv_traffic.transfer_floats
        row['global_bytes_conv'] = conv_traffic.global_bytes
        if 'muls_im2col-csr' in row:
            # the product makes one multiplication per stored nonzero
            row['global_bytes_im2col_csr'] = traffic_im2col_csr(
                dims, row['muls_im2col-csr']).global_bytes
    else:
        row['transfer_floats_separate'] = \
            traffic_separate(dims).transfer_floats
        row['transfer_floats_fused'] = traffic_fused(dims).transfer_floats
    if outs:
        diff = max(max_abs_diff(o.data, outs[0].data) for o in outs)
        row['max_abs_diff'] = diff
        row['agree'] = int(diff <= conf.TOLERANCE)
    row['note'] = '; '.join(notes)
    log.debug('sweep point %d: %s', index, row)
    return row


def run_sweep (points, methods, exec_cfg=None):
    """Run :func:`run_point` over every point, in order."""
    methods = check_methods(methods)
    return [run_point(p, methods, exec_cfg, i) for i, p in enumerate(points)]
