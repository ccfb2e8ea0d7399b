"""Dense feature maps and filters, and the dense reference operations.

Everything sparse in the engine is checked against the functions here.  All
convolutions are 'valid' (no padding); window counts use floor division, so
trailing rows and columns that do not admit a full window are dropped.

Accumulation order for convolution is fixed: channel-major, then row-major
within the window.  Each output is a sequential ``float32`` sum in that order,
so the sparse paths, which skip zero terms of the same sum, give identical
results.

"""

from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse

from .util import (ShapeError, DimensionError, ConfigError, as_f32,
                   window_count, require_positive)


class Dims (NamedTuple):
    """Dimensions of one convolution (and optional pooling) problem.

Dims(i_w, i_h, k_w, k_h, c_s=1, p_w=None, p_h=None, p_s=None, channels=1)

Widths and heights are in elements.  The pooling fields are ``None`` for a
convolution-only problem.

"""

    i_w: int
    i_h: int
    k_w: int
    k_h: int
    c_s: int = 1
    p_w: Optional[int] = None
    p_h: Optional[int] = None
    p_s: Optional[int] = None
    channels: int = 1

    @classmethod
    def of (cls, fmap, filt, conv=None, pool=None):
        """Dims of convolving ``fmap`` with ``filt`` (then pooling)."""
        c_s = 1 if conv is None else conv.stride
        if pool is None:
            p = (None, None, None)
        else:
            p = (pool.p_w, pool.p_h, pool.stride)
        return cls(fmap.width, fmap.height, filt.k_w, filt.k_h, c_s, *p,
                   channels=fmap.channels)

    @property
    def has_pool (self):
        return self.p_w is not None

    def conv_out (self):
        """``(o_w, o_h)`` of the convolution."""
        return conv_output_dims(self.i_w, self.i_h, self.k_w, self.k_h,
                                self.c_s)

    def pool_out (self):
        """``(w, h)`` of the pooled convolution output (floor semantics)."""
        if not self.has_pool:
            raise ConfigError('dims have no pooling window')
        o_w, o_h = self.conv_out()
        p_h = self.p_w if self.p_h is None else self.p_h
        p_s = self.p_w if self.p_s is None else self.p_s
        return (window_count(o_w, self.p_w, p_s),
                window_count(o_h, p_h, p_s))

    def with_pool (self, p_w, p_h, p_s):
        """Copy with the given pooling window."""
        return self._replace(p_w=p_w, p_h=p_h, p_s=p_s)


class ConvConfig (object):
    """Convolution configuration.

ConvConfig(stride=1)

"""

    def __init__ (self, stride=1):
        require_positive(stride=stride)
        #: Convolution stride ``c_s``.
        self.stride = int(stride)

    def __repr__ (self):
        return 'ConvConfig(stride={0})'.format(self.stride)


class PoolConfig (object):
    """Pooling configuration.

PoolConfig(p_w, p_h=p_w, stride=p_w, mode='max')

:arg p_w,p_h: pooling window width and height.
:arg stride: pooling stride ``p_s``.
:arg mode: ``'max'`` or ``'mean'``.

"""

    modes = ('max', 'mean')

    def __init__ (self, p_w, p_h=None, stride=None, mode='max'):
        if p_h is None:
            p_h = p_w
        if stride is None:
            stride = p_w
        require_positive(p_w=p_w, p_h=p_h, stride=stride)
        if mode not in self.modes:
            raise ConfigError('unknown pooling mode: \'{0}\''.format(mode))
        self.p_w = int(p_w)
        self.p_h = int(p_h)
        self.stride = int(stride)
        self.mode = mode

    def __repr__ (self):
        return 'PoolConfig({0}, {1}, stride={2}, mode={3!r})'.format(
            self.p_w, self.p_h, self.stride, self.mode)


class FeatureMap (object):
    """A dense multi-channel 2D map of ``float32`` values.

FeatureMap(data)

:arg data: array-like of shape ``(height, width)`` (one channel) or
           ``(channels, height, width)``.  Stored as a C-contiguous
           ``float32`` array, so the flat layout is channel-major then
           row-major.

"""

    def __init__ (self, data):
        data = as_f32(data)
        if data.ndim == 2:
            data = data[np.newaxis]
        if data.ndim != 3:
            raise ShapeError('expected a 2D or 3D array, got {0}D'
                             .format(data.ndim))
        if 0 in data.shape:
            raise ShapeError('empty map: shape {0}'.format(data.shape))
        #: ``(channels, height, width)`` ``float32`` array.
        self.data = data

    @classmethod
    def from_values (cls, values, channels, height, width):
        """Build a map from a flat channel-major, row-major sequence.

from_values(values, channels, height, width) -> FeatureMap

:raise ShapeError: if ``len(values) != channels * height * width``.

"""
        require_positive(channels=channels, height=height, width=width)
        values = as_f32(values).ravel()
        n = channels * height * width
        if values.size != n:
            raise ShapeError('expected {0} values for {1}x{2}x{3}, got {4}'
                             .format(n, channels, height, width, values.size))
        return cls(values.reshape(channels, height, width))

    def __repr__ (self):
        return 'FeatureMap({0}x{1}x{2})'.format(*self.data.shape)

    @property
    def channels (self):
        return self.data.shape[0]

    @property
    def height (self):
        """``i_h``."""
        return self.data.shape[1]

    @property
    def width (self):
        """``i_w``."""
        return self.data.shape[2]

    @property
    def shape (self):
        """``(channels, height, width)``."""
        return self.data.shape

    @property
    def values (self):
        """Flat view of the values, channel-major then row-major."""
        return self.data.reshape(-1)

    def offset (self, c, y, x):
        """Flat offset of element ``(c, y, x)``:
``c * i_h * i_w + y * i_w + x``."""
        return (c * self.height + y) * self.width + x

    def index (self, offset):
        """Inverse of :meth:`offset`: ``(c, y, x)``."""
        c, rest = divmod(offset, self.height * self.width)
        y, x = divmod(rest, self.width)
        return (c, y, x)

    def equals (self, other):
        """Whether ``other`` has the same shape and equal values."""
        return (self.shape == other.shape and
                bool(np.array_equal(self.data, other.data)))


class Filter (object):
    """A single convolution filter of ``float32`` weights.

Filter(weights)

:arg weights: array-like of shape ``(k_h, k_w)`` or ``(channels, k_h, k_w)``.

"""

    def __init__ (self, weights):
        weights = as_f32(weights)
        if weights.ndim == 2:
            weights = weights[np.newaxis]
        if weights.ndim != 3 or 0 in weights.shape:
            raise ShapeError('expected a non-empty 2D or 3D kernel, got shape '
                             '{0}'.format(weights.shape))
        #: ``(channels, k_h, k_w)`` ``float32`` array.
        self.data = weights

    @classmethod
    def from_values (cls, values, channels, k_h, k_w):
        """Build a filter from flat channel-major, row-major weights."""
        require_positive(channels=channels, k_h=k_h, k_w=k_w)
        values = as_f32(values).ravel()
        n = channels * k_h * k_w
        if values.size != n:
            raise ShapeError('expected {0} weights for {1}x{2}x{3}, got {4}'
                             .format(n, channels, k_h, k_w, values.size))
        return cls(values.reshape(channels, k_h, k_w))

    def __repr__ (self):
        return 'Filter({0}x{1}x{2})'.format(*self.data.shape)

    @property
    def channels (self):
        return self.data.shape[0]

    @property
    def k_h (self):
        return self.data.shape[1]

    @property
    def k_w (self):
        return self.data.shape[2]

    @property
    def weights (self):
        """Flat view of the weights; ``weights[c*k_h*k_w + i*k_w + j]``."""
        return self.data.reshape(-1)


def check_pair (fmap, filt):
    """Raise unless ``filt`` can convolve ``fmap``: channel counts match
(:class:`ShapeError`) and the kernel fits (:class:`DimensionError`)."""
    if fmap.channels != filt.channels:
        raise ShapeError('filter has {0} channels, map has {1}'
                         .format(filt.channels, fmap.channels))
    if filt.k_w > fmap.width or filt.k_h > fmap.height:
        raise DimensionError('kernel {0}x{1} larger than map {2}x{3}'
                             .format(filt.k_w, filt.k_h, fmap.width,
                                     fmap.height))


def conv_output_dims (i_w, i_h, k_w, k_h, c_s=1):
    """Output size of a valid convolution.

conv_output_dims(i_w, i_h, k_w, k_h, c_s=1) -> (o_w, o_h)

:return: ``o_w = (i_w - k_w) // c_s + 1``, and ``o_h`` likewise.

:raise DimensionError: if the kernel is larger than the map.

"""
    require_positive(i_w=i_w, i_h=i_h, k_w=k_w, k_h=k_h, c_s=c_s)
    if k_w > i_w or k_h > i_h:
        raise DimensionError('kernel {0}x{1} larger than map {2}x{3}'
                             .format(k_w, k_h, i_w, i_h))
    return (window_count(i_w, k_w, c_s), window_count(i_h, k_h, c_s))


def _strided (plane, i, j, n_h, n_w, step):
    # the (n_h, n_w) elements at (i + y * step, j + x * step)
    return plane[..., i:i + step * (n_h - 1) + 1:step,
                 j:j + step * (n_w - 1) + 1:step]


def dense_conv (fmap, filt, cfg=None, counters=None):
    """Dense direct convolution: the reference oracle.

dense_conv(fmap, filt, cfg=ConvConfig(), counters=None) -> FeatureMap

:arg fmap: :class:`FeatureMap`.
:arg filt: :class:`Filter` with the same number of channels.
:arg cfg: :class:`ConvConfig`.
:arg counters: optional :class:`metrics.OpCount <engine.metrics.OpCount>`;
               every scalar multiplication and addition is tallied into it,
               zero operands included.

:return: single-channel map of shape ``(o_h, o_w)`` with
         ``out[y][x] = sum over c, i, j of
         fmap[c][y * c_s + i][x * c_s + j] * w[c][i][j]``.

"""
    cfg = cfg or ConvConfig()
    check_pair(fmap, filt)
    s = cfg.stride
    o_w, o_h = conv_output_dims(fmap.width, fmap.height, filt.k_w, filt.k_h, s)
    x = fmap.data
    w = filt.data
    acc = None
    muls = adds = 0
    for c in range(filt.channels):
        for i in range(filt.k_h):
            for j in range(filt.k_w):
                term = _strided(x[c], i, j, o_h, o_w, s) * w[c, i, j]
                muls += term.size
                if acc is None:
                    acc = term
                else:
                    acc = acc + term
                    adds += term.size
    if counters is not None:
        counters.tally(muls, adds)
    return FeatureMap(acc)


def relu (fmap):
    """Elementwise ``max(x, 0)``; ``-0.0`` maps to ``0.0``.

relu(fmap) -> FeatureMap

"""
    x = fmap.data
    return FeatureMap(np.where(x > 0, x, np.float32(0)))


def pool (fmap, cfg):
    """Max- or mean-pool every channel.

pool(fmap, cfg) -> FeatureMap

:arg cfg: :class:`PoolConfig`.

Partial windows are dropped.  Mean mode is a sequential ``float32`` sum in
row-major window order divided by ``p_w * p_h``.

:raise DimensionError: if the window is larger than the map.

"""
    if cfg.p_w > fmap.width or cfg.p_h > fmap.height:
        raise DimensionError('pooling window {0}x{1} larger than map {2}x{3}'
                             .format(cfg.p_w, cfg.p_h, fmap.width,
                                     fmap.height))
    s = cfg.stride
    n_w = window_count(fmap.width, cfg.p_w, s)
    n_h = window_count(fmap.height, cfg.p_h, s)
    x = fmap.data
    acc = None
    for i in range(cfg.p_h):
        for j in range(cfg.p_w):
            v = _strided(x, i, j, n_h, n_w, s)
            if acc is None:
                acc = v.copy()
            elif cfg.mode == 'max':
                acc = np.maximum(acc, v)
            else:
                acc = acc + v
    if cfg.mode == 'mean':
        acc = acc / np.float32(cfg.p_w * cfg.p_h)
    return FeatureMap(acc)


def im2col_extend (fmap, k_w, k_h, cfg=None):
    """Extend every convolution window into one matrix row.

im2col_extend(fmap, k_w, k_h, cfg=ConvConfig()) -> matrix

:return: ``float32`` array of shape ``(o_h * o_w, channels * k_h * k_w)``;
         row ``r`` is the window of output index ``r`` (raster order), columns
         ordered channel, window row, window column.

"""
    cfg = cfg or ConvConfig()
    s = cfg.stride
    o_w, o_h = conv_output_dims(fmap.width, fmap.height, k_w, k_h, s)
    C = fmap.channels
    col = np.empty((C, k_h, k_w, o_h, o_w), dtype=np.float32)
    for i in range(k_h):
        for j in range(k_w):
            col[:, i, j] = _strided(fmap.data, i, j, o_h, o_w, s)
    return col.transpose(3, 4, 0, 1, 2).reshape(o_h * o_w, C * k_h * k_w)


def im2col_conv (fmap, filt, cfg=None, counters=None):
    """Convolution lowered to a matrix-vector product over
:func:`im2col_extend`.

im2col_conv(fmap, filt, cfg=ConvConfig(), counters=None) -> FeatureMap

The product is computed in double precision, so results agree with
:func:`dense_conv` to within rounding rather than bit for bit.  Counters are
the dense counts.

"""
    cfg = cfg or ConvConfig()
    check_pair(fmap, filt)
    o_w, o_h = conv_output_dims(fmap.width, fmap.height, filt.k_w, filt.k_h,
                                cfg.stride)
    cols = im2col_extend(fmap, filt.k_w, filt.k_h, cfg)
    out = cols.astype(np.float64) @ filt.weights.astype(np.float64)
    if counters is not None:
        rows, n = cols.shape
        counters.tally(rows * n, rows * (n - 1))
    return FeatureMap(out.astype(np.float32).reshape(o_h, o_w))


def im2col_csr (fmap, k_w, k_h, cfg=None):
    """:func:`im2col_extend` compressed to CSR.

im2col_csr(fmap, k_w, k_h, cfg=ConvConfig()) -> scipy.sparse.csr_matrix

Column indices within a row are in window scan order.

"""
    return sparse.csr_matrix(im2col_extend(fmap, k_w, k_h, cfg))


def im2col_csr_conv (fmap, filt, cfg=None, counters=None):
    """Convolution as im2col extension, CSR compression and a sparse
matrix-vector product.

im2col_csr_conv(fmap, filt, cfg=ConvConfig(), counters=None) -> FeatureMap

The three steps are separate passes over the extended matrix, unlike ECR
which compresses each window as it is read.  One multiplication is counted
per stored nonzero and one addition per nonzero after the first in each row,
which is what ECR counts too.  As in :func:`im2col_conv` the product is
computed in double precision.

"""
    cfg = cfg or ConvConfig()
    check_pair(fmap, filt)
    o_w, o_h = conv_output_dims(fmap.width, fmap.height, filt.k_w, filt.k_h,
                                cfg.stride)
    m = im2col_csr(fmap, filt.k_w, filt.k_h, cfg)
    out = m.astype(np.float64) @ filt.weights.astype(np.float64)
    if counters is not None:
        per_row = np.diff(m.indptr)
        counters.tally(int(m.nnz), int(np.maximum(per_row - 1, 0).sum()))
    return FeatureMap(np.asarray(out).astype(np.float32).reshape(o_h, o_w))


def sparsity (values):
    """Fraction of exactly-zero elements (either sign).

sparsity(values) -> fraction

:arg values: :class:`FeatureMap` or array-like.

"""
    if isinstance(values, FeatureMap):
        values = values.data
    values = np.asarray(values)
    if values.size == 0:
        raise ShapeError('sparsity of an empty array')
    return float(np.count_nonzero(values == 0)) / values.size
