"""PECR (Pooling-pack Extended and Compressed Row) format and fused
convolution, activation and pooling.

One thread computes one pooling output.  Its pooling window covers
``p_w * p_h`` convolution windows, which all lie inside a ``T_h x T_w`` tile
of the input (``T_w = k_w + c_s * (p_w - 1)``).  The thread's pack stores the
nonzeros of those windows (``Data``), the kernel offset each pairs with
(``Index``) and how many each window has (``Count``).  Pooling-pack row ``b``
(one thread block) produces pooled output row ``b``.

The fused pass runs one sparse dot product per window and keeps a running
maximum initialised to ``0``, which folds the ReLU into the max-pooling; the
convolution results never leave the thread.

Windows shared by neighbouring packs (``p_s < p_w``) are stored once per pack.

"""

import numpy as np

from .tensor import FeatureMap, ConvConfig, PoolConfig, Dims, check_pair
from .metrics import OpCount
from .execmodel import ExecConfig, dispatch, plan
from .ecr import compress_rows
from .util import ConfigError, FormatError


def pecr_n_o (i_w, k_w, c_s, p_w, p_s, axis='width'):
    """Pooling outputs along one axis under fused tiling.

pecr_n_o(i_w, k_w, c_s, p_w, p_s, axis='width') -> n_o

:return: ``(i_w - k_w + c_s - c_s * p_w + p_s * c_s) / (p_s * c_s)``.

:arg axis: name used in error messages.

:raise ConfigError: if the result is not a positive integer.

"""
    for name, v in (('i', i_w), ('k', k_w), ('c_s', c_s), ('p', p_w),
                    ('p_s', p_s)):
        if v < 1:
            raise ConfigError('{0}: {1} must be positive, got {2}'
                              .format(axis, name, v))
    num = i_w - k_w + c_s - c_s * p_w + p_s * c_s
    den = p_s * c_s
    if num <= 0 or num % den:
        raise ConfigError(
            '{0}: pooled tiling is not exact: ({1} - {2} + {3} - {3}*{4} + '
            '{5}*{3}) / ({5}*{3}) = {6}/{7}'.format(axis, i_w, k_w, c_s, p_w,
                                                     p_s, num, den))
    return num // den


def pack_counts (dims):
    """Packs per axis for :class:`Dims <engine.tensor.Dims>` with a pooling
window.

pack_counts(dims) -> (n_w, n_h)

"""
    if not dims.has_pool:
        raise ConfigError('PECR needs a pooling window')
    return (pecr_n_o(dims.i_w, dims.k_w, dims.c_s, dims.p_w, dims.p_s,
                     'width'),
            pecr_n_o(dims.i_h, dims.k_h, dims.c_s, dims.p_h, dims.p_s,
                     'height'))


def tile_dims (dims):
    """``(T_w, T_h)``: input tile read by one thread."""
    return (dims.k_w + dims.c_s * (dims.p_w - 1),
            dims.k_h + dims.c_s * (dims.p_h - 1))


class PecrPoolPack (object):
    """The compressed data of one pooling window.

PecrPoolPack(data, index, count)

:arg data: nonzeros of the ``p_w * p_h`` convolution windows, window after
           window (left to right, top to bottom), each in scan order.
:arg index: kernel offset of each ``data`` entry.
:arg count: nonzeros per convolution window.

"""

    def __init__ (self, data, index, count):
        self.data = np.asarray(data, dtype=np.float32)
        self.index = np.asarray(index, dtype=np.int32)
        self.count = np.asarray(count, dtype=np.int32)
        if not (self.data.size == self.index.size == int(self.count.sum())):
            raise FormatError('Data ({0}), Index ({1}) and sum(Count) ({2}) '
                              'differ'.format(self.data.size, self.index.size,
                                              int(self.count.sum())))

    def __repr__ (self):
        return 'PecrPoolPack(count={0})'.format(self.count.tolist())

    def windows (self, slot):
        """Decompress to a ``(p_w * p_h, slot)`` array of windows."""
        out = np.zeros((self.count.size, slot), dtype=np.float32)
        start = 0
        for n, c in enumerate(self.count):
            out[n, self.index[start:start + c]] = self.data[start:start + c]
            start += c
        return out


class PecrPackRow (object):
    """One pooling-pack row, stored with a fixed slot per window.

PecrPackRow(data, index, count)

:arg data: ``(threads, windows, slot)`` ``float32``; window ``n`` of thread
           ``t`` holds its nonzeros at ``[t, n, :count[t, n]]``.
:arg index: kernel offsets, same shape; ``-1`` in filler.
:arg count: ``(threads, windows)`` nonzero counts.

"""

    def __init__ (self, data, index, count):
        self.data = np.asarray(data, dtype=np.float32)
        self.index = np.asarray(index, dtype=np.int32)
        self.count = np.asarray(count, dtype=np.int32)
        if self.data.shape != self.index.shape or \
           self.data.shape[:2] != self.count.shape:
            raise FormatError('inconsistent pack row shapes: {0}, {1}, {2}'
                              .format(self.data.shape, self.index.shape,
                                      self.count.shape))

    @property
    def threads (self):
        return self.count.shape[0]

    @property
    def slot (self):
        return self.data.shape[2]

    def validate (self):
        """Check counts and indices.

:raise FormatError: if a count is outside ``[0, slot]`` or a filled index
                    is outside ``[0, slot)``; ``thread`` is set on the error.

"""
        slot = self.slot
        bad = (self.count < 0) | (self.count > slot)
        if not bad.any():
            filled = np.arange(slot) < self.count[..., np.newaxis]
            bad_index = filled & ((self.index < 0) | (self.index >= slot))
            bad = bad_index.any(axis=2)
        if bad.any():
            t = int(np.nonzero(bad)[0][0])
            e = FormatError('corrupted pack {0}: Count {1}'
                            .format(t, self.count[t].tolist()))
            e.thread = t
            raise e

    def pack (self, t):
        """Thread ``t``'s :class:`PecrPoolPack`."""
        count = self.count[t]
        filled = np.arange(self.slot) < count[:, np.newaxis]
        return PecrPoolPack(self.data[t][filled], self.index[t][filled],
                            count)


class PecrMap (object):
    """A feature map and filter converted to PECR.

PecrMap(pool_rows, dims, kernel, mode='max')

:arg pool_rows: one :class:`PecrPackRow` per pooled output row.
:arg dims: originating :class:`Dims <engine.tensor.Dims>`, with pooling.
:arg kernel: flat filter weights indexed by ``Index``.
:arg mode: pooling mode of the fused pass, ``'max'`` or ``'mean'``.

"""

    def __init__ (self, pool_rows, dims, kernel, mode='max'):
        n_w, n_h = pack_counts(dims)
        if len(pool_rows) != n_h:
            raise FormatError('expected {0} pooling-pack rows, got {1}'
                              .format(n_h, len(pool_rows)))
        for row in pool_rows:
            if row.threads != n_w:
                raise FormatError('expected {0} packs per row, got {1}'
                                  .format(n_w, row.threads))
        if mode not in PoolConfig.modes:
            raise ConfigError('unknown pooling mode: \'{0}\''.format(mode))
        self.pool_rows = list(pool_rows)
        self.dims = dims
        self.kernel = np.asarray(kernel, dtype=np.float32).ravel()
        self.mode = mode

    def __repr__ (self):
        return 'PecrMap({0}x{1} packs, {2})'.format(
            len(self.pool_rows), self.pool_rows[0].threads, self.dims)

    @property
    def n_o (self):
        """``(n_w, n_h)`` packs per axis."""
        return pack_counts(self.dims)

    def pack (self, b, t):
        return self.pool_rows[b].pack(t)

    def windows (self):
        """Decompress every convolution window of every pack.

windows() -> array

:return: ``float32`` array of shape
         ``(n_h, n_w, p_h * p_w, channels, k_h, k_w)``.

"""
        d = self.dims
        n_w, n_h = self.n_o
        slot = d.channels * d.k_h * d.k_w
        out = np.zeros((n_h, n_w, d.p_w * d.p_h, slot), dtype=np.float32)
        for b, row in enumerate(self.pool_rows):
            for t in range(row.threads):
                out[b, t] = row.pack(t).windows(slot)
        return out.reshape(n_h, n_w, d.p_w * d.p_h, d.channels, d.k_h, d.k_w)


def pecr_convert (fmap, filt, conv=None, pool=None, exec_cfg=None):
    """Convert a feature map and a filter to PECR.

pecr_convert(fmap, filt, conv=ConvConfig(), pool=PoolConfig(2, 2, 1),
             exec_cfg=None) -> PecrMap

Thread ``t`` of block ``b`` reads the tile starting at input offset
``t * c_s * p_s + i_w * (b * c_s * p_s)``; within it, convolution window ``n``
starts ``(n // p_w) * c_s`` rows and ``(n % p_w) * c_s`` columns in.  Each
window's nonzeros are appended to ``Data`` in scan order with kernel offsets
``c * k_h * k_w + i * k_w + j`` in ``Index``.

:raise ConfigError: if either axis does not tile exactly.

"""
    conv = conv or ConvConfig()
    pool = pool or PoolConfig(2, 2, 1)
    check_pair(fmap, filt)
    dims = Dims.of(fmap, filt, conv, pool)
    grid = plan(dims, 'PECR', exec_cfg or ExecConfig())
    n_w = grid.threads_per_block
    s, p_s = conv.stride, pool.stride
    t_w, t_h = tile_dims(dims)
    k_w, k_h = filt.k_w, filt.k_h
    x = fmap.data
    weights = filt.weights
    starts = np.arange(n_w) * p_s * s

    def convert_pack_row (b):
        rows = x[:, b * p_s * s:b * p_s * s + t_h, :]
        tiles = np.stack([rows[:, :, x0:x0 + t_w] for x0 in starts])
        data, index, count = [], [], []
        for n in range(pool.p_w * pool.p_h):
            wy, wx = divmod(n, pool.p_w)
            win = tiles[:, :, wy * s:wy * s + k_h, wx * s:wx * s + k_w]
            values, _, idx, nnz = compress_rows(
                win.reshape(n_w, -1), weights)
            data.append(values)
            index.append(idx)
            count.append(nnz)
        return (PecrPackRow(np.stack(data, axis=1), np.stack(index, axis=1),
                            np.stack(count, axis=1)), None)

    rows, _ = dispatch(grid, convert_pack_row, exec_cfg)
    return PecrMap(rows, dims, weights, pool.mode)


def conv_pool_pack_row (row, kernel, mode='max'):
    """Fused convolution, ReLU and pooling of one pooling-pack row.

conv_pool_pack_row(row, kernel, mode='max') -> (outputs, OpCount)

For each window, in order, the thread sums ``Data[p] * kernel[Index[p]]``
over its ``Count`` entries.  In max mode the running maximum starts at ``0``;
in mean mode each result goes through ReLU and the results are averaged.

"""
    threads, windows, _ = row.data.shape
    best = np.zeros(threads, dtype=np.float32)
    total = None
    muls = adds = 0
    for n in range(windows):
        count = row.count[:, n]
        data = row.data[:, n]
        index = np.maximum(row.index[:, n], 0)
        acc = np.zeros(threads, dtype=np.float32)
        for p in range(int(count.max())):
            active = count > p
            prod = data[:, p] * kernel[index[:, p]]
            k = int(np.count_nonzero(active))
            muls += k
            if p == 0:
                acc = np.where(active, prod, acc)
            else:
                acc = np.where(active, acc + prod, acc)
                adds += k
        if mode == 'max':
            best = np.maximum(best, acc)
        else:
            r = np.where(acc > 0, acc, np.float32(0))
            total = r if total is None else total + r
    if mode == 'mean':
        best = total / np.float32(windows)
    return (best, OpCount(muls, adds))


def pecr_conv_pool (pecr, counters=None, exec_cfg=None):
    """Fused convolution, ReLU and pooling over a PECR map.

pecr_conv_pool(pecr, counters=None, exec_cfg=None) -> FeatureMap

:arg pecr: :class:`PecrMap`.
:arg counters: optional :class:`OpCount <engine.metrics.OpCount>`;
               ``sum(Count)`` multiplications per pack.
:arg exec_cfg: :class:`ExecConfig <engine.execmodel.ExecConfig>`.

:return: map of shape ``(n_h, n_w)`` equal to
         ``pool(relu(dense_conv(...)))``.

:raise FormatError: for inconsistent counts or indices; ``block`` and
                    ``thread`` are set on the error.

"""
    for b, row in enumerate(pecr.pool_rows):
        try:
            row.validate()
        except FormatError as e:
            e.block = b
            raise
    grid = plan(pecr.dims, 'PECR', exec_cfg or ExecConfig())
    rows, counts = dispatch(
        grid, lambda b: conv_pool_pack_row(pecr.pool_rows[b], pecr.kernel,
                                           pecr.mode),
        exec_cfg)
    if counters is not None:
        counters.tally(*counts.as_tuple())
    return FeatureMap(np.stack(rows))


def pecr_fused (fmap, filt, conv=None, pool=None, counters=None,
                exec_cfg=None):
    """Convert to PECR and run the fused pass.

pecr_fused(fmap, filt, conv=ConvConfig(), pool=PoolConfig(2, 2, 1),
           counters=None, exec_cfg=None) -> FeatureMap

"""
    return pecr_conv_pool(pecr_convert(fmap, filt, conv, pool, exec_cfg),
                          counters, exec_cfg)
