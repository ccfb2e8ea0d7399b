"""ECR (Extended and Compressed Row) format and SpMV convolution.

A feature map is split into convolution block rows: block ``b`` holds the
windows whose top edge is input row ``b * c_s``, which produce output row
``b``.  Thread ``t`` of the block owns the window starting at column
``t * c_s``.  For each thread the nonzeros of its window are compacted into a
fixed-size slot of ``F_data`` with the paired kernel weights in the same slot of
``K_data``, and ``Ptr`` records how many there are (``-1`` for none).

Convolution over the format is a sparse matrix-vector product: each thread
multiplies its ``F_data`` entries by its ``K_data`` entries and sums them, so
zero activations cost nothing.

Multi-channel maps are scanned channel after channel into the same slot, whose
size is then ``channels * k_w * k_h``, and each thread's sum runs over all of
them before its one output is written.

"""

import numpy as np

from .tensor import (FeatureMap, ConvConfig, Dims, check_pair,
                     conv_output_dims)
from .metrics import OpCount
from .execmodel import ExecConfig, dispatch, plan
from .util import FormatError

#: ``Ptr`` value of a thread whose window has no nonzeros.
EMPTY = -1


class EcrBlockRow (object):
    """Compressed data of one convolution block row.

EcrBlockRow(f_data, k_data, ptr, slot_index)

:arg f_data: ``float32`` array of length ``threads * slot``; thread ``t``'s
             nonzeros are at ``[t * slot, t * slot + nnz(t))`` in window scan
             order.  The rest of each slot is filler and is never read.
:arg k_data: kernel weights paired with ``f_data``, same layout.
:arg ptr: one integer per thread: the window's nonzero count, or
          :data:`EMPTY`.
:arg slot_index: window-relative offset (``c * k_h * k_w + i * k_w + j``) of
                 each filled ``f_data`` entry, ``-1`` in filler; this is what
                 makes the format decompressible.

"""

    def __init__ (self, f_data, k_data, ptr, slot_index):
        self.f_data = np.asarray(f_data, dtype=np.float32)
        self.k_data = np.asarray(k_data, dtype=np.float32)
        self.ptr = np.asarray(ptr, dtype=np.int32)
        self.slot_index = np.asarray(slot_index, dtype=np.int32)
        n = self.ptr.size
        if n == 0 or self.f_data.size % n:
            raise FormatError('F_data length {0} is not a whole number of '
                              'slots for {1} threads'
                              .format(self.f_data.size, n))
        if not (self.k_data.size == self.slot_index.size ==
                self.f_data.size):
            raise FormatError('F_data, K_data and slot index lengths differ')

    @property
    def threads (self):
        return self.ptr.size

    @property
    def slot (self):
        """Slot size per thread, ``channels * k_w * k_h``."""
        return self.f_data.size // self.ptr.size

    def nnz (self):
        """Per-thread nonzero counts (``Ptr`` with :data:`EMPTY` as ``0``).

:raise FormatError: if any ``Ptr`` entry is outside
                    ``{-1} U [1, slot]``; the error's ``thread`` attribute
                    names the first bad thread.

"""
        ptr = self.ptr
        bad = (ptr < EMPTY) | (ptr == 0) | (ptr > self.slot)
        if bad.any():
            t = int(np.flatnonzero(bad)[0])
            e = FormatError('corrupted Ptr[{0}] = {1} (slot size {2})'
                            .format(t, int(ptr[t]), self.slot))
            e.thread = t
            raise e
        return np.where(ptr == EMPTY, 0, ptr)

    def entries (self, t):
        """``(f_data, k_data, slot_index)`` views of thread ``t``'s filled
entries."""
        n = int(self.nnz()[t])
        start = t * self.slot
        return (self.f_data[start:start + n], self.k_data[start:start + n],
                self.slot_index[start:start + n])


class EcrMap (object):
    """A feature map and filter converted to ECR.

EcrMap(block_rows, dims)

:arg block_rows: one :class:`EcrBlockRow` per output row.
:arg dims: originating :class:`Dims <engine.tensor.Dims>`.

"""

    def __init__ (self, block_rows, dims):
        o_w, o_h = conv_output_dims(dims.i_w, dims.i_h, dims.k_w, dims.k_h,
                                    dims.c_s)
        if len(block_rows) != o_h:
            raise FormatError('expected {0} block rows, got {1}'
                              .format(o_h, len(block_rows)))
        for row in block_rows:
            if row.threads != o_w:
                raise FormatError('expected {0} threads per block row, got '
                                  '{1}'.format(o_w, row.threads))
        self.block_rows = list(block_rows)
        self.dims = dims

    def __repr__ (self):
        return 'EcrMap({0} block rows, {1})'.format(len(self.block_rows),
                                                     self.dims)

    @property
    def grid_shape (self):
        return ecr_grid_shape(self.dims)

    def nnz (self):
        """Total stored nonzeros over all windows."""
        return int(sum(row.nnz().sum() for row in self.block_rows))

    def windows (self):
        """Decompress: scatter every thread's nonzeros back into its window.

windows() -> array

:return: ``float32`` array of shape ``(o_h, o_w, channels, k_h, k_w)``.

"""
        d = self.dims
        o_w, o_h = self.grid_shape[::-1]
        slot = d.channels * d.k_h * d.k_w
        out = np.zeros((o_h, o_w, slot), dtype=np.float32)
        for b, row in enumerate(self.block_rows):
            nnz = row.nnz()
            f = row.f_data.reshape(o_w, slot)
            idx = row.slot_index.reshape(o_w, slot)
            filled = np.arange(slot) < nnz[:, np.newaxis]
            t, p = np.nonzero(filled)
            out[b, t, idx[t, p]] = f[t, p]
        return out.reshape(o_h, o_w, d.channels, d.k_h, d.k_w)


def ecr_grid_shape (dims):
    """Execution grid of a block-row layout.

ecr_grid_shape(dims) -> (blocks, threads_per_block)

:return: ``(o_h, o_w)``: one block per output row, one thread per output.

"""
    o_w, o_h = dims.conv_out()
    return (o_h, o_w)


def block_windows (x, b, k_w, k_h, s, o_w):
    # windows of block row b as (threads, channels * k_h * k_w); element
    # (c, i, j) of thread t is input offset
    # c * i_h * i_w + b * c_s * i_w + t * c_s + i * i_w + j
    C = x.shape[0]
    rows = x[:, b * s:b * s + k_h, :]
    win = np.empty((o_w, C, k_h, k_w), dtype=np.float32)
    for j in range(k_w):
        win[..., j] = rows[:, :, j:j + s * (o_w - 1) + 1:s].transpose(2, 0, 1)
    return win.reshape(o_w, C * k_h * k_w)


def compress_rows (win, weights):
    """Compact the nonzeros of each row of ``win`` to its front.

compress_rows(win, weights) -> (values, paired_weights, index, nnz)

:arg win: ``(n, slot)`` windows.
:arg weights: ``(slot,)`` kernel weights in the same scan order.

:return: ``(n, slot)`` arrays of nonzero values, their weights and their
         window-relative offsets (filler is ``0``, ``0`` and ``-1``), and the
         ``(n,)`` nonzero counts.  Order within a row is scan order.

"""
    mask = win != 0
    nnz = mask.sum(axis=1)
    order = np.argsort(~mask, axis=1, kind='stable')
    filled = np.arange(win.shape[1]) < nnz[:, np.newaxis]
    values = np.where(filled, np.take_along_axis(win, order, axis=1),
                      np.float32(0))
    paired = np.where(filled, weights[order], np.float32(0))
    index = np.where(filled, order, -1)
    return (values, paired, index, nnz)


def ecr_convert (fmap, filt, cfg=None, exec_cfg=None):
    """Convert a feature map and a filter to ECR.

ecr_convert(fmap, filt, cfg=ConvConfig(), exec_cfg=None) -> EcrMap

:arg fmap: :class:`FeatureMap <engine.tensor.FeatureMap>`.
:arg filt: :class:`Filter <engine.tensor.Filter>`.
:arg cfg: :class:`ConvConfig <engine.tensor.ConvConfig>`.
:arg exec_cfg: :class:`ExecConfig <engine.execmodel.ExecConfig>`; block rows
               are converted in parallel.

Each thread scans its window row by row (channel by channel for multi-channel
maps) and keeps the nonzeros, pairing each with
``kernel[c * k_h * k_w + i * k_w + j]``.

"""
    cfg = cfg or ConvConfig()
    check_pair(fmap, filt)
    dims = Dims.of(fmap, filt, cfg)
    grid = plan(dims, 'ECR', exec_cfg or ExecConfig())
    x = fmap.data
    weights = filt.weights
    o_w = grid.threads_per_block

    def convert_block_row (b):
        win = block_windows(x, b, filt.k_w, filt.k_h, cfg.stride, o_w)
        values, paired, index, nnz = compress_rows(win, weights)
        ptr = np.where(nnz == 0, EMPTY, nnz)
        return (EcrBlockRow(values.ravel(), paired.ravel(), ptr,
                            index.ravel()), None)

    rows, _ = dispatch(grid, convert_block_row, exec_cfg)
    return EcrMap(rows, dims)


def spmv_block_row (row):
    """Convolve one block row.

spmv_block_row(row) -> (outputs, OpCount)

Threads with ``Ptr == -1`` write ``0.0`` without reading ``F_data``; the
others sum ``F_data[p] * K_data[p]`` over their filled entries in order.  This
is vectorised across threads, one slot position at a time.

"""
    nnz = row.nnz()
    threads, slot = row.threads, row.slot
    f = row.f_data.reshape(threads, slot)
    k = row.k_data.reshape(threads, slot)
    acc = np.zeros(threads, dtype=np.float32)
    muls = adds = 0
    for p in range(int(nnz.max())):
        active = nnz > p
        prod = f[:, p] * k[:, p]
        n = int(np.count_nonzero(active))
        muls += n
        if p == 0:
            acc = np.where(active, prod, acc)
        else:
            acc = np.where(active, acc + prod, acc)
            adds += n
    return (acc, OpCount(muls, adds))


def ecr_spmv_conv (ecr, counters=None, exec_cfg=None):
    """Convolution over an ECR map.

ecr_spmv_conv(ecr, counters=None, exec_cfg=None) -> FeatureMap

:arg ecr: :class:`EcrMap`.
:arg counters: optional :class:`OpCount <engine.metrics.OpCount>` to tally
               into: ``nnz(t)`` multiplications and ``max(nnz(t) - 1, 0)``
               additions per thread.
:arg exec_cfg: :class:`ExecConfig <engine.execmodel.ExecConfig>`.

:return: single-channel map of shape ``(o_h, o_w)``, equal to
         :func:`dense_conv <engine.tensor.dense_conv>` of the originating map
         and filter.

:raise FormatError: for a corrupted ``Ptr``; the error has ``block`` and
                   ``thread`` attributes.

"""
    for b, row in enumerate(ecr.block_rows):
        try:
            row.nnz()
        except FormatError as e:
            e.block = b
            raise
    grid = plan(ecr.dims, 'ECR', exec_cfg or ExecConfig())
    rows, counts = dispatch(grid, lambda b: spmv_block_row(ecr.block_rows[b]),
                            exec_cfg)
    if counters is not None:
        counters.tally(*counts.as_tuple())
    return FeatureMap(np.stack(rows))


def ecr_conv (fmap, filt, cfg=None, counters=None, exec_cfg=None):
    """Convert to ECR and convolve.

ecr_conv(fmap, filt, cfg=ConvConfig(), counters=None, exec_cfg=None)
    -> FeatureMap

"""
    return ecr_spmv_conv(ecr_convert(fmap, filt, cfg, exec_cfg), counters,
                         exec_cfg)
