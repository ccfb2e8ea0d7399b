"""Simulated block/thread execution.

The model follows the GPU mapping the sparse formats are designed for: one
thread block per output row (ECR block row or PECR pooling-pack row) and one
thread per output element.  Blocks are data-independent, so they run on any
number of host workers; results and counters are collected in block order,
which makes them independent of the worker count and of scheduling.

Shared memory is modeled as a capacity check only; warps, coalescing and bank
conflicts are not simulated.

"""

import logging
from concurrent.futures import ThreadPoolExecutor

from .conf import conf
from .metrics import OpCount
from .util import DispatchError, ConfigError, require_positive
from .util.grid import Grid

log = logging.getLogger(__name__)

#: Supported formats for :func:`plan`.
FORMATS = ('ECR', 'PECR')

# (grid, budget) pairs already warned about
_reported = set()


class ExecConfig (object):
    """Runtime configuration of :func:`dispatch`.

ExecConfig(workers=conf.WORKERS, shared_memory_budget=conf.SHARED_MEMORY_BUDGET)

:arg workers: number of host threads running blocks (``>= 1``).
:arg shared_memory_budget: shared memory available to one block, in bytes.

"""

    def __init__ (self, workers=None, shared_memory_budget=None):
        if workers is None:
            workers = conf.WORKERS
        if shared_memory_budget is None:
            shared_memory_budget = conf.SHARED_MEMORY_BUDGET
        require_positive(workers=workers)
        if shared_memory_budget < 0:
            raise ConfigError('shared_memory_budget must be non-negative')
        self.workers = int(workers)
        self.shared_memory_budget = int(shared_memory_budget)

    def __repr__ (self):
        return 'ExecConfig(workers={0}, shared_memory_budget={1})'.format(
            self.workers, self.shared_memory_budget)


def ecr_shared_bytes (threads, slot):
    """Shared memory of one ECR block row: ``F_data`` and ``K_data`` slots
plus one ``Ptr`` entry per thread."""
    return threads * (slot * 2 * conf.FLOAT_SIZE + conf.INDEX_SIZE)


def pecr_shared_bytes (threads, windows, slot):
    """Shared memory of one PECR pooling-pack row: ``Data`` and ``Index``
slots for each convolution window plus one ``Count`` entry per window."""
    per_thread = windows * (slot * (conf.FLOAT_SIZE + conf.INDEX_SIZE) +
                            conf.INDEX_SIZE)
    return threads * per_thread


def _check_capacity (grid, cfg):
    key = (grid, cfg.shared_memory_budget)
    if grid.shared_bytes_per_block <= cfg.shared_memory_budget:
        return
    msg = '%s needs %d bytes of shared memory per block; budget is %d'
    args = (grid, grid.shared_bytes_per_block, cfg.shared_memory_budget)
    if key in _reported:
        log.debug(msg, *args)
    else:
        _reported.add(key)
        log.warning(msg, *args)


def plan (dims, fmt='ECR', cfg=None):
    """Lay out the execution grid for a problem.

plan(dims, fmt='ECR', cfg=None) -> Grid

:arg dims: :class:`Dims <engine.tensor.Dims>`.
:arg fmt: ``'ECR'`` (one block per output row, one thread per output) or
          ``'PECR'`` (one block per pooling-pack row, one thread per pooling
          output; ``dims`` must have a pooling window).
:arg cfg: :class:`ExecConfig` to check the grid's shared memory against, or
          ``None`` for no check.

A grid over the budget logs a warning the first time it is planned against
that budget and a debug message after that; the work still runs.

:raise ConfigError: for an unknown format, or from
                    :func:`pecr_n_o <engine.pecr.pecr_n_o>`.

"""
    fmt = fmt.upper()
    slot = dims.channels * dims.k_w * dims.k_h
    if fmt == 'ECR':
        o_w, o_h = dims.conv_out()
        grid = Grid(o_h, o_w, ecr_shared_bytes(o_w, slot))
    elif fmt == 'PECR':
        from .pecr import pack_counts
        n_w, n_h = pack_counts(dims)
        windows = dims.p_w * dims.p_h
        grid = Grid(n_h, n_w, pecr_shared_bytes(n_w, windows, slot))
    else:
        raise ConfigError('unknown format: \'{0}\' (expected one of {1})'
                          .format(fmt, ', '.join(FORMATS)))
    if cfg is not None:
        _check_capacity(grid, cfg)
    return grid


def _run (work_fn, block, thread):
    try:
        if thread is None:
            return work_fn(block)
        else:
            return work_fn(block, thread)
    except Exception as e:
        raise DispatchError(block, getattr(e, 'thread', thread), e) from e


def dispatch (grid, work_fn, cfg=None, per_thread=False):
    """Run work over a grid.

dispatch(grid, work_fn, cfg=ExecConfig(), per_thread=False)
    -> (outputs, counters)

:arg grid: :class:`Grid <engine.util.grid.Grid>` from :func:`plan`.
:arg work_fn: pure function returning ``(result, OpCount or None)``.  It is
              called as ``work_fn(block)`` for every block, or as
              ``work_fn(block, thread)`` for every thread if ``per_thread`` is
              true.
:arg cfg: :class:`ExecConfig`.
:arg per_thread: granularity of work items.

:return: ``outputs`` is a list of results in block order (a list of lists,
         block then thread, if ``per_thread``); ``counters`` is the merged
         :class:`OpCount <engine.metrics.OpCount>`.

:raise DispatchError: naming the failing block (and thread, if known); the
                      first failure in launch order is reported.

"""
    cfg = cfg or ExecConfig()
    if per_thread:
        items = list(grid.cells())
    else:
        items = [(b, None) for b in range(grid.blocks)]

    if cfg.workers == 1 or len(items) == 1:
        results = [_run(work_fn, b, t) for b, t in items]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda item: _run(work_fn, *item), items))

    counters = OpCount()
    outputs = []
    for (b, t), (result, counts) in zip(items, results):
        if counts is not None:
            counters = counters + counts
        if per_thread:
            if t == 0:
                outputs.append([])
            outputs[-1].append(result)
        else:
            outputs.append(result)
    return (outputs, counters)
