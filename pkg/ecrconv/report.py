"""Run reports: what one command computed, and how.

A :class:`RunReport` is written as JSON; sweep and analysis results are
written as CSV with a fixed column order.

"""

import csv
import json
import time

from .engine import conf
from .engine.metrics import OpCount, TrafficReport
from .engine.util import checksum


class Timer (object):
    """Context manager measuring wall time in nanoseconds.

Wall time is informational only; it depends on the machine.

"""

    def __init__ (self):
        #: Elapsed nanoseconds, set on exit.
        self.ns = None

    def __enter__ (self):
        self._start = time.perf_counter_ns()
        return self

    def __exit__ (self, *exc):
        self.ns = time.perf_counter_ns() - self._start


class RunReport (object):
    """Report of one convolution, fused convolution or network run.

RunReport(method, dims, workers, wall_ns, counts, traffic, grid, output,
          **extra)

:arg method: method name.
:arg dims: :class:`Dims <engine.tensor.Dims>`, or a dict for a network.
:arg workers: worker count the run used.
:arg wall_ns: wall time in nanoseconds.
:arg counts: :class:`OpCount <engine.metrics.OpCount>`.
:arg traffic: :class:`TrafficReport <engine.metrics.TrafficReport>`.
:arg grid: ``(blocks, threads_per_block)``.
:arg output: output :class:`FeatureMap <engine.tensor.FeatureMap>`; only its
             shape, sparsity and checksum are kept.
:arg extra: further JSON-compatible fields (fallbacks, layer trace...).

"""

    def __init__ (self, method, dims, workers, wall_ns, counts, traffic,
                  grid, output, **extra):
        self.schema = conf.REPORT_SCHEMA
        self.method = method
        self.dims = dims
        self.workers = workers
        self.wall_ns = wall_ns
        self.counts = counts or OpCount()
        self.traffic = traffic or TrafficReport()
        self.grid = tuple(grid)
        self.shape = tuple(output.shape)
        self.checksum = checksum(output.data)
        self.extra = extra

    def to_dict (self):
        dims = self.dims
        if hasattr(dims, '_asdict'):
            dims = dims._asdict()
        d = {
            'schema': self.schema,
            'method': self.method,
            'dims': dims,
            'workers': self.workers,
            'wall_ns': self.wall_ns,
            'counts': self.counts.to_dict(),
            'traffic': self.traffic.to_dict(),
            'grid': {'blocks': self.grid[0], 'threads': self.grid[1]},
            'output_shape': list(self.shape),
            'checksum': self.checksum
        }
        d.update(self.extra)
        return d

    def dumps (self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write (self, path):
        """Write as JSON."""
        with open(path, 'w') as f:
            f.write(self.dumps())
            f.write('\n')


def write_csv (f, columns, rows):
    """Write dict rows to an open file with a header, in the given column
order; missing values are written empty."""
    out = csv.DictWriter(f, fieldnames=columns, restval='',
                         lineterminator='\n')
    out.writeheader()
    for row in rows:
        out.writerow(row)
