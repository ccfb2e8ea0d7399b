"""A number of utility functions and the engine's error types."""

import hashlib

import numpy as np

from . import grid, rand

# be sure to change util.rst
__all__ = ('ShapeError', 'DimensionError', 'ConfigError', 'FormatError',
           'MagicError', 'VersionError', 'PayloadError', 'DispatchError',
           'LayerError', 'pair', 'window_count', 'require_positive',
           'as_f32', 'checksum', 'max_abs_diff')


# errors


class ShapeError (ValueError):
    """Raised when channel counts or array lengths do not match."""

    pass


class DimensionError (ValueError):
    """Raised when a convolution or pooling window does not fit its map."""

    pass


class ConfigError (ValueError):
    """Raised for invalid configuration: strides, sparsity, PECR tiling,
malformed sweep or network documents."""

    pass


class FormatError (ValueError):
    """Raised when a compressed structure or a file is malformed."""

    pass


class MagicError (FormatError):
    """FMAP file does not start with the expected magic bytes."""

    pass


class VersionError (FormatError):
    """FMAP file has an unsupported version."""

    pass


class PayloadError (FormatError):
    """FMAP payload length does not match its header."""

    pass


class DispatchError (RuntimeError):
    """Raised when a work item fails during
:func:`dispatch <engine.execmodel.dispatch>`.

DispatchError(block, thread, exc)

:arg block: index of the block whose work failed.
:arg thread: index of the thread within the block, or ``None`` if the work
             item covered the whole block.
:arg exc: the exception raised by the work item; also set as ``__cause__``.

"""

    def __init__ (self, block, thread, exc):
        #: Failing block index.
        self.block = block
        #: Failing thread index, or ``None``.
        self.thread = thread
        where = 'block {0}'.format(block)
        if thread is not None:
            where += ', thread {0}'.format(thread)
        RuntimeError.__init__(self, '{0}: {1}'.format(where, exc))


class LayerError (RuntimeError):
    """Raised when a network layer fails during a forward pass.

LayerError(layer, exc)

"""

    def __init__ (self, layer, exc):
        #: Index of the failing layer.
        self.layer = layer
        RuntimeError.__init__(self, 'layer {0}: {1}'.format(layer, exc))


# abstract


def pair (x):
    """Expand a single number to ``(x, x)``; pass ``(x, y)`` through as a
tuple."""
    if isinstance(x, (int, np.integer)):
        return (int(x), int(x))
    x, y = x
    return (int(x), int(y))


def require_positive (**values):
    """Raise :class:`ConfigError` unless every keyword value is an integer
``>= 1``."""
    for name, v in sorted(values.items()):
        if int(v) != v or v < 1:
            raise ConfigError('{0} must be a positive integer, got {1!r}'
                              .format(name, v))


def window_count (size, window, stride):
    """Number of complete windows along one axis.

window_count(size, window, stride) -> n

Trailing elements that do not admit a full window are dropped.

:raise DimensionError: if ``window > size``.

"""
    if window > size:
        raise DimensionError('window {0} larger than extent {1}'
                             .format(window, size))
    return (size - window) // stride + 1


def as_f32 (values):
    """Return ``values`` as a C-contiguous ``float32`` array (no copy if it
already is one)."""
    return np.ascontiguousarray(values, dtype=np.float32)


def checksum (values):
    """SHA-256 hex digest of the little-endian ``float32`` bytes of
``values``.

``-0.0`` is normalised to ``0.0`` first, so results that compare equal give
equal checksums.

"""
    a = as_f32(values) + np.float32(0)
    return hashlib.sha256(a.astype('<f4').tobytes()).hexdigest()


def max_abs_diff (a, b):
    """Largest absolute elementwise difference between two arrays of the same
shape."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError('cannot compare shapes {0} and {1}'
                         .format(a.shape, b.shape))
    if a.size == 0:
        return 0.
    return float(np.max(np.abs(a - b)))
