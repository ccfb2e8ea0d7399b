"""Feature-map files, synthetic maps, fixtures and brute-force oracles.

FMAP file layout (all little-endian)::

    4 bytes   magic, ``b'FMAP'``
    u32       version, currently 1
    u32 x 3   channels, height, width
    f32 x N   payload, N = channels * height * width, channel-major row-major

The CSV alternative has a ``channels,height,width`` header line, a line with
those three numbers, then one line per map row (channel after channel), one
value per cell.

The oracles here enumerate windows with plain loops and share no code with
the sparse formats, so they can be used to check them.

"""

import os
import csv
import math
import struct

import numpy as np

from .tensor import FeatureMap, Filter, ConvConfig, im2col_extend, sparsity
from .util import (ShapeError, ConfigError, FormatError, MagicError,
                   VersionError, PayloadError, require_positive, window_count)
from .util.rand import Xorshift

#: First four bytes of every FMAP file.
MAGIC = b'FMAP'
#: FMAP version written by :func:`save` and accepted by :func:`load`.
VERSION = 1
_HEADER = struct.Struct('<4sIIII')
#: Extensions :func:`load_any` understands.
EXTENSIONS = ('.fmap', '.csv', '.npy')
CSV_HEADER = ('channels', 'height', 'width')


# FMAP


def encode (fmap):
    """FMAP file contents of a map, as bytes."""
    c, h, w = fmap.shape
    return (_HEADER.pack(MAGIC, VERSION, c, h, w) +
            fmap.data.astype('<f4').tobytes())


def decode (data, name='<bytes>'):
    """Parse FMAP file contents.

decode(data, name='<bytes>') -> FeatureMap

:arg name: used in error messages.

:raise MagicError: if the magic bytes are wrong (or the data is shorter than
                   them).
:raise VersionError: for any version other than :data:`VERSION`.
:raise PayloadError: if the header is cut short, has a zero dimension, or the
                     payload length does not match it.

"""
    if data[:4] != MAGIC:
        raise MagicError('{0}: bad magic {1!r}'.format(name, bytes(data[:4])))
    if len(data) < _HEADER.size:
        raise PayloadError('{0}: truncated header ({1} bytes)'
                           .format(name, len(data)))
    _, version, c, h, w = _HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionError('{0}: unsupported version {1} (expected {2})'
                           .format(name, version, VERSION))
    if 0 in (c, h, w):
        raise PayloadError('{0}: empty map {1}x{2}x{3}'.format(name, c, h, w))
    expected = c * h * w * 4
    got = len(data) - _HEADER.size
    if got != expected:
        raise PayloadError('{0}: payload is {1} bytes, header needs {2}'
                           .format(name, got, expected))
    values = np.frombuffer(data, dtype='<f4', offset=_HEADER.size)
    return FeatureMap(values.astype(np.float32).reshape(c, h, w))


def load (path):
    """Load an FMAP file.

load(path) -> FeatureMap

:raise FormatError: a :class:`MagicError`, :class:`VersionError` or
                    :class:`PayloadError` for malformed files.

"""
    with open(path, 'rb') as f:
        data = f.read()
    return decode(data, path)


def save (fmap, path):
    """Write a map as an FMAP file; :func:`load` gives back identical
bits."""
    with open(path, 'wb') as f:
        f.write(encode(fmap))


# CSV


def load_csv (path):
    """Load a map written by :func:`save_csv`.

load_csv(path) -> FeatureMap

:raise FormatError: for a missing header or non-numeric cells.
:raise ShapeError: if the cell count does not match the header.

"""
    with open(path, newline='') as f:
        rows = [r for r in csv.reader(f) if r]
    if rows and tuple(cell.strip() for cell in rows[0]) == CSV_HEADER:
        rows = rows[1:]
    if not rows or len(rows[0]) != 3:
        raise FormatError('{0}: expected a channels,height,width line'
                          .format(path))
    try:
        c, h, w = (int(v) for v in rows[0])
        values = [float(v) for row in rows[1:] for v in row]
    except ValueError as e:
        raise FormatError('{0}: {1}'.format(path, e))
    return FeatureMap.from_values(values, c, h, w)


def save_csv (fmap, path):
    """Write a map as CSV.  Values are written in full precision, so loading
gives back identical ``float32`` values."""
    c, h, w = fmap.shape
    with open(path, 'w', newline='') as f:
        out = csv.writer(f)
        out.writerow(CSV_HEADER)
        out.writerow((c, h, w))
        for row in fmap.data.reshape(c * h, w):
            out.writerow([repr(float(v)) for v in row])


def load_npy (path):
    """Load a NumPy ``.npy`` array of shape ``(h, w)`` or ``(c, h, w)``."""
    try:
        data = np.load(path, allow_pickle=False)
    except ValueError as e:
        raise FormatError('{0}: {1}'.format(path, e))
    return FeatureMap(data)


def load_any (path):
    """Load a map, choosing the reader by file extension.

load_any(path) -> FeatureMap

:raise FormatError: for an unknown extension, or from the reader.

"""
    ext = os.path.splitext(path)[1].lower()
    if ext == '.fmap':
        return load(path)
    elif ext == '.csv':
        return load_csv(path)
    elif ext == '.npy':
        return load_npy(path)
    else:
        raise FormatError('{0}: unknown extension (expected one of {1})'
                          .format(path, ', '.join(EXTENSIONS)))


def load_dir (path):
    """Load every map in a directory.

load_dir(path) -> [(name, result)]

:return: one entry per file with an extension in :data:`EXTENSIONS`, in
         sorted name order; ``result`` is the :class:`FeatureMap`, or the
         exception raised while loading it.  Other files are skipped.

Harvested feature maps (for example saved by a framework as ``.npy``) go
through the same path.

"""
    results = []
    for name in sorted(os.listdir(path)):
        fn = os.path.join(path, name)
        if (not os.path.isfile(fn) or
            os.path.splitext(name)[1].lower() not in EXTENSIONS):
            continue
        try:
            results.append((name, load_any(fn)))
        except (ValueError, OSError) as e:
            results.append((name, e))
    return results


# generation


def zero_count (n, s):
    """``floor(s * n)``, robust to the representation error of ``s``."""
    return min(n, int(math.floor(s * n + 1e-9)))


def generate (height, width, channels=1, sparsity=0.7, seed=0):
    """Generate a sparse map with an exact number of zeros.

generate(height, width, channels=1, sparsity=0.7, seed=0) -> FeatureMap

:arg sparsity: fraction in ``[0, 1]``; exactly ``floor(sparsity * N)`` of the
               ``N`` elements are zero.

Every element is first drawn uniform in ``(0, 1]`` in flat order, then the
positions to zero are the first ``floor(sparsity * N)`` entries of a seeded
shuffle of ``range(N)``.  The same seed always gives the same map.

:raise ConfigError: if ``sparsity`` is outside ``[0, 1]`` or a dimension is
                    not positive.

"""
    require_positive(height=height, width=width, channels=channels)
    if not 0 <= sparsity <= 1:
        raise ConfigError('sparsity must be in [0, 1], got {0}'
                          .format(sparsity))
    n = channels * height * width
    rng = Xorshift(seed)
    values = np.array([rng.uniform_open0() for i in range(n)],
                      dtype=np.float32)
    positions = rng.shuffle(list(range(n)))
    values[positions[:zero_count(n, sparsity)]] = 0
    return FeatureMap(values.reshape(channels, height, width))


def random_filter (k_h, k_w, channels=1, seed=0, signed=True):
    """Seeded filter with weights uniform in ``(0, 1]`` (``[-1, 1)`` shifted
if ``signed``)."""
    require_positive(k_h=k_h, k_w=k_w, channels=channels)
    rng = Xorshift(seed)
    w = np.array([rng.uniform_open0() for i in range(channels * k_h * k_w)])
    if signed:
        w = w * 2 - 1
    return Filter(w.astype(np.float32).reshape(channels, k_h, k_w))


# fixtures


_F5 = ((1, 0, 0, 2, 0),
       (0, 0, 3, 0, 0),
       (0, 4, 0, 0, 5),
       (0, 0, 6, 0, 0),
       (7, 0, 0, 8, 0))
_K3 = ((1, 2, 3),
       (4, 5, 6),
       (7, 8, 9))


def _frozen (values):
    a = np.array(values, dtype=np.float32)
    a.flags.writeable = False
    return a


def fixture_f5 ():
    """The 5x5 single-channel fixture map (sparsity 0.68).  Read-only."""
    return FeatureMap(_frozen(_F5))


def fixture_k3 ():
    """The 3x3 fixture kernel with weights 1 to 9.  Read-only."""
    return Filter(_frozen(_K3))


# oracles


def oracle_window_nnz (fmap, k_w, k_h, stride=1):
    """Nonzeros in every convolution window, by plain enumeration.

oracle_window_nnz(fmap, k_w, k_h, stride=1) -> counts

:return: ``(o_h, o_w)`` integer array, window origins in raster order;
         counts are summed over channels.

:raise DimensionError: if the kernel does not fit.

"""
    o_w = window_count(fmap.width, k_w, stride)
    o_h = window_count(fmap.height, k_h, stride)
    counts = np.zeros((o_h, o_w), dtype=np.int64)
    for y in range(o_h):
        for x in range(o_w):
            win = fmap.data[:, y * stride:y * stride + k_h,
                            x * stride:x * stride + k_w]
            counts[y, x] = np.count_nonzero(win)
    return counts


def _origins (size, window, stride):
    # every origin of a complete window, by walking the axis
    n = 0
    pos = 0
    while pos + window <= size:
        n += 1
        pos += stride
    return n


def oracle_pool_windows (dims):
    """Pooling windows over the convolution output, by walking each axis.

oracle_pool_windows(dims) -> (n_w, n_h)

:arg dims: :class:`Dims <engine.tensor.Dims>` with a pooling window.

"""
    if not dims.has_pool:
        raise ConfigError('dims have no pooling window')
    o_w = _origins(dims.i_w, dims.k_w, dims.c_s)
    o_h = _origins(dims.i_h, dims.k_h, dims.c_s)
    return (_origins(o_w, dims.p_w, dims.p_s),
            _origins(o_h, dims.p_h, dims.p_s))


def sparsity_profile (maps, k_w, k_h, stride=1):
    """Raw and im2col sparsity of each map.

sparsity_profile(maps, k_w, k_h, stride=1) -> [(raw, im2col)]

``im2col`` is the zero fraction of the extended matrix, in which every
element appears once per window covering it.

"""
    cfg = ConvConfig(stride)
    result = []
    for fmap in maps:
        if not isinstance(fmap, FeatureMap):
            raise ShapeError('expected a FeatureMap, got {0!r}'.format(fmap))
        result.append((sparsity(fmap),
                       sparsity(im2col_extend(fmap, k_w, k_h, cfg))))
    return result
