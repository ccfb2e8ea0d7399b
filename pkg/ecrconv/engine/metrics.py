"""Operation counts, the theta figure of merit, and the traffic model.

Traffic is modeled in bytes, not seconds: each transfer between host and
device and each global-memory load or store of a whole tensor is counted once,
with every element :data:`conf.FLOAT_SIZE` bytes wide.

"""

from .conf import conf
from .tensor import conv_output_dims
from .util import ConfigError


class OpCount (object):
    """Multiplication and addition counters.

OpCount(multiplications=0, additions=0)

Counters are per call; merge them with ``+`` (or :meth:`merge`), which is
commutative and associative with ``OpCount()`` as the identity.

"""

    __slots__ = ('multiplications', 'additions')

    def __init__ (self, multiplications=0, additions=0):
        if multiplications < 0 or additions < 0:
            raise ValueError('counts must be non-negative')
        self.multiplications = int(multiplications)
        self.additions = int(additions)

    def __repr__ (self):
        return 'OpCount({0}, {1})'.format(self.multiplications,
                                          self.additions)

    def __eq__ (self, other):
        if not isinstance(other, OpCount):
            return NotImplemented
        return self.as_tuple() == other.as_tuple()

    def __hash__ (self):
        return hash(self.as_tuple())

    def __add__ (self, other):
        return self.merge(other)

    def as_tuple (self):
        """``(multiplications, additions)``."""
        return (self.multiplications, self.additions)

    def tally (self, multiplications, additions=0):
        """Add to the counters in place."""
        self.multiplications += int(multiplications)
        self.additions += int(additions)

    def merge (self, other):
        """Componentwise sum, as a new instance."""
        return OpCount(self.multiplications + other.multiplications,
                       self.additions + other.additions)

    def to_dict (self):
        return {'multiplications': self.multiplications,
                'additions': self.additions}


class TrafficReport (object):
    """Modeled data movement, in bytes.

TrafficReport(host_to_device_bytes=0, device_to_host_bytes=0,
              global_loads_bytes=0, global_stores_bytes=0)

"""

    fields = ('host_to_device_bytes', 'device_to_host_bytes',
              'global_loads_bytes', 'global_stores_bytes')

    def __init__ (self, host_to_device_bytes=0, device_to_host_bytes=0,
                  global_loads_bytes=0, global_stores_bytes=0):
        values = (host_to_device_bytes, device_to_host_bytes,
                  global_loads_bytes, global_stores_bytes)
        if any(v < 0 for v in values):
            raise ValueError('traffic must be non-negative')
        for k, v in zip(self.fields, values):
            setattr(self, k, int(v))

    def __repr__ (self):
        return 'TrafficReport({0})'.format(', '.join(
            '{0}={1}'.format(k, getattr(self, k)) for k in self.fields))

    def __eq__ (self, other):
        if not isinstance(other, TrafficReport):
            return NotImplemented
        return self.as_tuple() == other.as_tuple()

    def __hash__ (self):
        return hash(self.as_tuple())

    def __add__ (self, other):
        return TrafficReport(*(a + b for a, b in zip(self.as_tuple(),
                                                     other.as_tuple())))

    def as_tuple (self):
        return tuple(getattr(self, k) for k in self.fields)

    @property
    def transfer_bytes (self):
        """Bytes crossing the host/device link in either direction."""
        return self.host_to_device_bytes + self.device_to_host_bytes

    @property
    def global_bytes (self):
        """Bytes loaded from or stored to device global memory."""
        return self.global_loads_bytes + self.global_stores_bytes

    @property
    def total_bytes (self):
        return self.transfer_bytes + self.global_bytes

    @property
    def transfer_floats (self):
        """:attr:`transfer_bytes` in elements."""
        return self.transfer_bytes // conf.FLOAT_SIZE

    def to_dict (self):
        d = dict(zip(self.fields, self.as_tuple()))
        d['transfer_floats'] = self.transfer_floats
        d['total_bytes'] = self.total_bytes
        return d


def traffic (h2d=0, d2h=0, loads=0, stores=0):
    """Build a :class:`TrafficReport` from element counts.

traffic(h2d=0, d2h=0, loads=0, stores=0) -> TrafficReport

"""
    b = conf.FLOAT_SIZE
    return TrafficReport(h2d * b, d2h * b, loads * b, stores * b)


# op counts


def _windows (i_w, i_h, k_w, k_h, c_s):
    o_w, o_h = conv_output_dims(i_w, i_h, k_w, k_h, c_s)
    return o_w * o_h


def dense_muls (i_w, i_h, k_w, k_h, c_s=1, channels=1):
    """Multiplications of a dense convolution.

dense_muls(i_w, i_h, k_w, k_h, c_s=1, channels=1) -> count

``o_w * o_h * k_w * k_h`` per channel.

"""
    return _windows(i_w, i_h, k_w, k_h, c_s) * channels * k_w * k_h


def dense_adds (i_w, i_h, k_w, k_h, c_s=1, channels=1):
    """Additions of a dense convolution.

dense_adds(i_w, i_h, k_w, k_h, c_s=1, channels=1) -> count

``o_w * o_h * (k_w * k_h - 1)`` for one channel.  A multi-channel window is
one sum of ``channels * k_w * k_h`` products, so in general this is
``o_w * o_h * (channels * k_w * k_h - 1)``.

"""
    return _windows(i_w, i_h, k_w, k_h, c_s) * (channels * k_w * k_h - 1)


def dense_counts (dims):
    """Dense :class:`OpCount` for a :class:`Dims
<engine.tensor.Dims>`."""
    args = (dims.i_w, dims.i_h, dims.k_w, dims.k_h, dims.c_s, dims.channels)
    return OpCount(dense_muls(*args), dense_adds(*args))


def theta (sparsity, width):
    """Sparsity per unit width.

theta(sparsity, width) -> value

:return: ``sparsity * 100 / width``.

"""
    if width <= 0:
        raise ConfigError('width must be positive, got {0}'.format(width))
    return sparsity * 100. / width


def reduction_report (dense, sparse):
    """Percentage of dense work saved by the sparse method.

reduction_report(dense, sparse) -> {'multiplications': pct, 'additions': pct}

:arg dense,sparse: :class:`OpCount` instances; ``dense`` counts must be
                   non-zero.

:return: ``(1 - sparse / dense) * 100`` for each counter.

"""
    if not dense.multiplications or not dense.additions:
        raise ConfigError('dense counts must be non-zero: {0}'.format(dense))
    return {
        'multiplications':
            (1. - float(sparse.multiplications) / dense.multiplications) * 100,
        'additions': (1. - float(sparse.additions) / dense.additions) * 100
    }


# traffic


def _tensor_sizes (dims):
    if not dims.has_pool:
        raise ConfigError('traffic model needs a pooling window')
    o_w, o_h = dims.conv_out()
    n_w, n_h = dims.pool_out()
    inp = dims.channels * dims.i_w * dims.i_h
    filt = dims.channels * dims.k_w * dims.k_h
    return (inp, filt, o_w * o_h, n_w * n_h)


def traffic_separate (dims):
    """Traffic of convolution and pooling run as separate device passes.

traffic_separate(dims) -> TrafficReport

The input and filter go to the device, the convolution result comes back to
the host and goes out again for pooling, then the pooled result comes back.

"""
    inp, filt, conv_out, pool_out = _tensor_sizes(dims)
    return traffic(h2d=inp + filt + conv_out, d2h=conv_out + pool_out,
                   loads=inp + filt + conv_out, stores=conv_out + pool_out)


def traffic_fused (dims):
    """Traffic of fused convolution and pooling.

traffic_fused(dims) -> TrafficReport

One transfer of the input and filter in, one of the pooled result out; the
convolution result never leaves the block.

"""
    inp, filt, conv_out, pool_out = _tensor_sizes(dims)
    return traffic(h2d=inp + filt, d2h=pool_out, loads=inp + filt,
                   stores=pool_out)


def traffic_resident (dims):
    """Traffic of convolution and pooling as two device passes with the
convolution result kept in device memory.

traffic_resident(dims) -> TrafficReport

No extra transfers, but the convolution result is stored to and loaded back
from global memory between the passes.

"""
    inp, filt, conv_out, pool_out = _tensor_sizes(dims)
    return traffic(h2d=inp + filt, d2h=pool_out, loads=inp + filt + conv_out,
                   stores=conv_out + pool_out)


def traffic_conv (dims):
    """Traffic of a convolution on its own: input and filter in, result out.

traffic_conv(dims) -> TrafficReport

"""
    o_w, o_h = dims.conv_out()
    inp = dims.channels * dims.i_w * dims.i_h
    filt = dims.channels * dims.k_w * dims.k_h
    return traffic(h2d=inp + filt, d2h=o_w * o_h, loads=inp + filt,
                   stores=o_w * o_h)


def traffic_im2col_csr (dims, nnz):
    """Traffic of a convolution run as im2col, CSR compression and a sparse
matrix-vector product, each its own device pass.

traffic_im2col_csr(dims, nnz) -> TrafficReport

:arg dims: :class:`Dims <engine.tensor.Dims>`.
:arg nnz: nonzeros of the extended matrix.

The extended matrix is stored by the first pass and loaded by the second,
which stores the CSR values, column indices and row pointers for the third
pass to load with the filter.  Transfers are those of :func:`traffic_conv`.

"""
    o_w, o_h = dims.conv_out()
    rows = o_w * o_h
    inp = dims.channels * dims.i_w * dims.i_h
    filt = dims.channels * dims.k_w * dims.k_h
    f, i = conf.FLOAT_SIZE, conf.INDEX_SIZE
    extended = rows * filt * f
    csr = nnz * (f + i) + (rows + 1) * i
    return TrafficReport((inp + filt) * f, rows * f,
                         inp * f + extended + csr + filt * f,
                         extended + csr + rows * f)
