"""Chained convolution layers: the forward pass over a small network.

A network is a list of layers, each a convolution (``conv``) or a
convolution followed by pooling (``conv_pool``), with an optional ReLU in
between.  :func:`forward` runs it with one of three methods:

- ``'dense'``: dense convolution; every layer's input, filters and results
  make a round trip between host and device, and pooling is a separate pass.
- ``'ecr'``: ECR convolution.  The input goes to the device once and only the
  final result comes back; every intermediate map is converted to ECR again
  before the next layer.
- ``'pecr'``: fused PECR convolution, ReLU and pooling for ``conv_pool``
  layers with ReLU; other layers fall back to ``'ecr'``, and the fallback is
  recorded in the result.

Traffic is modeled with :func:`metrics.traffic <engine.metrics.traffic>`.

"""

import os
import json
import base64
import logging

import numpy as np

from .tensor import (FeatureMap, Filter, ConvConfig, PoolConfig, Dims,
                     dense_conv, im2col_conv, im2col_csr_conv, relu, pool,
                     sparsity, conv_output_dims)
from .metrics import OpCount, TrafficReport, traffic
from .ecr import ecr_conv
from .pecr import pecr_fused, pack_counts
from .util import (ShapeError, ConfigError, DimensionError, LayerError,
                   window_count)
from .util.rand import Xorshift

log = logging.getLogger(__name__)

#: Methods of :func:`forward`.
METHODS = ('dense', 'ecr', 'pecr')
#: Methods of :func:`multichannel_conv`.
CONV_METHODS = ('dense', 'im2col', 'im2col-csr', 'ecr')
#: Methods of :func:`multichannel_conv_pool`.
CONV_POOL_METHODS = ('dense-separate', 'ecr', 'pecr')


def _filters (filters):
    # list of Filter from Filters or an (out_ch, in_ch, k_h, k_w) array
    if isinstance(filters, Filter):
        return [filters]
    if isinstance(filters, np.ndarray):
        if filters.ndim != 4:
            raise ShapeError('expected (out_ch, in_ch, k_h, k_w) weights, '
                             'got shape {0}'.format(filters.shape))
        return [Filter(w) for w in filters]
    filters = list(filters)
    if not filters:
        raise ShapeError('no filters')
    return [f if isinstance(f, Filter) else Filter(f) for f in filters]


def multichannel_conv (fmap, filters, cfg=None, method='dense',
                       counters=None, exec_cfg=None):
    """Convolve with several filters, one output channel per filter.

multichannel_conv(fmap, filters, cfg=ConvConfig(), method='dense',
                  counters=None, exec_cfg=None) -> FeatureMap

:arg fmap: :class:`FeatureMap <engine.tensor.FeatureMap>`.
:arg filters: sequence of :class:`Filter <engine.tensor.Filter>`, or an
              ``(out_ch, in_ch, k_h, k_w)`` array.
:arg cfg: :class:`ConvConfig <engine.tensor.ConvConfig>`.
:arg method: one of :data:`CONV_METHODS`.
:arg counters: optional :class:`OpCount <engine.metrics.OpCount>`.
:arg exec_cfg: :class:`ExecConfig <engine.execmodel.ExecConfig>` for
               ``'ecr'``.

Every filter sums over all input channels, so this is the usual multi-channel
convolution layer.

:raise ShapeError: if a filter's channel count differs from the map's.

"""
    cfg = cfg or ConvConfig()
    filters = _filters(filters)
    if method == 'dense':
        outs = [dense_conv(fmap, f, cfg, counters) for f in filters]
    elif method == 'im2col':
        outs = [im2col_conv(fmap, f, cfg, counters) for f in filters]
    elif method == 'im2col-csr':
        outs = [im2col_csr_conv(fmap, f, cfg, counters) for f in filters]
    elif method == 'ecr':
        outs = [ecr_conv(fmap, f, cfg, counters, exec_cfg) for f in filters]
    else:
        raise ConfigError('unknown convolution method: \'{0}\' (expected one '
                          'of {1})'.format(method, ', '.join(CONV_METHODS)))
    return FeatureMap(np.concatenate([o.data for o in outs]))


def multichannel_conv_pool (fmap, filters, conv=None, pool_cfg=None,
                            method='dense-separate', counters=None,
                            exec_cfg=None):
    """Convolution, ReLU and pooling with several filters.

multichannel_conv_pool(fmap, filters, conv=ConvConfig(),
                       pool_cfg=PoolConfig(2, 2, 1), method='dense-separate',
                       counters=None, exec_cfg=None) -> FeatureMap

:arg method: ``'dense-separate'`` (:func:`dense_conv
             <engine.tensor.dense_conv>`, then ReLU, then :func:`pool
             <engine.tensor.pool>`), ``'ecr'`` (the same with ECR
             convolution) or ``'pecr'`` (:func:`pecr_fused
             <engine.pecr.pecr_fused>` per filter).

:raise ConfigError: for ``'pecr'`` if the dimensions do not tile exactly.

"""
    conv = conv or ConvConfig()
    pool_cfg = pool_cfg or PoolConfig(2, 2, 1)
    filters = _filters(filters)
    if method == 'pecr':
        outs = [pecr_fused(fmap, f, conv, pool_cfg, counters, exec_cfg)
                for f in filters]
        return FeatureMap(np.concatenate([o.data for o in outs]))
    elif method in ('dense-separate', 'ecr'):
        conv_method = 'dense' if method == 'dense-separate' else 'ecr'
        out = multichannel_conv(fmap, filters, conv, conv_method, counters,
                                exec_cfg)
        return pool(relu(out), pool_cfg)
    else:
        raise ConfigError('unknown convolution and pooling method: \'{0}\' '
                          '(expected one of {1})'
                          .format(method, ', '.join(CONV_POOL_METHODS)))


class LayerSpec (object):
    """One layer of a :class:`NetworkSpec`.

LayerSpec(kind, weights, conv=ConvConfig(), pool=None, activation='relu')

:arg kind: ``'conv'`` or ``'conv_pool'``.
:arg weights: ``(out_ch, in_ch, k_h, k_w)`` array of filter weights, or
              ``(in_ch, k_h, k_w)`` for a single filter.
:arg conv: :class:`ConvConfig <engine.tensor.ConvConfig>`.
:arg pool: :class:`PoolConfig <engine.tensor.PoolConfig>`; required for
           ``'conv_pool'``, not allowed for ``'conv'``.
:arg activation: ``'relu'`` or ``'none'``, applied after convolution and
                 before pooling.

"""

    kinds = ('conv', 'conv_pool')
    activations = ('relu', 'none')

    def __init__ (self, kind, weights, conv=None, pool=None,
                  activation='relu'):
        if kind not in self.kinds:
            raise ConfigError('unknown layer kind: \'{0}\''.format(kind))
        if activation not in self.activations:
            raise ConfigError('unknown activation: \'{0}\''
                              .format(activation))
        if kind == 'conv_pool' and pool is None:
            raise ConfigError('conv_pool layer needs a pooling window')
        if kind == 'conv' and pool is not None:
            raise ConfigError('conv layer cannot have a pooling window')
        weights = np.ascontiguousarray(weights, dtype=np.float32)
        if weights.ndim == 3:
            weights = weights[np.newaxis]
        if weights.ndim != 4 or 0 in weights.shape:
            raise ShapeError('expected (out_ch, in_ch, k_h, k_w) weights, got '
                             'shape {0}'.format(weights.shape))
        self.kind = kind
        #: ``(out_ch, in_ch, k_h, k_w)`` ``float32`` array.
        self.weights = weights
        self.conv = conv or ConvConfig()
        self.pool = pool
        self.activation = activation

    def __repr__ (self):
        return 'LayerSpec({0!r}, {1}x{2}x{3}x{4}, {5}, {6}, {7!r})'.format(
            self.kind, *(self.weights.shape + (self.conv, self.pool,
                                               self.activation)))

    @property
    def out_channels (self):
        return self.weights.shape[0]

    @property
    def in_channels (self):
        return self.weights.shape[1]

    @property
    def k_h (self):
        return self.weights.shape[2]

    @property
    def k_w (self):
        return self.weights.shape[3]

    def filters (self):
        """One :class:`Filter <engine.tensor.Filter>` per output channel."""
        return [Filter(w) for w in self.weights]

    def dims (self, shape):
        """:class:`Dims <engine.tensor.Dims>` of this layer on an input of
shape ``(channels, height, width)``."""
        c, h, w = shape
        p = ((None, None, None) if self.pool is None else
             (self.pool.p_w, self.pool.p_h, self.pool.stride))
        return Dims(w, h, self.k_w, self.k_h, self.conv.stride, *p,
                    channels=c)

    def output_shape (self, shape):
        """Output shape for an input of ``shape``.

output_shape(shape) -> (channels, height, width)

:raise ShapeError: if the channel count does not match the weights.
:raise DimensionError: if the kernel or pooling window does not fit.

"""
        c, h, w = shape
        if c != self.in_channels:
            raise ShapeError('layer takes {0} channels, got {1}'
                             .format(self.in_channels, c))
        o_w, o_h = conv_output_dims(w, h, self.k_w, self.k_h,
                                    self.conv.stride)
        if self.pool is not None:
            o_w = window_count(o_w, self.pool.p_w, self.pool.stride)
            o_h = window_count(o_h, self.pool.p_h, self.pool.stride)
        return (self.out_channels, o_h, o_w)

    def to_dict (self, weights_file=None):
        """JSON-compatible description.

to_dict(weights_file=None) -> dict

:arg weights_file: if given, the weights are referenced by this path
                   instead of inlined.

"""
        out_ch, in_ch, k_h, k_w = self.weights.shape
        d = {
            'kind': self.kind,
            'kernel': {'h': k_h, 'w': k_w, 'in_ch': in_ch, 'out_ch': out_ch},
            'strides': self.conv.stride,
            'activation': self.activation
        }
        if self.pool is not None:
            d['pool'] = {'h': self.pool.p_h, 'w': self.pool.p_w,
                         'stride': self.pool.stride, 'mode': self.pool.mode}
        if weights_file is None:
            raw = self.weights.astype('<f4').tobytes()
            d['weights'] = base64.b64encode(raw).decode('ascii')
        else:
            d['weights_file'] = weights_file
        return d

    @classmethod
    def from_dict (cls, d, base_dir='.'):
        """Build a layer from :meth:`to_dict` output.

from_dict(d, base_dir='.') -> LayerSpec

:arg base_dir: directory relative ``weights_file`` paths are resolved
               against.  The file holds raw little-endian ``float32``
               weights.

:raise ConfigError: for missing or malformed fields.

"""
        try:
            k = d['kernel']
            shape = (int(k['out_ch']), int(k['in_ch']), int(k['h']),
                     int(k['w']))
            if 'weights' in d:
                raw = base64.b64decode(d['weights'], validate=True)
            else:
                fn = os.path.join(base_dir, d['weights_file'])
                with open(fn, 'rb') as f:
                    raw = f.read()
            pool_cfg = None
            if d.get('pool') is not None:
                p = d['pool']
                pool_cfg = PoolConfig(int(p['w']), int(p['h']),
                                      int(p.get('stride', p['w'])),
                                      p.get('mode', 'max'))
            conv = ConvConfig(int(d.get('strides', 1)))
            kind = d['kind']
            activation = d.get('activation', 'relu')
        except (KeyError, TypeError, ValueError, OSError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError('malformed layer: {0}'.format(e))
        n = int(np.prod(shape))
        if len(raw) != n * 4:
            raise ConfigError('layer weights: expected {0} floats, got {1} '
                              'bytes'.format(n, len(raw)))
        weights = np.frombuffer(raw, dtype='<f4').astype(np.float32)
        return cls(kind, weights.reshape(shape), conv, pool_cfg, activation)


class NetworkSpec (object):
    """An ordered list of layers and the input shape they expect.

NetworkSpec(layers, input_shape)

:arg layers: sequence of :class:`LayerSpec`.
:arg input_shape: ``(channels, height, width)``.

:raise ConfigError: if a layer does not accept the previous layer's output;
                    the message names the layer.

"""

    def __init__ (self, layers, input_shape):
        self.layers = list(layers)
        if not self.layers:
            raise ConfigError('network has no layers')
        self.input_shape = tuple(int(v) for v in input_shape)
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except (ShapeError, DimensionError) as e:
                raise ConfigError('layer {0}: {1}'.format(i, e))

    def __repr__ (self):
        return 'NetworkSpec({0} layers, input {1})'.format(
            len(self.layers), 'x'.join(map(str, self.input_shape)))

    def shapes (self):
        """Input shape followed by every layer's output shape."""
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        return shapes

    @property
    def output_shape (self):
        return self.shapes()[-1]

    def to_dict (self):
        c, h, w = self.input_shape
        return {'input': {'channels': c, 'height': h, 'width': w},
                'layers': [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict (cls, d, base_dir='.'):
        """:raise ConfigError: for a malformed document."""
        try:
            inp = d['input']
            shape = (inp['channels'], inp['height'], inp['width'])
            layers = d['layers']
            if not isinstance(layers, list):
                raise TypeError('layers must be a list')
        except (KeyError, TypeError) as e:
            raise ConfigError('malformed network: {0}'.format(e))
        return cls([LayerSpec.from_dict(l, base_dir) for l in layers], shape)

    @classmethod
    def load (cls, path):
        """Load a JSON network document; ``weights_file`` paths are relative
to its directory."""
        try:
            with open(path) as f:
                d = json.load(f)
        except ValueError as e:
            raise ConfigError('{0}: invalid JSON: {1}'.format(path, e))
        return cls.from_dict(d, os.path.dirname(os.path.abspath(path)))

    def dump (self, path):
        """Write the network as JSON with inline weights."""
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)


class LayerTrace (object):
    """What one layer of :func:`forward` did.

:attr index: layer index.
:attr method: method that actually ran the layer (differs from the requested
              one after a fallback).
:attr output: the layer's output :class:`FeatureMap
              <engine.tensor.FeatureMap>`.
:attr counts: the layer's :class:`OpCount <engine.metrics.OpCount>`.
:attr traffic: the layer's :class:`TrafficReport
               <engine.metrics.TrafficReport>`.
:attr sparsity_in: sparsity of the layer input.
:attr sparsity_conv: sparsity of the convolution result, or ``None`` where it
                     is never materialised (fused layers).
:attr sparsity_act: sparsity after the activation, or ``None`` likewise.
:attr sparsity_out: sparsity of the layer output.

"""

    def __init__ (self, index, method, output, counts, traffic,
                  sparsity_in, sparsity_conv, sparsity_act):
        self.index = index
        self.method = method
        self.output = output
        self.counts = counts
        self.traffic = traffic
        self.sparsity_in = sparsity_in
        self.sparsity_conv = sparsity_conv
        self.sparsity_act = sparsity_act
        self.sparsity_out = sparsity(output)

    def __repr__ (self):
        return 'LayerTrace({0}, {1!r}, {2})'.format(self.index, self.method,
                                                    self.output)

    def to_dict (self):
        return {
            'index': self.index,
            'method': self.method,
            'shape': list(self.output.shape),
            'counts': self.counts.to_dict(),
            'traffic': self.traffic.to_dict(),
            'sparsity_in': self.sparsity_in,
            'sparsity_conv': self.sparsity_conv,
            'sparsity_act': self.sparsity_act,
            'sparsity_out': self.sparsity_out
        }


class ForwardResult (object):
    """Result of :func:`forward`.

:attr output: final :class:`FeatureMap <engine.tensor.FeatureMap>`.
:attr counts: :class:`OpCount <engine.metrics.OpCount>` over all layers.
:attr traffic: :class:`TrafficReport <engine.metrics.TrafficReport>` over all
               layers.
:attr layers: list of :class:`LayerTrace`.
:attr fallbacks: indices of layers that ran with ``'ecr'`` under ``'pecr'``.

"""

    def __init__ (self, method, output, counts, traffic, layers, fallbacks):
        self.method = method
        self.output = output
        self.counts = counts
        self.traffic = traffic
        self.layers = layers
        self.fallbacks = fallbacks


def _fuses (layer, dims):
    # whether the fused PECR pass can run this layer, or why not
    if layer.kind != 'conv_pool':
        return 'no pooling'
    if layer.activation != 'relu':
        return 'no ReLU to fold into the pooling'
    try:
        pack_counts(dims)
    except ConfigError as e:
        return str(e)
    return None


def _layer_traffic (layer, shape, out_shape, method, first, last):
    # separate: every layer goes host -> device -> host; a pooling layer
    # sends the convolution result round again for the pooling pass
    # ecr/pecr: only the network input (and all filters, layer by layer)
    # goes in and only the final result comes out
    inp = int(np.prod(shape))
    filt = layer.weights.size
    out = int(np.prod(out_shape))
    if layer.pool is None:
        conv_out = out
    else:
        o_w, o_h = layer.dims(shape).conv_out()
        conv_out = layer.out_channels * o_w * o_h
    pooled = layer.pool is not None
    if method == 'dense':
        if pooled:
            return traffic(h2d=inp + filt + conv_out, d2h=conv_out + out,
                           loads=inp + filt + conv_out,
                           stores=conv_out + out)
        return traffic(h2d=inp + filt, d2h=out, loads=inp + filt, stores=out)
    h2d = filt + (inp if first else 0)
    d2h = out if last else 0
    if method == 'pecr':
        return traffic(h2d=h2d, d2h=d2h, loads=inp + filt, stores=out)
    if pooled:
        return traffic(h2d=h2d, d2h=d2h, loads=inp + filt + conv_out,
                       stores=conv_out + out)
    return traffic(h2d=h2d, d2h=d2h, loads=inp + filt, stores=out)


def _run_layer (layer, fmap, method, exec_cfg, counters):
    # -> (output, sparsity of conv result, sparsity after activation)
    if method == 'pecr':
        out = multichannel_conv_pool(fmap, layer.filters(), layer.conv,
                                     layer.pool, 'pecr', counters, exec_cfg)
        return (out, None, None)
    out = multichannel_conv(fmap, layer.filters(), layer.conv, method,
                            counters, exec_cfg)
    s_conv = sparsity(out)
    if layer.activation == 'relu':
        out = relu(out)
    s_act = sparsity(out)
    if layer.pool is not None:
        out = pool(out, layer.pool)
    return (out, s_conv, s_act)


def forward (net, fmap, method='dense', exec_cfg=None):
    """Run a network.

forward(net, fmap, method='dense', exec_cfg=None) -> ForwardResult

:arg net: :class:`NetworkSpec`.
:arg fmap: input :class:`FeatureMap <engine.tensor.FeatureMap>` of shape
           ``net.input_shape``.
:arg method: one of :data:`METHODS`.
:arg exec_cfg: :class:`ExecConfig <engine.execmodel.ExecConfig>`.

Layers run in order; under ``'ecr'`` and ``'pecr'`` each layer converts its
input to the sparse format again before computing.  All three methods give
the same outputs at every layer.

:raise ConfigError: for an unknown method.
:raise ShapeError: if ``fmap`` does not have the network's input shape.
:raise LayerError: if a layer fails; the cause is chained.

"""
    if method not in METHODS:
        raise ConfigError('unknown method: \'{0}\' (expected one of {1})'
                          .format(method, ', '.join(METHODS)))
    if fmap.shape != net.input_shape:
        raise ShapeError('network takes {0}, got {1}'.format(
            'x'.join(map(str, net.input_shape)),
            'x'.join(map(str, fmap.shape))))
    total = OpCount()
    moved = TrafficReport()
    trace = []
    fallbacks = []
    n = len(net.layers)
    for i, layer in enumerate(net.layers):
        shape = fmap.shape
        layer_method = method
        if method == 'pecr':
            reason = _fuses(layer, layer.dims(shape))
            if reason is not None:
                log.info('layer %d: running ecr instead of pecr: %s', i,
                         reason)
                layer_method = 'ecr'
                fallbacks.append(i)
        counters = OpCount()
        s_in = sparsity(fmap)
        try:
            out, s_conv, s_act = _run_layer(layer, fmap, layer_method,
                                            exec_cfg, counters)
        except Exception as e:
            raise LayerError(i, e) from e
        layer_traffic = _layer_traffic(layer, shape, out.shape, layer_method,
                                       i == 0, i == n - 1)
        log.info('layer %d (%s, %s): %s -> %s, %s', i, layer.kind,
                 layer_method, 'x'.join(map(str, shape)),
                 'x'.join(map(str, out.shape)), counters)
        trace.append(LayerTrace(i, layer_method, out, counters,
                                layer_traffic, s_in, s_conv, s_act))
        total = total + counters
        moved = moved + layer_traffic
        fmap = out
    return ForwardResult(method, fmap, total, moved, trace, fallbacks)


# fixture networks


def _random_weights (rng, shape):
    n = int(np.prod(shape))
    w = np.array([rng.uniform_open0() for i in range(n)]) * 2 - 1
    return w.astype(np.float32).reshape(shape)


def toy_network (seed=0):
    """A four-layer network: two 3x3 ``conv_pool`` layers (2x2 max pooling,
stride 2) then two ``conv`` layers, all with ReLU, on a 1x22x22 input.

toy_network(seed=0) -> NetworkSpec

Weights are uniform in ``[-1, 1)`` from a seeded :class:`Xorshift
<engine.util.rand.Xorshift>`, so ReLU produces zeros.  Every ``conv_pool``
layer tiles exactly, so ``'pecr'`` fuses both of them.

"""
    rng = Xorshift(seed)
    p = PoolConfig(2, 2, 2)
    layers = [
        LayerSpec('conv_pool', _random_weights(rng, (4, 1, 3, 3)), pool=p),
        LayerSpec('conv_pool', _random_weights(rng, (4, 4, 3, 3)), pool=p),
        LayerSpec('conv', _random_weights(rng, (4, 4, 3, 3))),
        LayerSpec('conv', _random_weights(rng, (2, 4, 1, 1)))
    ]
    return NetworkSpec(layers, (1, 22, 22))


#: Convolutions per block of VGG-19.
VGG19_BLOCKS = (2, 2, 4, 4, 4)


def vgg_input_size (blocks=VGG19_BLOCKS):
    """Smallest input width for which :func:`vgg_network` ends in a 1x1 map.

Each block is ``n - 1`` valid 3x3 convolutions and a 3x3 convolution with 2x2
pooling at stride 2.

"""
    size = 1
    for n in reversed(blocks):
        size = 2 * size + 2 + 2 * (n - 1)
    return size


def vgg_network (seed=0, blocks=VGG19_BLOCKS, channels=(4, 8, 16, 16, 16),
                 in_channels=3):
    """A scaled-down network with the VGG-19 layer pattern.

vgg_network(seed=0, blocks=VGG19_BLOCKS, channels=(4, 8, 16, 16, 16),
            in_channels=3) -> NetworkSpec

:arg blocks: convolutions per block; the last of each block pools.
:arg channels: output channels of each block.

Convolutions are unpadded, so the input is :func:`vgg_input_size` square
(268 for the full pattern).

"""
    if len(channels) < len(blocks):
        raise ConfigError('need output channels for {0} blocks, got {1}'
                          .format(len(blocks), len(channels)))
    rng = Xorshift(seed)
    p = PoolConfig(2, 2, 2)
    layers = []
    c = in_channels
    for n, out_ch in zip(blocks, channels):
        if n < 1:
            raise ConfigError('a block needs at least one convolution')
        for i in range(n):
            w = _random_weights(rng, (out_ch, c, 3, 3))
            if i == n - 1:
                layers.append(LayerSpec('conv_pool', w, pool=p))
            else:
                layers.append(LayerSpec('conv', w))
            c = out_ch
    size = vgg_input_size(blocks)
    return NetworkSpec(layers, (in_channels, size, size))
