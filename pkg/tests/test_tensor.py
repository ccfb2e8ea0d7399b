import pytest
import numpy as np

from ecrconv.engine.tensor import (Dims, ConvConfig, PoolConfig, FeatureMap,
                                   Filter, check_pair, conv_output_dims,
                                   dense_conv, relu, pool, im2col_extend,
                                   im2col_conv, im2col_csr, im2col_csr_conv,
                                   sparsity)
from ecrconv.engine.metrics import OpCount
from ecrconv.engine.ecr import ecr_conv
from ecrconv.engine.dataset import generate, random_filter, oracle_window_nnz
from ecrconv.engine.util import ShapeError, DimensionError, ConfigError
from ecrconv.engine.util.rand import Xorshift

F5_K3 = [[51, 49, 61],
         [83, 70, 75],
         [93, 106, 103]]


def test_conv_output_dims ():
    assert conv_output_dims(5, 5, 3, 3) == (3, 3)
    assert conv_output_dims(11, 11, 3, 3, 2) == (5, 5)
    # trailing column dropped
    assert conv_output_dims(6, 5, 3, 3, 2) == (2, 2)
    with pytest.raises(DimensionError):
        conv_output_dims(3, 3, 5, 5)
    with pytest.raises(ConfigError):
        conv_output_dims(5, 5, 3, 3, 0)


def test_feature_map_layout ():
    fmap = FeatureMap.from_values(range(24), 2, 3, 4)
    assert fmap.shape == (2, 3, 4)
    assert fmap.data.dtype == np.float32
    assert fmap.offset(1, 2, 3) == 23
    assert fmap.index(17) == (1, 1, 1)
    assert fmap.values[fmap.offset(1, 0, 2)] == 14
    with pytest.raises(ShapeError):
        FeatureMap.from_values(range(5), 1, 2, 2)
    with pytest.raises(ShapeError):
        FeatureMap(np.zeros((2, 2, 2, 2)))


def test_filter_weights_order ():
    filt = Filter.from_values(range(18), 2, 3, 3)
    assert (filt.channels, filt.k_h, filt.k_w) == (2, 3, 3)
    # weights[c * k_h * k_w + i * k_w + j]
    assert filt.weights[1 * 9 + 2 * 3 + 1] == filt.data[1, 2, 1]


def test_check_pair (f5, k3):
    check_pair(f5, k3)
    with pytest.raises(ShapeError):
        check_pair(f5, Filter(np.ones((2, 3, 3))))
    with pytest.raises(DimensionError):
        check_pair(FeatureMap(np.ones((2, 2))), k3)


def test_dense_conv_fixture (f5, k3):
    out = dense_conv(f5, k3)
    assert out.shape == (1, 3, 3)
    assert out.data[0].tolist() == F5_K3


def test_dense_conv_counts_every_operation (f5, k3):
    counters = OpCount()
    dense_conv(f5, k3, counters=counters)
    assert counters.as_tuple() == (81, 72)


def test_dense_conv_stride ():
    fmap = FeatureMap(np.arange(49, dtype=np.float32).reshape(7, 7))
    filt = Filter(np.ones((2, 2)))
    out = dense_conv(fmap, filt, ConvConfig(3))
    assert out.shape == (1, 2, 2)
    # window at (3, 3): 24 + 25 + 31 + 32
    assert out.data[0, 1, 1] == 112


def test_dense_conv_multichannel_sums_channels ():
    x = np.stack([np.ones((4, 4)), 2 * np.ones((4, 4))])
    out = dense_conv(FeatureMap(x), Filter(np.ones((2, 3, 3))))
    assert np.all(out.data == 27)


def test_relu_zeroes_negatives_and_negative_zero ():
    out = relu(FeatureMap(np.array([[-1., -0., 0., 2.]])))
    assert out.data[0].tolist() == [[0, 0, 0, 2]]
    assert not np.signbit(out.data).any()


def test_max_pool (f5, k3):
    out = pool(dense_conv(f5, k3), PoolConfig(2, 2, 1))
    assert out.data[0].tolist() == [[83, 75], [106, 106]]


def test_mean_pool (f5, k3):
    out = pool(dense_conv(f5, k3), PoolConfig(2, 2, 1, 'mean'))
    assert out.data[0].tolist() == [[63.25, 63.75], [88, 88.5]]


def test_pool_drops_partial_windows ():
    out = pool(FeatureMap(np.arange(25.).reshape(5, 5)), PoolConfig(2))
    assert out.data[0].tolist() == [[6, 8], [16, 18]]


def test_pool_config_validation ():
    assert PoolConfig(3).stride == 3
    with pytest.raises(ConfigError):
        PoolConfig(2, mode='stochastic')
    with pytest.raises(ConfigError):
        PoolConfig(2, stride=0)
    with pytest.raises(DimensionError):
        pool(FeatureMap(np.ones((1, 1))), PoolConfig(2))


def test_im2col_extend_fixture (f5):
    cols = im2col_extend(f5, 3, 3)
    assert cols.shape == (9, 9)
    assert cols[0].tolist() == [1, 0, 0, 0, 0, 3, 0, 4, 0]
    assert np.count_nonzero(cols) == 27


def test_im2col_conv_matches_dense (f5, k3):
    counters = OpCount()
    out = im2col_conv(f5, k3, counters=counters)
    assert out.data[0].tolist() == F5_K3
    assert counters.as_tuple() == (81, 72)


def test_sparsity (f5):
    assert sparsity(f5) == 0.68
    assert sparsity(np.array([0., -0., 1., 2.])) == 0.5
    with pytest.raises(ShapeError):
        sparsity(np.array([]))


def test_dims ():
    d = Dims(5, 5, 3, 3, 1, 2, 2, 1)
    assert d.has_pool
    assert d.conv_out() == (3, 3)
    assert d.pool_out() == (2, 2)
    plain = Dims(5, 5, 3, 3)
    assert not plain.has_pool
    with pytest.raises(ConfigError):
        plain.pool_out()
    assert plain.with_pool(2, 2, 1) == d


def signed_map (h, w, channels=1, seed=0):
    # values in [-1, 1)
    return FeatureMap(random_filter(h, w, channels, seed).data)


def loop_relu (fmap):
    return [[[v if v > 0 else 0. for v in row] for row in ch]
            for ch in fmap.data.tolist()]


def loop_pool (fmap, cfg):
    x = fmap.data
    C, H, W = x.shape
    n_h = (H - cfg.p_h) // cfg.stride + 1
    n_w = (W - cfg.p_w) // cfg.stride + 1
    out = np.zeros((C, n_h, n_w), dtype=np.float32)
    for c in range(C):
        for y in range(n_h):
            for x0 in range(n_w):
                win = [x[c, y * cfg.stride + i, x0 * cfg.stride + j]
                       for i in range(cfg.p_h) for j in range(cfg.p_w)]
                if cfg.mode == 'max':
                    out[c, y, x0] = max(win)
                else:
                    acc = win[0]
                    for v in win[1:]:
                        acc = np.float32(acc + v)
                    out[c, y, x0] = acc / np.float32(len(win))
    return out


@pytest.mark.parametrize('seed', range(5))
def test_relu_matches_loop (seed):
    fmap = signed_map(7, 9, 2, seed)
    out = relu(fmap)
    assert out.data.tolist() == loop_relu(fmap)
    assert np.array_equal(relu(out).data, out.data)


def test_relu_of_negative_map ():
    out = relu(FeatureMap(-np.ones((3, 4))))
    assert not out.data.any()


POOL_CONFIGS = [PoolConfig(2), PoolConfig(2, 2, 1), PoolConfig(3, 2, 2),
                PoolConfig(2, mode='mean'), PoolConfig(3, 3, 1, 'mean')]


@pytest.mark.parametrize('cfg', POOL_CONFIGS)
@pytest.mark.parametrize('seed', range(3))
def test_pool_matches_loop (cfg, seed):
    fmap = signed_map(8, 9, 2, seed)
    assert np.array_equal(pool(fmap, cfg).data, loop_pool(fmap, cfg))


@pytest.mark.parametrize('mode', PoolConfig.modes)
@pytest.mark.parametrize('window', [(2, 2, 2), (3, 3, 1), (2, 3, 1)])
def test_pool_keeps_constants (mode, window):
    fmap = FeatureMap(np.full((2, 6, 6), 3.5))
    out = pool(fmap, PoolConfig(*window, mode=mode))
    assert np.all(out.data == 3.5)


def draw_im2col_points (n, seed=77):
    rng = Xorshift(seed)
    points = []
    for i in range(n):
        size = 5 + rng.below(16)
        k = (1, 3, 5)[rng.below(3)]
        points.append((size, k, 1 + rng.below(3), (1, 3)[rng.below(2)],
                       (0., 0.5, 0.9)[rng.below(3)], i))
    # the 8x8 single-channel case
    points.append((8, 3, 1, 1, 0., n))
    return points


@pytest.mark.parametrize('size,k,c_s,channels,s,seed',
                         draw_im2col_points(40))
def test_im2col_product_matches_dense (size, k, c_s, channels, s, seed):
    fmap = generate(size, size, channels, s, seed=seed)
    filt = random_filter(k, k, channels, seed=seed + 500)
    cfg = ConvConfig(c_s)
    cols = im2col_extend(fmap, k, k, cfg)
    product = cols.astype(np.float64) @ filt.weights.astype(np.float64)
    expected = dense_conv(fmap, filt, cfg).data.ravel()
    assert np.max(np.abs(product - expected)) <= 1e-5


def test_im2col_csr_fixture (f5):
    m = im2col_csr(f5, 3, 3)
    assert m.shape == (9, 9)
    assert m.nnz == 27
    per_row = np.diff(m.indptr)
    assert per_row.tolist() == oracle_window_nnz(f5, 3, 3).ravel().tolist()
    assert per_row[:3].tolist() == [3, 3, 3]
    assert m.indices[m.indptr[0]:m.indptr[1]].tolist() == [0, 5, 7]
    assert m.data[:3].tolist() == [1, 3, 4]


def test_im2col_csr_conv (f5, k3):
    counters = OpCount()
    out = im2col_csr_conv(f5, k3, counters=counters)
    assert out.data.dtype == np.float32
    assert np.allclose(out.data[0], F5_K3)
    # the same counts as ECR, fewer than dense
    assert counters.as_tuple() == (27, 18)


def test_im2col_csr_conv_of_zero_map (zeros5, k3):
    counters = OpCount()
    out = im2col_csr_conv(zeros5, k3, counters=counters)
    assert np.all(out.data == 0)
    assert counters.as_tuple() == (0, 0)


@pytest.mark.parametrize('size,k,c_s,channels,s,seed',
                         draw_im2col_points(12, seed=91))
def test_im2col_csr_conv_matches_dense_and_ecr (size, k, c_s, channels, s,
                                                seed):
    fmap = generate(size, size, channels, s, seed=seed)
    filt = random_filter(k, k, channels, seed=seed + 500)
    cfg = ConvConfig(c_s)
    csr_counts, ecr_counts = OpCount(), OpCount()
    out = im2col_csr_conv(fmap, filt, cfg, csr_counts)
    expected = dense_conv(fmap, filt, cfg).data
    assert np.max(np.abs(out.data - expected)) <= 1e-5
    ecr_conv(fmap, filt, cfg, ecr_counts)
    assert csr_counts == ecr_counts
