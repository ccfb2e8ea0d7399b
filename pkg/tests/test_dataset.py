import struct

import pytest
import numpy as np

from ecrconv.engine import dataset
from ecrconv.engine.tensor import FeatureMap, Dims, sparsity
from ecrconv.engine.util import (ConfigError, FormatError, MagicError,
                                 VersionError, PayloadError, DimensionError,
                                 ShapeError)


def f5_bytes ():
    return (b'FMAP' + struct.pack('<IIII', 1, 1, 5, 5) +
            np.array(dataset._F5, dtype='<f4').tobytes())


def test_fixtures (f5, k3):
    assert sparsity(f5) == 0.68
    assert k3.data[0].tolist() == [[1, 2, 3], [4, 5, 6], [7, 8, 9]]
    with pytest.raises(ValueError):
        f5.data[0, 0, 0] = 5
    assert dataset.fixture_f5().data[0, 0, 0] == 1


def test_decode_f5 (f5):
    assert dataset.decode(f5_bytes()).equals(f5)


def test_save_load_is_bit_exact (tmp_path):
    fmap = dataset.generate(7, 9, 3, 0.4, seed=11)
    x = fmap.data.copy()
    x[0, 0, :3] = [-0., np.float32(1e-40), np.float32(-3.5)]
    fmap = FeatureMap(x)
    path = str(tmp_path / 'm.fmap')
    dataset.save(fmap, path)
    loaded = dataset.load(path)
    assert loaded.data.tobytes() == fmap.data.tobytes()
    with open(path, 'rb') as f:
        assert f.read()[:4] == b'FMAP'


def test_load_errors_are_distinct (tmp_path):
    data = f5_bytes()
    with pytest.raises(MagicError):
        dataset.decode(b'PAMF' + data[4:])
    with pytest.raises(MagicError):
        dataset.decode(b'FM')
    with pytest.raises(VersionError):
        dataset.decode(data[:4] + struct.pack('<I', 2) + data[8:])
    with pytest.raises(PayloadError):
        dataset.decode(data[:-4])
    with pytest.raises(PayloadError):
        dataset.decode(data + b'\0\0\0\0')
    with pytest.raises(PayloadError):
        dataset.decode(data[:10])
    path = str(tmp_path / 'short.fmap')
    with open(path, 'wb') as f:
        f.write(data[:-1])
    with pytest.raises(PayloadError):
        dataset.load(path)
    assert issubclass(PayloadError, FormatError)


def test_csv_round_trip (tmp_path, f5):
    fmap = dataset.generate(4, 6, 2, 0.5, seed=2)
    path = str(tmp_path / 'm.csv')
    dataset.save_csv(fmap, path)
    assert dataset.load_csv(path).equals(fmap)
    with open(path) as f:
        lines = f.read().splitlines()
    assert lines[:2] == ['channels,height,width', '2,4,6']
    assert len(lines) == 2 + 2 * 4


def test_csv_errors (tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('channels,height,width\n1,2,2\n1,2\n3\n')
    with pytest.raises(ShapeError):
        dataset.load_csv(str(path))
    path.write_text('1,1,2\n1,x\n')
    with pytest.raises(FormatError):
        dataset.load_csv(str(path))


def test_load_any (tmp_path, f5):
    np.save(str(tmp_path / 'm.npy'), f5.data[0])
    assert dataset.load_any(str(tmp_path / 'm.npy')).equals(f5)
    with pytest.raises(FormatError):
        dataset.load_any(str(tmp_path / 'm.png'))


def test_load_dir (tmp_path, f5):
    dataset.save(f5, str(tmp_path / 'b.fmap'))
    dataset.save_csv(f5, str(tmp_path / 'a.csv'))
    (tmp_path / 'c.fmap').write_bytes(b'nope')
    (tmp_path / 'notes.txt').write_text('skipped')
    results = dataset.load_dir(str(tmp_path))
    assert [name for name, r in results] == ['a.csv', 'b.fmap', 'c.fmap']
    assert results[0][1].equals(f5)
    assert isinstance(results[2][1], MagicError)


def test_generate_exact_zero_count ():
    fmap = dataset.generate(32, 32, 1, 0.7, seed=42)
    assert np.count_nonzero(fmap.data == 0) == 716
    assert sparsity(fmap) == 716. / 1024


def test_generate_extremes ():
    assert not dataset.generate(5, 5, 1, 1.).data.any()
    full = dataset.generate(5, 5, 2, 0.)
    assert full.data.all()
    assert ((full.data > 0) & (full.data <= 1)).all()


def test_generate_is_deterministic ():
    a = dataset.generate(8, 8, 2, 0.5, seed=3)
    b = dataset.generate(8, 8, 2, 0.5, seed=3)
    c = dataset.generate(8, 8, 2, 0.5, seed=4)
    assert a.data.tobytes() == b.data.tobytes()
    assert not a.equals(c)


@pytest.mark.parametrize('s', [-0.1, 1.5])
def test_generate_rejects_bad_sparsity (s):
    with pytest.raises(ConfigError):
        dataset.generate(4, 4, 1, s)


def test_zero_count ():
    assert dataset.zero_count(100, 0.29) == 29
    assert dataset.zero_count(1024, 0.7) == 716
    assert dataset.zero_count(10, 1.) == 10


def test_oracle_window_nnz (f5, zeros5):
    counts = dataset.oracle_window_nnz(f5, 3, 3)
    assert counts.shape == (3, 3)
    assert counts[0, 0] == 3
    assert counts.sum() == 27
    assert not dataset.oracle_window_nnz(zeros5, 3, 3).any()
    ones = FeatureMap(np.ones((2, 6, 7)))
    assert (dataset.oracle_window_nnz(ones, 3, 2, 2) == 12).all()
    with pytest.raises(DimensionError):
        dataset.oracle_window_nnz(f5, 6, 3)


def test_oracle_pool_windows ():
    assert dataset.oracle_pool_windows(Dims(5, 5, 3, 3, 1, 2, 2, 1)) == (2, 2)
    assert dataset.oracle_pool_windows(Dims(15, 9, 3, 3, 1, 2, 2, 2)) == \
        (6, 3)
    with pytest.raises(ConfigError):
        dataset.oracle_pool_windows(Dims(5, 5, 3, 3))


def test_sparsity_profile (f5, zeros5):
    ones = FeatureMap(np.ones((5, 5)))
    profile = dataset.sparsity_profile([zeros5, ones, f5], 3, 3)
    assert profile[0] == (1., 1.)
    assert profile[1] == (0., 0.)
    # each of the nine windows holds three of the nonzeros
    assert profile[2] == (0.68, 54. / 81)
