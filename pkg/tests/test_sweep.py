import io

import pytest

from ecrconv import sweep
from ecrconv.sweep import (SweepPoint, expand_grid, parse_config, preset,
                           columns, run_point, run_sweep)
from ecrconv.report import write_csv
from ecrconv.engine.metrics import dense_muls, dense_adds
from ecrconv.engine.dataset import oracle_window_nnz
from ecrconv.engine.util import ConfigError, DimensionError


def test_expand_grid_order ():
    points = expand_grid({'sparsity': [0.5, 0.9], 'size': [5, 6],
                          'kernel': 3})
    assert points == [
        {'size': 5, 'kernel': 3, 'sparsity': 0.5},
        {'size': 5, 'kernel': 3, 'sparsity': 0.9},
        {'size': 6, 'kernel': 3, 'sparsity': 0.5},
        {'size': 6, 'kernel': 3, 'sparsity': 0.9}]
    with pytest.raises(ConfigError):
        expand_grid({'colour': [1]})


def test_parse_config ():
    points, methods = parse_config([{'size': 7}])
    assert len(points) == 1
    assert (points[0].height, points[0].width) == (7, 7)
    assert methods == ['dense', 'im2col', 'im2col-csr', 'ecr', 'pecr']
    points, methods = parse_config({
        'methods': ['ecr'],
        'points': [{'height': 6, 'width': 9, 'kernel': [3, 5]}],
        'grid': {'size': [8, 10], 'pool': [None, {'w': 2}]}})
    assert methods == ['ecr']
    assert len(points) == 5
    assert (points[0].k_h, points[0].k_w) == (3, 5)
    assert points[2].pool.stride == 2
    assert points[1].pool is None


@pytest.mark.parametrize('doc', [
    'points', {'points': {}}, {'points': [], 'extra': 1},
    {'methods': ['csr']}, [{'size': 5, 'colour': 1}], [{'kernel': 3}],
    [{'size': 5, 'sparsity': 2}], [{'size': 5, 'pool': {'h': 2}}],
    [{'size': 3, 'kernel': 5}]])
def test_parse_config_errors (doc):
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_point_kernel_must_fit ():
    with pytest.raises(DimensionError):
        SweepPoint(5, 5, kernel=3, pool=sweep.PoolConfig(4))


def test_load_config (tmp_path):
    fn = tmp_path / 'sweep.json'
    fn.write_text('{"points": [{"size": 5}], "methods": ["dense", "ecr"]}')
    points, methods = sweep.load_config(str(fn))
    assert methods == ['dense', 'ecr']
    fn.write_text('{"points": [')
    with pytest.raises(ConfigError):
        sweep.load_config(str(fn))


def test_presets ():
    points, methods = preset('smoke')
    assert len(points) == 1
    assert points[0].sparsity == 0.68
    assert len(preset('layers')[0]) == 10
    fusion, methods = preset('fusion')
    assert len(fusion) == 12
    assert all(p.pool.stride == 2 for p in fusion)
    with pytest.raises(ConfigError):
        preset('everything')


def test_columns ():
    cols = columns(['dense', 'ecr'])
    assert cols[:2] == ['point', 'height']
    assert 'muls_ecr' in cols
    assert 'speedup_ecr' in cols
    assert 'speedup_dense' not in cols
    assert cols[-1] == 'note'
    assert 'speedup_ecr' not in columns(['ecr'])


def test_conv_point ():
    point = SweepPoint(11, 11, kernel=3, sparsity=0.7, seed=4)
    row = run_point(point, sweep.METHODS, index=3)
    assert row['point'] == 3
    assert row['muls_dense'] == row['muls_im2col'] == dense_muls(11, 11, 3, 3)
    assert row['adds_dense'] == dense_adds(11, 11, 3, 3)
    nnz = oracle_window_nnz(point.inputs()[0], 3, 3)
    assert row['muls_ecr'] == nnz.sum()
    assert row['muls_im2col-csr'] == nnz.sum()
    assert row['adds_im2col-csr'] == row['adds_ecr']
    # PECR needs a pooling window
    assert 'muls_pecr' not in row
    assert row['agree'] == 1
    assert row['transfer_floats_conv'] == 121 + 9 + 81
    assert row['global_bytes_conv'] == (121 + 9 + 81) * 4
    assert row['global_bytes_im2col_csr'] > row['global_bytes_conv']
    assert row['speedup_ecr'] > 0


def test_pooled_point ():
    pool = sweep.PoolConfig(2, 2, 2)
    row = run_point(SweepPoint(14, 14, sparsity=0.9, pool=pool),
                    sweep.METHODS)
    assert row['agree'] == 1
    assert row['max_abs_diff'] <= 1e-5
    assert row['muls_pecr'] <= row['muls_dense']
    assert row['transfer_floats_fused'] < row['transfer_floats_separate']
    assert 'global_bytes_im2col_csr' not in row
    assert row['note'] == ''


def test_pecr_is_skipped_when_it_cannot_tile ():
    pool = sweep.PoolConfig(2, 2, 2)
    row = run_point(SweepPoint(7, 7, pool=pool), ['dense', 'pecr'])
    assert 'muls_pecr' not in row
    assert row['note'].startswith('pecr skipped:')
    assert 'width' in row['note']
    assert 'muls_dense' in row


def test_sparser_maps_need_fewer_multiplications ():
    rows = run_sweep([SweepPoint(16, 16, sparsity=s) for s in (0.5, 0.9)],
                     ['dense', 'ecr'])
    assert [r['point'] for r in rows] == [0, 1]
    assert rows[0]['muls_dense'] == rows[1]['muls_dense']
    assert rows[1]['muls_ecr'] < rows[0]['muls_ecr']


def test_empty_sweep ():
    assert run_sweep([], ['dense']) == []
    with pytest.raises(ConfigError):
        run_sweep([], ['csr'])


def test_sweep_csv ():
    methods = ['dense', 'ecr']
    rows = run_sweep([SweepPoint(5, 5, sparsity=0.68)], methods)
    f = io.StringIO()
    write_csv(f, columns(methods), rows)
    lines = f.getvalue().splitlines()
    assert lines[0] == ','.join(columns(methods))
    assert len(lines) == 2
    assert len(lines[1].split(',')) == len(columns(methods))
