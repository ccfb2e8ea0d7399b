import logging

import pytest
import numpy as np

from ecrconv.engine import execmodel
from ecrconv.engine.tensor import Dims
from ecrconv.engine.metrics import OpCount
from ecrconv.engine.execmodel import (ExecConfig, plan, dispatch,
                                      ecr_shared_bytes, pecr_shared_bytes)
from ecrconv.engine.util import ConfigError, DispatchError
from ecrconv.engine.dataset import generate, random_filter
from ecrconv.engine.pipeline import multichannel_conv
from ecrconv.engine.util.grid import Grid


def test_plan_ecr ():
    grid = plan(Dims(5, 5, 3, 3, 1), 'ECR')
    assert grid.shape == (3, 3)
    grid = plan(Dims(64, 64, 3, 3, 1), 'ECR')
    assert grid.shape == (62, 62)
    assert grid.shared_bytes_per_block == 62 * (9 * 8 + 4) == 4712


def test_plan_pecr ():
    grid = plan(Dims(5, 5, 3, 3, 1, 2, 2, 1), 'pecr')
    assert grid.shape == (2, 2)
    assert grid.shared_bytes_per_block == pecr_shared_bytes(2, 4, 9)
    with pytest.raises(ConfigError, match='width'):
        plan(Dims(7, 6, 3, 3, 1, 2, 2, 2), 'PECR')
    with pytest.raises(ConfigError):
        plan(Dims(5, 5, 3, 3), 'CSR')


def test_capacity_is_monotone ():
    sizes = [plan(Dims(n, n, 3, 3), 'ECR').shared_bytes_per_block
             for n in range(3, 40)]
    assert sizes == sorted(sizes)
    assert ecr_shared_bytes(10, 9) < ecr_shared_bytes(10, 27)


def test_exec_config ():
    cfg = ExecConfig(4, 1024)
    assert (cfg.workers, cfg.shared_memory_budget) == (4, 1024)
    assert ExecConfig().shared_memory_budget == 49152
    with pytest.raises(ConfigError):
        ExecConfig(0)
    with pytest.raises(ConfigError):
        ExecConfig(1, -1)


def test_exec_config_default_workers (restore_conf):
    restore_conf.WORKERS = 3
    assert ExecConfig().workers == 3


def work (b):
    return (np.full(4, b, dtype=np.float32), OpCount(b, 2 * b))


@pytest.mark.parametrize('workers', [1, 2, 8])
def test_dispatch_is_deterministic (workers):
    grid = Grid(20, 4)
    outputs, counts = dispatch(grid, work, ExecConfig(workers))
    assert [int(o[0]) for o in outputs] == list(range(20))
    assert counts == OpCount(190, 380)


def test_dispatch_per_thread ():
    grid = Grid(3, 2)
    outputs, counts = dispatch(grid, lambda b, t: ((b, t), None),
                               ExecConfig(4), per_thread=True)
    assert outputs == [[(0, 0), (0, 1)], [(1, 0), (1, 1)], [(2, 0), (2, 1)]]
    assert counts == OpCount()


@pytest.fixture
def fresh_reports (monkeypatch):
    monkeypatch.setattr(execmodel, '_reported', set())


def test_plan_capacity_warning_is_logged_once (caplog, fresh_reports):
    dims = Dims(64, 64, 3, 3)
    with caplog.at_level(logging.DEBUG, logger='ecrconv'):
        plan(dims, 'ECR', ExecConfig(1, 1))
        plan(dims, 'ECR', ExecConfig(1, 1))
        plan(dims, 'ECR', ExecConfig(1, 2))
    warnings = [r for r in caplog.records if r.levelno == logging.WARNING]
    assert len(warnings) == 2
    assert all('shared memory' in r.getMessage() for r in warnings)
    assert len(caplog.records) == 3


def test_plan_within_budget (caplog, fresh_reports):
    dims = Dims(64, 64, 3, 3)
    with caplog.at_level(logging.DEBUG, logger='ecrconv'):
        plan(dims, 'ECR')
        plan(dims, 'ECR', ExecConfig(1, 10 ** 6))
    assert not caplog.records


def test_dispatch_does_not_check_capacity (caplog):
    with caplog.at_level(logging.WARNING, logger='ecrconv'):
        outputs, _ = dispatch(Grid(2, 2, 100), work, ExecConfig(1, 1))
    assert len(outputs) == 2
    assert not caplog.records


def test_convolution_warns_once_per_grid (caplog, fresh_reports):
    fmap = generate(12, 12, 1, 0.5, seed=1)
    filters = [random_filter(3, 3, seed=s) for s in (2, 3)]
    with caplog.at_level(logging.WARNING, logger='ecrconv'):
        multichannel_conv(fmap, filters, method='ecr',
                          exec_cfg=ExecConfig(1, 1))
    assert len(caplog.records) == 1


@pytest.mark.parametrize('workers', [1, 4])
def test_dispatch_failure_names_block (workers):
    def fail (b):
        if b == 3:
            raise ZeroDivisionError('bad block')
        return work(b)
    with pytest.raises(DispatchError) as info:
        dispatch(Grid(6, 2), fail, ExecConfig(workers))
    assert info.value.block == 3
    assert info.value.thread is None
    assert isinstance(info.value.__cause__, ZeroDivisionError)


def test_dispatch_failure_names_thread ():
    def fail (b, t):
        if (b, t) == (1, 2):
            raise ValueError('bad thread')
        return (0, None)
    with pytest.raises(DispatchError) as info:
        dispatch(Grid(2, 3), fail, per_thread=True)
    assert (info.value.block, info.value.thread) == (1, 2)
