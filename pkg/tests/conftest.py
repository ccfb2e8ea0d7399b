import pytest
import numpy as np

from ecrconv.engine import conf
from ecrconv.engine import dataset
from ecrconv.engine.tensor import FeatureMap, Filter


@pytest.fixture
def f5 ():
    return dataset.fixture_f5()


@pytest.fixture
def k3 ():
    return dataset.fixture_k3()


@pytest.fixture
def zeros5 ():
    return FeatureMap(np.zeros((5, 5), dtype=np.float32))


@pytest.fixture
def restore_conf ():
    # settings changed by a test go back to their defaults
    names = [k for k, v in conf.items()]
    yield conf
    for k in names:
        delattr(conf, k)


@pytest.fixture
def save_map (tmp_path):
    """Write a map or filter to an FMAP file in tmp_path; returns the path."""
    def save (name, fmap):
        if isinstance(fmap, Filter):
            fmap = FeatureMap(fmap.data)
        path = str(tmp_path / name)
        dataset.save(fmap, path)
        return path
    return save
