import numpy as np
import pytest

from dualopt import problems


@pytest.fixture(params=problems.CATALOG_IDS)
def catalog_problem(request):
    return problems.builtin(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
