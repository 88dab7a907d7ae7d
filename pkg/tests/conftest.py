import numpy as np
import pytest

from pinchgat import UserLayout, default_config


@pytest.fixture
def cfg4():
    return default_config(n_antennas=4, n_users=2)


@pytest.fixture
def cfg2():
    return default_config(n_antennas=2, n_users=2)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_layout(rng, n_users, half_range=100.0):
    return UserLayout.from_xy(rng.uniform(-half_range, half_range,
                                          size=(n_users, 2)))
