from __future__ import annotations

import numpy as np
import pytest

from robinscatter.field_synth import CovarianceModel, build_quadratic_strength, default_anisotropy
from robinscatter.grid import Disk, GridSpec2D


@pytest.fixture(scope="session")
def disk():
    return Disk()


@pytest.fixture(scope="session")
def grid128():
    return GridSpec2D.centered(1.25, 128)


@pytest.fixture(scope="session")
def default_strength(grid128):
    return build_quadratic_strength(default_anisotropy(grid128), 0.5)


@pytest.fixture(scope="session")
def default_model(default_strength):
    return CovarianceModel(default_strength)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
