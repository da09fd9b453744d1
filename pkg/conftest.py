import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import domain_builder

@pytest.fixture
def rng():
    return np.random.default_rng(1234)

@pytest.fixture
def step_domain():
    return domain_builder.step_domain()

@pytest.fixture
def unit_square():
    return domain_builder.unit_cube(2)

@pytest.fixture
def square_mask(unit_square):
    return domain_builder.rasterize(unit_square, 16)

@pytest.fixture
def step_mask(step_domain):
    return domain_builder.rasterize(step_domain, 32)
