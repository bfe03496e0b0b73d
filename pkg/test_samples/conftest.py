import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.classical_groups import GroupDescriptor
from models.formula_builders import gamma_library
from models.padic_model import ModelKind, ModelSpec
from utils.point_cache import CACHE_ENV_VAR


@pytest.fixture
def sp2():
    return GroupDescriptor.symplectic(1)


@pytest.fixture
def so3():
    return GroupDescriptor.orthogonal(1)


@pytest.fixture
def acceptance_gamma(sp2):
    return gamma_library(sp2, 'G2', 1)


@pytest.fixture
def model_factory():
    def make(prime: int, depth: int = 1, kind: ModelKind = ModelKind.MIXED) -> ModelSpec:
        return ModelSpec(prime, depth, kind)
    return make


@pytest.fixture(autouse=True)
def no_shared_cache(monkeypatch):
    """Tests never read a cache directory left in the environment."""
    monkeypatch.delenv(CACHE_ENV_VAR, raising=False)
