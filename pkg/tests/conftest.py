"""Shared pytest fixtures for witnesskit tests."""
import sys
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

sys.path.insert(0, str(Path(__file__).parent.parent))

from models.algebra import Algebra  # noqa: E402
from models.channels import identity_channel, random_channel  # noqa: E402
from store.files import JsonStore  # noqa: E402

SEED = 20190601


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def qubit():
    return Algebra.full(2)


@pytest.fixture
def mixed_algebra():
    """M_2 ⊕ ℂ, the smallest algebra that is neither full nor abelian."""
    return Algebra((2, 1))


@pytest.fixture
def qubit_identity(qubit):
    return identity_channel(qubit)


@pytest.fixture
def random_pair(rng):
    """Factory for independent random channels with a shared input algebra."""

    def make(in_alg, out1, out2=None):
        return random_channel(in_alg, out1, rng), random_channel(in_alg, out2 or out1, rng)

    return make


@pytest.fixture
def store(tmp_path):
    return JsonStore(tmp_path)


@pytest.fixture
def runner():
    return CliRunner()
