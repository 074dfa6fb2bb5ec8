from pathlib import Path

import numpy as np
import pytest
from dnres_forge.net.topology import (
    NetworkTopology,
    build_base,
    insert_ds_resblock,
    insert_resblock,
)
from dnres_forge.nn.tensor import DType
from dnres_forge.synthetic import write_corpus

CORPUS_SEED = 0


@pytest.fixture(scope="session")
def workdir(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("work")


@pytest.fixture(scope="session")
def manifest(tmp_path_factory) -> Path:
    # 4 train and 2 test images of 64×64, 4 patch pairs per train image.
    return write_corpus(tmp_path_factory.mktemp("corpus"), count=6, seed=CORPUS_SEED, test_count=2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def mixed_net(rng) -> NetworkTopology:
    """f64 network with one block of each kind and weights large enough to matter."""
    net = build_base(rng, 0.1, DType.F64)
    net = insert_resblock(net, rng, 0.1)
    return insert_ds_resblock(net, rng, 0.1)
