import os

# Pin BLAS threading before numpy loads: deterministic timings for the
# complexity checks and no oversubscription from the scenario work pools.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from fixedrank import generate_instance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_mc():
    return generate_instance("mc", 10, 10, 2, 0.7, seed=42)


@pytest.fixture(scope="session")
def small_ms():
    return generate_instance("ms", 8, 8, 2, 160, seed=43)
