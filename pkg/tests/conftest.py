import numpy as np
import pytest

from pairsep.fisher import SourceScene
from pairsep.psf import make_gaussian


@pytest.fixture(scope="session")
def unit_gaussian():
    return make_gaussian(1.0)


@pytest.fixture(scope="session")
def wide_gaussian():
    return make_gaussian(1.2)


def scene_for(d: float, eps: float, n_tot: float = 1.0) -> SourceScene:
    return SourceScene(
        separation=d,
        n1=0.5 * n_tot * (1.0 - eps),
        n2=0.5 * n_tot * (1.0 + eps),
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
