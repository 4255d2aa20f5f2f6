import math

import pytest

from harnacklab import elliptic, geometry
from harnacklab.settings import Settings


@pytest.fixture()
def settings():
    settings = Settings(threads=2, log_level="WARNING")
    yield settings


@pytest.fixture(scope="session")
def half_plane():
    yield geometry.make_lipschitz_graph([(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)])


@pytest.fixture(scope="session")
def quarter_sector():
    yield geometry.make_sector(math.pi / 2)


@pytest.fixture(scope="session")
def wide_sector():
    yield geometry.make_sector(3 * math.pi / 4)


@pytest.fixture(scope="session")
def wide_sector_pair(wide_sector):
    yield elliptic.solve_pair(wide_sector, 0.0, 1 / 64)
