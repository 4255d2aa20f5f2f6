import math

import pytest

from harnacklab import elliptic, geometry

FINE_H = 1 / 256


@pytest.fixture(scope="session")
def narrow_pair():
    yield elliptic.solve_pair(geometry.make_sector(math.pi / 4), 0.0, FINE_H)


@pytest.fixture(scope="session")
def wide_pair():
    yield elliptic.solve_pair(geometry.make_sector(3 * math.pi / 4), 0.0, FINE_H)


@pytest.fixture(scope="session")
def critical_pair():
    yield elliptic.solve_pair(geometry.make_sector(math.pi / 2), 0.0, FINE_H)


@pytest.fixture(scope="session")
def wedge_graph():
    slope = 0.5
    yield geometry.make_lipschitz_graph([(-1.0, slope), (0.0, 0.0), (1.0, slope)])


@pytest.fixture(scope="session")
def wedge_pair(wedge_graph):
    yield elliptic.solve_pair(wedge_graph, 0.0, FINE_H)
