import math

import numpy as np
import pytest

from harnacklab import analysis, elliptic, geometry
from harnacklab.elliptic import (
    BoundaryData,
    CoefficientField,
    CoefficientKind,
    RhsKind,
    RhsSign,
    RhsSpec,
)
from tests.acceptance.fixtures import FINE_H
from tests.utils import recording

pytestmark = pytest.mark.acceptance

INSTANCES = 100


def random_coefficients(rng):
    return CoefficientField(
        kind=CoefficientKind.checkerboard,
        ellipticity=2.0,
        low=float(rng.uniform(0.5, 2.0)),
        high=float(rng.uniform(0.5, 2.0)),
        period=float(rng.uniform(0.05, 0.25)),
        zero_order=float(rng.choice([0.0, -0.5])),
    )


@pytest.fixture(scope="module")
def sector_grid():
    yield geometry.rasterize(geometry.make_sector(3 * math.pi / 4), 1 / 32)


def test_maximum_principle(sector_grid):
    rng = np.random.default_rng(0)
    for _ in range(INSTANCES):
        coeffs = random_coefficients(rng)
        freq = rng.uniform(1.0, 6.0, size=2)
        data, seen = recording(lambda p: np.sin(freq[0] * p[:, 0]) + np.cos(freq[1] * p[:, 1]))
        u = elliptic.solve(elliptic.assemble(sector_grid, coeffs, boundary=BoundaryData.uniform(data)))
        boundary = np.concatenate(seen)
        # c <= 0 bounds u by the boundary data and zero
        assert u.values.max() <= max(boundary.max(), 0.0) + 1e-8
        assert u.values.min() >= min(boundary.min(), 0.0) - 1e-8


def test_comparison(sector_grid):
    rng = np.random.default_rng(1)
    boundary = BoundaryData(lateral=0.0, outer=1.0)
    for _ in range(INSTANCES):
        coeffs = random_coefficients(rng)
        rhs = RhsSpec(
            kind=RhsKind.radial_power,
            gamma=float(rng.uniform(-1.0, 1.0)),
            amplitude=-float(rng.uniform(0.1, 2.0)),
            sign=RhsSign.nonpositive,
        )
        harmonic = elliptic.solve(elliptic.assemble(sector_grid, coeffs, boundary=boundary))
        forced = elliptic.solve(elliptic.assemble(sector_grid, coeffs, rhs, boundary))
        assert np.all(forced.values >= harmonic.values - 1e-9)
        assert np.all(harmonic.values >= -1e-9)


@pytest.mark.parametrize("zero_order", [0.0, -0.5])
def test_checkerboard_ratio_is_bounded(zero_order):
    coeffs = CoefficientField(
        kind=CoefficientKind.checkerboard, ellipticity=2.0, zero_order=zero_order
    )
    u, v = elliptic.solve_pair(geometry.make_sector(3 * math.pi / 4), 0.0, FINE_H, coeffs)
    profile = analysis.ratio_profile(u, v, (0.0, 0.25), levels=5)
    assert len(profile.radii) == 4
    normalized = np.asarray(profile.sup_ratio) / profile.anchor_ratio
    assert normalized.max() / normalized.min() < 2.0
