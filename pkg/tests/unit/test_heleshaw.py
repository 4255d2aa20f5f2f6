import math

import numpy as np
import pytest

from harnacklab import geometry, heleshaw
from harnacklab.exceptions import InvalidArgumentException

H = 1 / 32


@pytest.fixture(scope="module")
def disk_state():
    yield heleshaw.heleshaw_solve(geometry.make_disk(), (0.0, 0.0), 1.0, H)


def test_zero_volume_stays_initial():
    state = heleshaw.heleshaw_solve(geometry.square_table(), (0.0, 0.0), 0.0, H)
    np.testing.assert_array_equal(state.wet_mask, state.initial_wet)
    assert state.initial_wet.sum() > 0


def test_disk_spreads_radially(disk_state):
    grid = disk_state.grid
    wet = disk_state.wet_rows()
    area = disk_state.initial_wet.sum() * H ** 2 + disk_state.t
    radius = math.sqrt(area / math.pi)
    distance = np.linalg.norm(grid.points[wet], axis=1)
    assert abs(distance.max() - radius) <= 2 * H
    assert not disk_state.touches_edge()


def test_disk_volume_balance(disk_state):
    error = heleshaw.volume_balance_error(disk_state)
    # dry cells along the front absorb an O(h) share of the injected volume
    assert -5 * H <= error <= 1e-9


def test_potential_grows_with_volume():
    table = geometry.square_table()
    previous = None
    for t in (0.25, 0.5, 1.0):
        state = heleshaw.heleshaw_solve(table, (0.0, 0.0), t, H)
        if previous is not None:
            assert np.all(state.u_t.values >= previous.u_t.values - 1e-6)
            assert state.wet_mask.sum() > previous.wet_mask.sum()
        previous = state


def test_potential_is_nonnegative(disk_state):
    assert np.all(disk_state.u_t.values >= 0)
    assert np.all(disk_state.initial_wet <= disk_state.wet_mask)


def test_source_outside():
    with pytest.raises(InvalidArgumentException):
        heleshaw.heleshaw_solve(geometry.square_table(), (3.0, 0.0), 1.0, H)


def test_source_near_edge():
    with pytest.raises(InvalidArgumentException):
        heleshaw.heleshaw_solve(geometry.square_table(), (0.9, 0.0), 1.0, H)


def test_negative_volume():
    with pytest.raises(InvalidArgumentException):
        heleshaw.heleshaw_solve(geometry.square_table(), (0.0, 0.0), -1.0, H)


def test_geometric_schedule():
    assert heleshaw.geometric_schedule(2.0, 4) == [0.25, 0.5, 1.0, 2.0]
    with pytest.raises(InvalidArgumentException):
        heleshaw.geometric_schedule(0.0, 4)


def test_corner_sweep_stops_when_dry():
    report, state = heleshaw.corner_sweep(
        geometry.square_table(), (1.0, 1.0), (0.0, 0.0), t_max=0.5, steps=3, h=H
    )
    assert not report.wet
    assert report.barrier_dry
    assert report.first_wet_t is None
    assert state.t == 0.5
    assert report.corner_angle == pytest.approx(math.pi / 2)
    assert report.corner_radius == 4 * H
    assert report.volume_balance_error is not None


def test_corner_needs_cells():
    with pytest.raises(InvalidArgumentException):
        heleshaw.wets_corner(geometry.square_table(), (3.0, 3.0), (0.0, 0.0), 1.0, h=H)


def test_local_decomposition(disk_state):
    local = heleshaw.local_decomposition(disk_state, (0.4, 0.0), 0.12)
    assert local.agreement >= 0.99
    assert local.max_deviation < 1e-4
    assert np.all(local.correction.values >= 0)


def test_local_decomposition_too_small(disk_state):
    with pytest.raises(InvalidArgumentException):
        heleshaw.local_decomposition(disk_state, (0.4, 0.0), H / 2)


@pytest.mark.parametrize(
    "angle, dry",
    [(math.pi / 3, True), (math.pi / 2, True), (3 * math.pi / 4, False), (3 * math.pi / 2, False)],
)
def test_barrier_keeps_narrow_corners_dry(angle, dry):
    assert heleshaw.barrier_keeps_dry(angle) is dry
