"""
Hele-Shaw flow on a table D through its Baiocchi potential.

u^t >= 0 solves -Delta u = chi_{Omega^0} + t delta_z - 1 on {u > 0} with
u = 0 on the boundary of D, the wet set is {u > 0}. Liquid reaching the
table edge falls off, so volume is only conserved while the wet set stays
away from the edge.
"""
import logging
import math
from typing import (
    List,
    Optional,
    Tuple,
)

import numpy as np
import pydantic
from numpy.typing import ArrayLike

from .analysis import threshold_verdict
from .elliptic import (
    DEFAULT_MAX_ITER,
    BoundaryData,
    RhsKind,
    RhsSpec,
    ScalarField,
    assemble,
    solve,
    solve_obstacle,
)
from .exceptions import InvalidArgumentException
from .geometry import GridDomain, corner_angle, rasterize, subgrid
from .spectral import alpha_sector
from .types import DomainSpec, Verdict, WettingReport

logger = logging.getLogger(__name__)

WET_THRESHOLD = 1e-12
INITIAL_RADIUS_CELLS = 8
CORNER_RADIUS_CELLS = 4
SCHEDULE_FACTOR = 2.0


class HeleShawState(pydantic.BaseModel):
    t: float
    u_t: ScalarField
    wet_mask: np.ndarray
    source: Tuple[float, ...]
    initial_wet: np.ndarray

    class Config:
        arbitrary_types_allowed = True

    @property
    def grid(self) -> GridDomain:
        return self.u_t.grid

    def wet_rows(self) -> np.ndarray:
        return self.wet_mask.ravel()[self.grid.interior_index]

    def touches_edge(self) -> bool:
        return bool(self.wet_rows()[self.grid.boundary_adjacent_rows()].any())


class Decomposition(pydantic.BaseModel):
    """u^t = harmonic - correction on the wet part of D near `center`."""

    center: Tuple[float, ...]
    radius: float
    harmonic: ScalarField
    correction: ScalarField
    agreement: float
    max_deviation: float

    class Config:
        arbitrary_types_allowed = True


def initial_wet_rows(grid: GridDomain, source: ArrayLike) -> np.ndarray:
    distance = np.linalg.norm(grid.points - np.asarray(source, dtype=float), axis=1)
    return distance <= INITIAL_RADIUS_CELLS * grid.h + 1e-12


def _forcing(grid: GridDomain, initial: np.ndarray, source: ArrayLike, t: float) -> np.ndarray:
    q = initial.astype(float) - 1.0
    row = grid.nearest_row(source)
    # point mass t on a single cell
    q[row] += t / grid.h ** grid.dim
    return q


def _to_grid(grid: GridDomain, rows: np.ndarray) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    mask.ravel()[grid.interior_index] = rows
    return mask


def heleshaw_solve(
    table: DomainSpec,
    source: ArrayLike,
    t: float,
    h: float,
    grid: Optional[GridDomain] = None,
    initial: Optional[np.ndarray] = None,
    tol: float = 1e-9,
    max_iter: int = DEFAULT_MAX_ITER,
) -> HeleShawState:
    if t < 0:
        raise InvalidArgumentException(f"Injected volume must be nonnegative: {t}")
    grid = grid or rasterize(table, h)
    source = np.asarray(source, dtype=float)
    if grid.nearest_row(source) < 0:
        raise InvalidArgumentException(f"Source {source.tolist()} is not inside the table")
    start = initial_wet_rows(grid, source)
    if not start.any() or start[grid.boundary_adjacent_rows()].any():
        raise InvalidArgumentException("Initial wet ball around the source must stay off the edge")

    u = solve_obstacle(
        grid, _forcing(grid, start, source, t), tol=tol, max_iter=max_iter, initial=initial
    )
    wet = (u.values > WET_THRESHOLD) | start
    logger.debug(f"Hele-Shaw t={t}: {int(wet.sum())} wet cells of {grid.size}")
    return HeleShawState(
        t=t,
        u_t=u,
        wet_mask=_to_grid(grid, wet),
        source=tuple(source.tolist()),
        initial_wet=_to_grid(grid, start),
    )


def volume_balance_error(state: HeleShawState) -> float:
    """|Omega^t| - |Omega^0| - t, meaningful while the wet set stays off the edge."""
    cell = state.grid.h ** state.grid.dim
    gained = (state.wet_mask.sum() - state.initial_wet.sum()) * cell
    return float(gained - state.t)


def geometric_schedule(t_max: float, steps: int) -> List[float]:
    if t_max <= 0 or steps < 1:
        raise InvalidArgumentException(f"Need t_max > 0 and steps >= 1: {t_max}, {steps}")
    return [t_max / SCHEDULE_FACTOR ** (steps - 1 - i) for i in range(steps)]


def barrier_keeps_dry(angle: float) -> bool:
    """
    A corner of opening <= pi/2 never gets wet: there the correction k of the
    local split u^t = h^t - k vanishes no faster than any harmonic h^t, so
    the dry set keeps a neighbourhood of the vertex for every t. Wider
    corners wet at a finite t.
    """
    return threshold_verdict(alpha_sector(angle), 0.0) is not Verdict.bounded


def corner_sweep(
    table: DomainSpec,
    corner: ArrayLike,
    source: ArrayLike,
    t_max: float,
    steps: int = 8,
    h: float = 1 / 64,
    tol: float = 1e-9,
    max_iter: int = DEFAULT_MAX_ITER,
) -> Tuple[WettingReport, HeleShawState]:
    """
    Sweep t over a geometric schedule ending at t_max, warm starting each
    solve from the previous one, and stop at the first t with a wet cell
    within 4h of the corner. At a right angle the dry zone shrinks below
    the grid as t grows, so `wet` can turn true there while `barrier_dry`
    holds.
    """
    grid = rasterize(table, h)
    corner = np.asarray(corner, dtype=float)
    radius = CORNER_RADIUS_CELLS * h
    near = np.linalg.norm(grid.points - corner, axis=1) <= radius + 1e-12
    if not near.any():
        raise InvalidArgumentException(f"No interior cells within {radius} of {corner.tolist()}")
    schedule = geometric_schedule(t_max, steps)
    angle = corner_angle(table, corner)

    first_wet: Optional[float] = None
    balance: Optional[float] = None
    previous: Optional[np.ndarray] = None
    state = None
    for t in schedule:
        state = heleshaw_solve(
            table, source, t, h, grid=grid, initial=previous, tol=tol, max_iter=max_iter
        )
        previous = state.u_t.values
        if not state.touches_edge():
            balance = volume_balance_error(state)
        if state.wet_rows()[near].any():
            first_wet = t
            break

    report = WettingReport(
        corner=(float(corner[0]), float(corner[1])),
        corner_angle=angle,
        h=h,
        t_schedule=schedule,
        wet=first_wet is not None,
        first_wet_t=first_wet,
        barrier_dry=barrier_keeps_dry(angle),
        volume_balance_error=balance,
        wet_threshold=WET_THRESHOLD,
        corner_radius=radius,
    )
    logger.info(
        f"Corner {report.corner} (angle {math.degrees(report.corner_angle):.1f} deg): "
        f"wet={report.wet}, first_t={first_wet}"
    )
    return report, state


def wets_corner(
    table: DomainSpec,
    corner: ArrayLike,
    source: ArrayLike,
    t_max: float,
    steps: int = 8,
    h: float = 1 / 64,
    tol: float = 1e-9,
    max_iter: int = DEFAULT_MAX_ITER,
) -> WettingReport:
    report, _ = corner_sweep(table, corner, source, t_max, steps, h, tol, max_iter)
    return report


def local_decomposition(state: HeleShawState, center: ArrayLike, radius: float) -> Decomposition:
    """
    Split u^t on B_radius(center) cut with D: `harmonic` is harmonic with
    the data of u^t, `correction` solves Delta k = -1 with zero data, so
    u^t = harmonic - correction wherever the ball is wet and misses Omega^0.
    """
    grid = state.grid
    center = np.asarray(center, dtype=float)
    ball = np.linalg.norm(grid.node_coordinates() - center, axis=-1) < radius
    local = subgrid(grid, ball)
    if local.size < 4:
        raise InvalidArgumentException(f"Ball of radius {radius} holds fewer than 4 cells")

    boundary = BoundaryData(lateral=0.0, outer=state.u_t.sample)
    harmonic = solve(assemble(local, boundary=boundary))
    unit = RhsSpec(kind=RhsKind.constant, amplitude=-1.0)
    correction = solve(assemble(local, rhs=unit))

    rows = grid.row_of.ravel()[local.interior_index]
    difference = harmonic.values - correction.values
    wet = state.wet_rows()[rows]
    agreement = float(np.mean((difference > WET_THRESHOLD) == wet))
    deviation = np.abs(state.u_t.values[rows] - difference)
    return Decomposition(
        center=tuple(center.tolist()),
        radius=radius,
        harmonic=harmonic,
        correction=correction,
        agreement=agreement,
        max_deviation=float(deviation[wet].max()) if wet.any() else 0.0,
    )
