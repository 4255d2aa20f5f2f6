import logging
import math
from typing import (
    Iterable,
    List,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import orjson
import pydantic
from scipy.optimize import brentq

from .exceptions import EmptyDomainException, InvalidArgumentException
from .types import DomainKind, DomainSpec

logger = logging.getLogger(__name__)

# nodes closer than this to the boundary are absorbed by the Dirichlet data
BOUNDARY_TOL = 1e-12

EXTERIOR = 0
INTERIOR = 1
BOUNDARY_ADJACENT = 2

ArrayLike = Union[Sequence[float], np.ndarray]


def cone_slope_to_aperture(slope: float) -> float:
    return math.pi / 2 - math.atan(slope)


def aperture_to_cone_slope(half_aperture: float) -> float:
    return math.tan(math.pi / 2 - half_aperture)


def _build(**data) -> DomainSpec:
    try:
        return DomainSpec(**data)
    except pydantic.ValidationError as err:
        raise InvalidArgumentException(str(err)) from err


def make_sector(opening: float, radius: float = 1.0) -> DomainSpec:
    if not (0 < opening < 2 * math.pi):
        raise InvalidArgumentException(f"Sector opening must lie in (0, 2pi): {opening}")
    return _build(kind=DomainKind.sector, dim=2, aperture=opening, radius=radius)


def make_cone(dim: int, slope: float, radius: float = 1.0) -> DomainSpec:
    """
    C_L = {x_n > L|x'|}. In the plane this is the sector of full opening
    2 * (pi/2 - arctan L), so negative slopes give reentrant sectors.
    """
    if dim < 2:
        raise InvalidArgumentException(f"Cone dimension must be >= 2: {dim}")
    if not math.isfinite(slope):
        raise InvalidArgumentException(f"Cone slope must be finite: {slope}")
    half_aperture = cone_slope_to_aperture(slope)
    if dim == 2:
        return _build(
            kind=DomainKind.sector, dim=2, aperture=2 * half_aperture, slope=slope, radius=radius
        )
    return _build(
        kind=DomainKind.cone, dim=dim, aperture=half_aperture, slope=slope, radius=radius
    )


def make_lipschitz_graph(
    vertices: Iterable[Tuple[float, float]], radius: float = 1.0
) -> DomainSpec:
    ordered = sorted((float(x), float(y)) for x, y in vertices)
    if not any(x == 0.0 and y == 0.0 for x, y in ordered):
        raise InvalidArgumentException("Graph vertices must contain the origin sample (0, 0)")
    if len(ordered) < 2:
        raise InvalidArgumentException("Graph needs at least two vertices")
    slopes = [
        abs(y1 - y0) / (x1 - x0)
        for (x0, y0), (x1, y1) in zip(ordered, ordered[1:])
        if x1 > x0
    ]
    if len(slopes) != len(ordered) - 1:
        raise InvalidArgumentException("Graph abscissae must be distinct")
    return _build(
        kind=DomainKind.lipschitz_graph,
        dim=2,
        slope=max(slopes),
        vertices=ordered,
        radius=radius,
    )


def make_disk(radius: float = 1.0, dim: int = 2) -> DomainSpec:
    return _build(kind=DomainKind.disk, dim=dim, radius=radius)


def make_polygon(vertices: Iterable[Tuple[float, float]]) -> DomainSpec:
    verts = [(float(x), float(y)) for x, y in vertices]
    if len(verts) < 3:
        raise InvalidArgumentException("Polygon needs at least three vertices")
    area = 0.5 * sum(
        x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(verts, verts[1:] + verts[:1])
    )
    if area < 0:
        verts.reverse()
    radius = max(math.hypot(x, y) for x, y in verts)
    return _build(kind=DomainKind.polygon, dim=2, vertices=verts, radius=radius)


def square_table(half_side: float = 1.0) -> DomainSpec:
    s = half_side
    return make_polygon([(-s, -s), (s, -s), (s, s), (-s, s)])


def l_shaped_table(half_side: float = 1.0) -> DomainSpec:
    """[-s, s]^2 minus the open upper right quadrant; reentrant corner at 0."""
    s = half_side
    return make_polygon([(-s, -s), (s, -s), (s, 0.0), (0.0, 0.0), (0.0, s), (-s, s)])


def corner_table(angle: float, size: float = 1.5) -> DomainSpec:
    """Kite with a corner of interior angle `angle` at the origin, opening along +x2."""
    if not (0 < angle < math.pi):
        raise InvalidArgumentException(f"Corner angle must lie in (0, pi): {angle}")
    dx, dy = math.sin(angle / 2), math.cos(angle / 2)
    top = size * (1.0 + dy)
    return make_polygon([(0.0, 0.0), (size * dx, size * dy), (0.0, top), (-size * dx, size * dy)])


def polygon_interior_angle(spec: DomainSpec, index: int) -> float:
    verts = spec.vertices or []
    vx, vy = verts[index]
    px, py = verts[index - 1]
    nx, ny = verts[(index + 1) % len(verts)]
    ax, ay = nx - vx, ny - vy
    bx, by = px - vx, py - vy
    return math.atan2(ax * by - ay * bx, ax * bx + ay * by) % (2 * math.pi)


def corner_angle(spec: DomainSpec, corner: ArrayLike) -> float:
    cx, cy = float(corner[0]), float(corner[1])
    for index, (x, y) in enumerate(spec.vertices or []):
        if math.hypot(x - cx, y - cy) < 1e-9:
            return polygon_interior_angle(spec, index)
    raise InvalidArgumentException(f"Point {(cx, cy)} is not a vertex of the table")


def domain_to_json(spec: DomainSpec) -> bytes:
    return orjson.dumps(spec.dict(), option=orjson.OPT_SORT_KEYS)


def domain_from_json(data: Union[bytes, str]) -> DomainSpec:
    try:
        return DomainSpec.parse_obj(orjson.loads(data))
    except pydantic.ValidationError as err:
        raise InvalidArgumentException(str(err)) from err


def _ray_distance(px, py, dx, dy):
    t = np.maximum(px * dx + py * dy, 0.0)
    return np.hypot(px - t * dx, py - t * dy)


def _segment_distance(px, py, ax, ay, bx, by):
    ex, ey = bx - ax, by - ay
    t = np.clip(((px - ax) * ex + (py - ay) * ey) / (ex * ex + ey * ey), 0.0, 1.0)
    return np.hypot(px - ax - t * ex, py - ay - t * ey)


def _sector_distance(spec: DomainSpec, p: np.ndarray) -> np.ndarray:
    half = spec.aperture / 2
    x, y = p[..., 0], p[..., 1]
    dx, dy = math.sin(half), math.cos(half)
    dist = np.minimum(_ray_distance(x, y, dx, dy), _ray_distance(x, y, -dx, dy))
    inside = np.abs(np.arctan2(x, y)) < half
    return np.where(inside, -dist, dist)


def _cone_distance(spec: DomainSpec, p: np.ndarray) -> np.ndarray:
    # nearest surface point lies in the meridian half plane of the point
    rho = np.linalg.norm(p[..., :-1], axis=-1)
    z = p[..., -1]
    half = spec.aperture
    dist = _ray_distance(rho, z, math.sin(half), math.cos(half))
    inside = np.arctan2(rho, z) < half
    return np.where(inside, -dist, dist)


def _graph_pieces(spec: DomainSpec) -> Tuple[np.ndarray, np.ndarray, float, float]:
    verts = np.asarray(spec.vertices, dtype=float)
    xs, ys = verts[:, 0], verts[:, 1]
    left = (ys[1] - ys[0]) / (xs[1] - xs[0])
    right = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    return xs, ys, left, right


def graph_height(spec: DomainSpec, x: np.ndarray) -> np.ndarray:
    xs, ys, left, right = _graph_pieces(spec)
    g = np.interp(x, xs, ys)
    g = np.where(x < xs[0], ys[0] + left * (x - xs[0]), g)
    return np.where(x > xs[-1], ys[-1] + right * (x - xs[-1]), g)


def _graph_distance(spec: DomainSpec, p: np.ndarray) -> np.ndarray:
    xs, ys, left, right = _graph_pieces(spec)
    x, y = p[..., 0], p[..., 1]
    dist = np.full(x.shape, np.inf)
    for i in range(len(xs) - 1):
        dist = np.minimum(dist, _segment_distance(x, y, xs[i], ys[i], xs[i + 1], ys[i + 1]))
    # the end segments continue as rays
    norm = math.hypot(1.0, left)
    dist = np.minimum(dist, _ray_distance(x - xs[0], y - ys[0], -1.0 / norm, -left / norm))
    norm = math.hypot(1.0, right)
    dist = np.minimum(dist, _ray_distance(x - xs[-1], y - ys[-1], 1.0 / norm, right / norm))
    inside = y > graph_height(spec, x)
    return np.where(inside, -dist, dist)


def _polygon_distance(spec: DomainSpec, p: np.ndarray) -> np.ndarray:
    verts = np.asarray(spec.vertices, dtype=float)
    x, y = p[..., 0], p[..., 1]
    dist = np.full(x.shape, np.inf)
    inside = np.zeros(x.shape, dtype=bool)
    for (ax, ay), (bx, by) in zip(verts, np.roll(verts, -1, axis=0)):
        dist = np.minimum(dist, _segment_distance(x, y, ax, ay, bx, by))
        crosses = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (x < x_cross)
    return np.where(inside, -dist, dist)


def signed_distance(spec: DomainSpec, point: ArrayLike) -> Union[float, np.ndarray]:
    """
    Signed distance to the boundary of the untruncated domain: negative
    inside, positive outside. Accepts a single point or an array (..., dim).
    """
    p = np.asarray(point, dtype=float)
    if p.shape[-1] != spec.dim:
        raise InvalidArgumentException(f"Point dimension {p.shape[-1]} != {spec.dim}")
    if spec.kind == DomainKind.sector:
        result = _sector_distance(spec, p)
    elif spec.kind == DomainKind.cone:
        result = _cone_distance(spec, p)
    elif spec.kind == DomainKind.lipschitz_graph:
        result = _graph_distance(spec, p)
    elif spec.kind == DomainKind.disk:
        result = np.linalg.norm(p, axis=-1) - spec.radius
    else:
        result = _polygon_distance(spec, p)
    if p.ndim == 1:
        return float(result)
    return result


def truncated(spec: DomainSpec) -> bool:
    return spec.kind in (DomainKind.sector, DomainKind.cone, DomainKind.lipschitz_graph)


def region_distance(spec: DomainSpec, point: ArrayLike) -> Union[float, np.ndarray]:
    """Signed distance of the computational region (kind intersected with B_R)."""
    p = np.asarray(point, dtype=float)
    sd = signed_distance(spec, p)
    if not truncated(spec):
        return sd
    ball = np.linalg.norm(p, axis=-1) - spec.radius
    result = np.maximum(sd, ball)
    if p.ndim == 1:
        return float(result)
    return result


def on_outer_sphere(spec: DomainSpec, point: ArrayLike) -> bool:
    if not truncated(spec):
        return False
    p = np.asarray(point, dtype=float)
    return bool(np.linalg.norm(p) - spec.radius >= signed_distance(spec, p))


class GridDomain(pydantic.BaseModel):
    """
    Node-centred raster of a DomainSpec. Node i sits at (i - origin_index) * h.
    Unknowns are the interior nodes, ordered by `interior_index` (C order);
    `eta[m, k, s]` is the arm fraction from interior node m along axis k in
    direction (-1, +1)[s], 1 when the neighbour is interior.
    """

    spec: DomainSpec
    h: float
    shape: Tuple[int, ...]
    origin_index: Tuple[int, ...]
    cells: np.ndarray
    interior_index: np.ndarray
    points: np.ndarray
    row_of: np.ndarray
    eta: np.ndarray
    outer: np.ndarray

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(self.interior_index.size)

    @property
    def axes(self) -> List[np.ndarray]:
        return [
            (np.arange(n) - o) * self.h for n, o in zip(self.shape, self.origin_index)
        ]

    @property
    def multi_index(self) -> np.ndarray:
        return np.array(np.unravel_index(self.interior_index, self.shape)).T

    def interior_mask(self) -> np.ndarray:
        return self.cells != EXTERIOR

    def boundary_adjacent_rows(self) -> np.ndarray:
        return np.flatnonzero(self.cells.ravel()[self.interior_index] == BOUNDARY_ADJACENT)

    def node_coordinates(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def nearest_row(self, point: ArrayLike) -> int:
        """Row of the interior node nearest to point, -1 when that node is exterior."""
        index = np.rint(np.asarray(point, dtype=float) / self.h).astype(int)
        index = index + np.asarray(self.origin_index)
        if np.any(index < 0) or np.any(index >= np.asarray(self.shape)):
            return -1
        return int(self.row_of[tuple(index)])


def _bounds(spec: DomainSpec) -> Tuple[np.ndarray, np.ndarray]:
    if spec.kind == DomainKind.polygon:
        verts = np.asarray(spec.vertices, dtype=float)
        return verts.min(axis=0), verts.max(axis=0)
    return np.full(spec.dim, -spec.radius), np.full(spec.dim, spec.radius)


def _classify(interior: np.ndarray) -> np.ndarray:
    cells = np.where(interior, INTERIOR, EXTERIOR).astype(np.int8)
    adjacent = np.zeros(interior.shape, dtype=bool)
    for axis in range(interior.ndim):
        for step in (-1, 1):
            neighbour = np.roll(interior, -step, axis=axis)
            edge = [slice(None)] * interior.ndim
            edge[axis] = -1 if step == 1 else 0
            neighbour[tuple(edge)] = False
            adjacent |= interior & ~neighbour
    cells[adjacent] = BOUNDARY_ADJACENT
    return cells


def _arm_fraction(spec: DomainSpec, point: np.ndarray, direction: np.ndarray, h: float):
    def along(s: float) -> float:
        return float(region_distance(spec, point + s * direction))

    if along(h) <= 0.0:
        # the boundary passes through the neighbour node
        s = h
    else:
        s = brentq(along, 0.0, h, xtol=1e-14, rtol=8.9e-16, maxiter=200)
    return s / h, on_outer_sphere(spec, point + s * direction)


def rasterize(spec: DomainSpec, h: float) -> GridDomain:
    lower, upper = _bounds(spec)
    extent = float(np.max(upper - lower)) / 2
    if h <= 0:
        raise InvalidArgumentException(f"Grid width must be positive: {h}")
    if h > extent / 16 + 1e-15:
        raise InvalidArgumentException(f"Grid width {h} exceeds R/16 = {extent / 16}")

    lo = np.floor(lower / h).astype(int) - 1
    hi = np.ceil(upper / h).astype(int) + 1
    shape = tuple(int(n) for n in hi - lo + 1)
    origin_index = tuple(int(-v) for v in lo)
    axes = [(np.arange(n) - o) * h for n, o in zip(shape, origin_index)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    interior = region_distance(spec, nodes) < -BOUNDARY_TOL
    if not interior.any():
        raise EmptyDomainException(f"No interior nodes for {spec.kind.value} at h={h}")
    cells = _classify(interior)

    interior_index = np.flatnonzero(interior)
    row_of = np.full(shape, -1, dtype=np.int64)
    row_of.ravel()[interior_index] = np.arange(interior_index.size)
    multi = np.array(np.unravel_index(interior_index, shape)).T
    points = (multi - np.asarray(origin_index)) * h

    dim = len(shape)
    eta = np.ones((interior_index.size, dim, 2))
    outer = np.zeros((interior_index.size, dim, 2), dtype=bool)
    for axis in range(dim):
        for side, step in enumerate((-1, 1)):
            neighbour = multi.copy()
            neighbour[:, axis] += step
            cut = np.flatnonzero(~interior[tuple(neighbour.T)])
            direction = np.zeros(dim)
            direction[axis] = step
            for row in cut:
                eta[row, axis, side], outer[row, axis, side] = _arm_fraction(
                    spec, points[row], direction, h
                )

    logger.debug(
        f"Rasterized {spec.kind.value}: h={h}, shape={shape}, interior={interior_index.size}"
    )
    return GridDomain(
        spec=spec,
        h=h,
        shape=shape,
        origin_index=origin_index,
        cells=cells,
        interior_index=interior_index,
        points=points,
        row_of=row_of,
        eta=eta,
        outer=outer,
    )


def subgrid(grid: GridDomain, mask: np.ndarray) -> GridDomain:
    """
    Restrict the unknowns to `mask` (grid shaped). Arms leaving the original
    domain keep their cut-cell fractions; arms cut by the mask end on the
    neighbouring node and are flagged as outer boundary.
    """
    keep = mask & grid.interior_mask()
    if not keep.any():
        raise EmptyDomainException("Sub-grid mask selects no interior nodes")
    interior_index = np.flatnonzero(keep)
    rows = grid.row_of.ravel()[interior_index]
    row_of = np.full(grid.shape, -1, dtype=np.int64)
    row_of.ravel()[interior_index] = np.arange(interior_index.size)
    multi = np.array(np.unravel_index(interior_index, grid.shape)).T

    eta = grid.eta[rows].copy()
    outer = grid.outer[rows].copy()
    for axis in range(grid.dim):
        for side, step in enumerate((-1, 1)):
            neighbour = multi.copy()
            neighbour[:, axis] += step
            index = tuple(neighbour.T)
            masked_out = grid.interior_mask()[index] & ~keep[index]
            eta[masked_out, axis, side] = 1.0
            outer[masked_out, axis, side] = True

    return GridDomain(
        spec=grid.spec,
        h=grid.h,
        shape=grid.shape,
        origin_index=grid.origin_index,
        cells=_classify(keep),
        interior_index=interior_index,
        points=grid.points[rows],
        row_of=row_of,
        eta=eta,
        outer=outer,
    )
