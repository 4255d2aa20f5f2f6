"""
Cut-cell finite differences for divergence-form problems

    L u = sum_k d_k(a_kk d_k u) + b . grad u + c u = rhs

with Dirichlet data on the boundary crossings. Each row is the flux form
of Shortley-Weller: arm fluxes a (u_nbr - u_i) / (eta h) summed and divided
by h, interior arms with harmonic-mean coefficients, boundary arms with the
cell coefficient. The assembled matrix is A = -L_h, an M-matrix, symmetric
whenever b vanishes.
"""
import enum
import logging
import math
from typing import (
    Any,
    Callable,
    List,
    Optional,
    Tuple,
    Union,
)

import numpy as np
import pydantic
from numpy.typing import ArrayLike
from scipy import sparse
from scipy.sparse.linalg import bicgstab, cg

from .exceptions import InvalidArgumentException, NumericalFailureException
from .geometry import GridDomain, rasterize, signed_distance
from .types import DomainKind, DomainSpec

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000

BoundaryValue = Union[float, Callable[[np.ndarray], Any]]


class CoefficientKind(str, enum.Enum):
    identity = "identity"
    checkerboard = "checkerboard"
    table = "table"


class RhsKind(str, enum.Enum):
    zero = "zero"
    constant = "constant"
    radial_power = "radial_power"
    distance_power = "distance_power"


class RhsSign(str, enum.Enum):
    nonpositive = "nonpositive"
    nonnegative = "nonnegative"
    signed = "signed"


class CoefficientField(pydantic.BaseModel):
    """
    identity: a = I. checkerboard: a = low I or high I on alternating cubes of
    side `period`. table: a, b, c from a callable set with `from_callable`.
    `drift` and `zero_order` add constant b and c to the first two kinds.
    """

    kind: CoefficientKind = CoefficientKind.identity
    ellipticity: float = 1.0
    low: float = 0.5
    high: float = 2.0
    period: float = 0.125
    drift: Optional[List[float]] = None
    zero_order: float = 0.0

    _table: Optional[Callable] = pydantic.PrivateAttr(default=None)

    class Config:
        extra = "forbid"

    @pydantic.root_validator(skip_on_failure=True)
    def _check_bounds(cls, values):
        lam = values["ellipticity"]
        if lam < 1:
            raise ValueError(f"ellipticity must be >= 1: {lam}")
        if values["kind"] == CoefficientKind.checkerboard:
            for name in ("low", "high"):
                if not (1 / lam - 1e-12 <= values[name] <= lam + 1e-12):
                    raise ValueError(f"{name}={values[name]} outside [1/{lam}, {lam}]")
            if values["period"] <= 0:
                raise ValueError("period must be positive")
        drift = values.get("drift")
        if drift is not None and sum(abs(b) for b in drift) > lam - 1 + 1e-12:
            raise ValueError(f"sum |b| exceeds ellipticity - 1 = {lam - 1}")
        c = values["zero_order"]
        if c > 0 or -c > lam - 1 + 1e-12:
            raise ValueError(f"zero order term must satisfy -(lambda - 1) <= c <= 0: {c}")
        return values

    @classmethod
    def from_callable(cls, table: Callable, ellipticity: float) -> "CoefficientField":
        """
        `table(points)` returns (a, b, c) with shapes (m, n, n), (m, n), (m,).
        """
        field = cls(kind=CoefficientKind.table, ellipticity=ellipticity)
        field._table = table
        return field

    @property
    def has_drift(self) -> bool:
        if self.kind == CoefficientKind.table:
            return True
        return self.drift is not None and any(b != 0 for b in self.drift)

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Diagonal of a, b and c at points, shapes (m, n), (m, n), (m,)."""
        m, dim = points.shape
        if self.kind == CoefficientKind.table:
            if self._table is None:
                raise InvalidArgumentException("Table coefficients need a callable")
            a, b, c = self._table(points)
            a = np.broadcast_to(np.asarray(a, dtype=float), (m, dim, dim))
            b = np.broadcast_to(np.asarray(b, dtype=float), (m, dim)).copy()
            c = np.broadcast_to(np.asarray(c, dtype=float), (m,)).copy()
            diagonal = np.einsum("mkk->mk", a).copy()
            if np.any(np.abs(a - diagonal[:, :, None] * np.eye(dim)) > 1e-14):
                raise InvalidArgumentException(
                    "Off-diagonal coefficients are not supported by the flux scheme"
                )
            self._check_table(diagonal, b, c)
            return diagonal, b, c

        if self.kind == CoefficientKind.checkerboard:
            parity = np.floor(points / self.period).astype(np.int64).sum(axis=1) % 2
            scale = np.where(parity == 0, self.low, self.high)
        else:
            scale = np.ones(m)
        diagonal = np.repeat(scale[:, None], dim, axis=1)
        b = np.zeros((m, dim))
        if self.drift is not None:
            if len(self.drift) != dim:
                raise InvalidArgumentException(f"Drift has {len(self.drift)} entries, grid is {dim}D")
            b[:] = self.drift
        c = np.full(m, self.zero_order)
        return diagonal, b, c

    def _check_table(self, diagonal: np.ndarray, b: np.ndarray, c: np.ndarray) -> None:
        lam = self.ellipticity
        if np.any(diagonal < 1 / lam - 1e-12) or np.any(diagonal > lam + 1e-12):
            raise InvalidArgumentException(f"Coefficient matrix not {lam}-elliptic")
        if np.any(np.abs(b).sum(axis=1) > lam - 1 + 1e-12):
            raise InvalidArgumentException("Drift exceeds ellipticity bound")
        if np.any(c > 0) or np.any(-c > lam - 1 + 1e-12):
            raise InvalidArgumentException("Zero order term must be nonpositive and bounded")


class RhsSpec(pydantic.BaseModel):
    """Right-hand side of L u = rhs, amplitude * |x|^gamma or amplitude * d^gamma."""

    kind: RhsKind = RhsKind.zero
    gamma: float = 0.0
    amplitude: float = 0.0
    sign: RhsSign = RhsSign.signed

    class Config:
        extra = "forbid"

    @pydantic.root_validator(skip_on_failure=True)
    def _check_sign(cls, values):
        amplitude = values["amplitude"]
        sign = values["sign"]
        if sign == RhsSign.nonpositive and amplitude > 0:
            raise ValueError("nonpositive right-hand side with positive amplitude")
        if sign == RhsSign.nonnegative and amplitude < 0:
            raise ValueError("nonnegative right-hand side with negative amplitude")
        return values

    def check_integrable(self, dim: int) -> None:
        if self.kind == RhsKind.distance_power and self.gamma <= -2 / dim:
            raise InvalidArgumentException(
                f"distance_power needs gamma > -2/n = {-2 / dim}: {self.gamma}"
            )
        if self.kind == RhsKind.radial_power and self.gamma <= -dim:
            raise InvalidArgumentException(f"radial_power needs gamma > -n = {-dim}: {self.gamma}")

    def evaluate(self, grid: GridDomain) -> np.ndarray:
        self.check_integrable(grid.dim)
        points = grid.points
        if self.kind == RhsKind.zero:
            return np.zeros(grid.size)
        if self.kind == RhsKind.constant:
            return np.full(grid.size, self.amplitude)
        if self.kind == RhsKind.radial_power:
            base = np.linalg.norm(points, axis=1)
        else:
            base = np.abs(np.asarray(signed_distance(grid.spec, points)))
        if self.gamma < 0:
            base = np.maximum(base, grid.h / 2)
        return self.amplitude * base ** self.gamma


class BoundaryData(pydantic.BaseModel):
    """Dirichlet values on the lateral boundary and on the outer sphere."""

    lateral: BoundaryValue = 0.0
    outer: BoundaryValue = 0.0

    class Config:
        arbitrary_types_allowed = True

    @classmethod
    def uniform(cls, value: BoundaryValue) -> "BoundaryData":
        return cls(lateral=value, outer=value)

    def evaluate(self, points: np.ndarray, outer: np.ndarray) -> np.ndarray:
        values = np.empty(len(points))
        for flag, data in ((False, self.lateral), (True, self.outer)):
            select = outer == flag
            if not select.any():
                continue
            if callable(data):
                values[select] = np.asarray(data(points[select]), dtype=float)
            else:
                values[select] = float(data)
        return values

    def describe(self) -> str:
        def text(value):
            return "callable" if callable(value) else repr(float(value))

        return f"lateral={text(self.lateral)}, outer={text(self.outer)}"


class ScalarField(pydantic.BaseModel):
    """Values per interior node of `grid`, extended by 0 outside the domain."""

    grid: GridDomain
    values: np.ndarray
    boundary_data: Optional[str] = None

    class Config:
        arbitrary_types_allowed = True

    @pydantic.validator("values")
    def _finite(cls, value):
        if not np.all(np.isfinite(value)):
            raise ValueError("field values must be finite")
        return value

    @classmethod
    def from_function(cls, grid: GridDomain, func: Callable[[np.ndarray], Any]) -> "ScalarField":
        values = np.asarray(func(grid.points), dtype=float)
        return cls(grid=grid, values=np.broadcast_to(values, (grid.size,)).copy())

    def full(self) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        out.ravel()[self.grid.interior_index] = self.values
        return out

    def scaled(self, factor: float) -> "ScalarField":
        return ScalarField(grid=self.grid, values=factor * self.values, boundary_data=self.boundary_data)

    def at(self, point: ArrayLike) -> float:
        row = self.grid.nearest_row(point)
        return 0.0 if row < 0 else float(self.values[row])

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Nearest-node values of the zero-extended field."""
        grid = self.grid
        index = np.rint(np.asarray(points, dtype=float) / grid.h).astype(np.int64)
        index = np.clip(index + np.asarray(grid.origin_index), 0, np.asarray(grid.shape) - 1)
        return self.full()[tuple(index.T)]


class LinearSystem(pydantic.BaseModel):
    grid: GridDomain
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    symmetric: bool
    boundary_data: Optional[str] = None

    class Config:
        arbitrary_types_allowed = True


def _arm_rows(grid: GridDomain, axis: int, step: int) -> np.ndarray:
    neighbour = grid.multi_index
    neighbour[:, axis] += step
    return grid.row_of[tuple(neighbour.T)]


def assemble(
    grid: GridDomain,
    coeffs: Optional[CoefficientField] = None,
    rhs: Optional[RhsSpec] = None,
    boundary: Optional[BoundaryData] = None,
) -> LinearSystem:
    coeffs = coeffs or CoefficientField()
    rhs = rhs or RhsSpec()
    boundary = boundary or BoundaryData()
    h = grid.h
    m = grid.size

    forcing = -rhs.evaluate(grid)
    a_cell, b_cell, c_cell = coeffs.evaluate(grid.points)
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    data: List[np.ndarray] = []
    diagonal = -c_cell.copy()
    index = np.arange(m)

    for axis in range(grid.dim):
        eta_pair = grid.eta[:, axis, :]
        centred = b_cell[:, axis] / ((eta_pair[:, 0] + eta_pair[:, 1]) * h)
        for side, step in enumerate((-1, 1)):
            eta = eta_pair[:, side]
            nbr = _arm_rows(grid, axis, step)
            inside = nbr >= 0
            a_face = a_cell[:, axis].copy()
            a_nbr = a_cell[nbr[inside], axis]
            a_face[inside] = 2 * a_face[inside] * a_nbr / (a_face[inside] + a_nbr)
            weight = a_face / (eta * h * h)
            # A = -L: diffusion arm adds to the diagonal, drift arm is +-b/(sum eta h)
            offdiag = -weight - step * centred
            diagonal += weight

            rows.append(index[inside])
            cols.append(nbr[inside])
            data.append(offdiag[inside])

            cut = ~inside
            if cut.any():
                direction = np.zeros(grid.dim)
                direction[axis] = step
                crossing = grid.points[cut] + (eta[cut] * h)[:, None] * direction
                values = boundary.evaluate(crossing, grid.outer[cut, axis, side])
                forcing[cut] -= offdiag[cut] * values

    rows.append(index)
    cols.append(index)
    data.append(diagonal)
    matrix = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
    ).tocsr()
    matrix.sum_duplicates()
    symmetric = not coeffs.has_drift
    logger.debug(f"Assembled {m} unknowns at h={h}, symmetric={symmetric}")
    return LinearSystem(
        grid=grid,
        matrix=matrix,
        rhs=forcing,
        symmetric=symmetric,
        boundary_data=boundary.describe(),
    )


def solve(
    system: LinearSystem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> ScalarField:
    if tol <= 0:
        raise InvalidArgumentException(f"Tolerance must be positive: {tol}")
    matrix, rhs = system.matrix, system.rhs
    jacobi = sparse.diags(1.0 / matrix.diagonal())
    method = cg if system.symmetric else bicgstab
    values, info = method(matrix, rhs, rtol=tol, atol=0.0, maxiter=max_iter, M=jacobi)
    norm = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(rhs - matrix @ values) / norm) if norm > 0 else 0.0
    if info != 0 or not np.all(np.isfinite(values)):
        raise NumericalFailureException(
            f"{method.__name__} did not reach rtol={tol} (info={info})",
            residual=residual,
            iterations=max_iter if info > 0 else None,
        )
    logger.debug(f"{method.__name__} converged, relative residual {residual:.3e}")
    return ScalarField(grid=system.grid, values=values, boundary_data=system.boundary_data)


def pair_rhs(spec: DomainSpec, gamma: float) -> RhsSpec:
    """-|x|^gamma on cones and sectors, -d^gamma on graph domains."""
    kind = RhsKind.distance_power if spec.kind == DomainKind.lipschitz_graph else RhsKind.radial_power
    return RhsSpec(kind=kind, gamma=gamma, amplitude=-1.0, sign=RhsSign.nonpositive)


def solve_pair(
    spec: DomainSpec,
    gamma: float,
    h: float,
    coeffs: Optional[CoefficientField] = None,
    boundary_value: float = 1.0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    grid: Optional[GridDomain] = None,
) -> Tuple[ScalarField, ScalarField]:
    """
    u: L u = 0, v: L v = -|x|^gamma (or -d^gamma), both 0 on the lateral
    boundary and `boundary_value` on the outer sphere.
    """
    if spec.kind not in (DomainKind.sector, DomainKind.cone, DomainKind.lipschitz_graph):
        raise InvalidArgumentException(f"Pair problems need a cone or graph domain: {spec.kind.value}")
    rhs = pair_rhs(spec, gamma)
    rhs.check_integrable(spec.dim)
    grid = grid or rasterize(spec, h)
    boundary = BoundaryData(lateral=0.0, outer=boundary_value)
    u = solve(assemble(grid, coeffs, RhsSpec(), boundary), tol, max_iter)
    v = solve(assemble(grid, coeffs, rhs, boundary), tol, max_iter)
    return u, v


def red_black_colors(grid: GridDomain) -> np.ndarray:
    return grid.multi_index.sum(axis=1) % 2


def default_omega(grid: GridDomain) -> float:
    extent = max(n * grid.h for n in grid.shape)
    return 2 / (1 + math.sin(math.pi * grid.h / extent))


def projected_sor(
    matrix: sparse.spmatrix,
    q: np.ndarray,
    colors: np.ndarray,
    omega: float,
    tol: float = 1e-9,
    max_iter: int = DEFAULT_MAX_ITER,
    initial: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, int, float]:
    """
    Solve the complementarity problem u >= 0, A u - q >= 0, u (A u - q) = 0
    by projected SOR. Rows of one colour must not couple, so each colour is
    updated at once. Returns (u, sweeps, gap) where the gap is
    max |min(u, (A u - q) / D)|.
    """
    if not (0 < omega < 2):
        raise InvalidArgumentException(f"Relaxation factor must lie in (0, 2): {omega}")
    matrix = sparse.csr_matrix(matrix)
    diagonal = matrix.diagonal()
    if np.any(diagonal <= 0):
        raise InvalidArgumentException("Complementarity matrix needs a positive diagonal")
    u = np.zeros(len(q)) if initial is None else np.maximum(np.asarray(initial, dtype=float), 0.0)
    groups = [np.flatnonzero(colors == color) for color in np.unique(colors)]
    blocks = [(rows, matrix[rows], diagonal[rows], q[rows]) for rows in groups]

    gap = math.inf
    for sweep in range(1, max_iter + 1):
        for rows, block, diag, q_rows in blocks:
            offdiag = block @ u - diag * u[rows]
            u[rows] = np.maximum(0.0, (1 - omega) * u[rows] + omega * (q_rows - offdiag) / diag)
        residual = (matrix @ u - q) / diagonal
        gap = float(np.max(np.abs(np.minimum(u, residual)))) if len(u) else 0.0
        if gap <= tol * max(1.0, float(u.max(initial=0.0))):
            logger.debug(f"Projected SOR converged after {sweep} sweeps, gap {gap:.3e}")
            return u, sweep, gap
    raise NumericalFailureException(
        f"Projected SOR did not converge in {max_iter} sweeps", residual=gap, iterations=max_iter
    )


def solve_obstacle(
    grid: GridDomain,
    forcing: Union[np.ndarray, ScalarField],
    tol: float = 1e-9,
    max_iter: int = DEFAULT_MAX_ITER,
    initial: Optional[np.ndarray] = None,
    omega: Optional[float] = None,
) -> ScalarField:
    """u >= 0 with -Delta_h u >= forcing, equality where u > 0, u = 0 on the boundary."""
    q = forcing.values if isinstance(forcing, ScalarField) else np.asarray(forcing, dtype=float)
    if q.shape != (grid.size,):
        raise InvalidArgumentException(f"Forcing has shape {q.shape}, grid has {grid.size} nodes")
    if not np.all(np.isfinite(q)):
        raise InvalidArgumentException("Forcing must be finite")
    system = assemble(grid)
    values, _, _ = projected_sor(
        system.matrix,
        q,
        red_black_colors(grid),
        omega or default_omega(grid),
        tol=tol,
        max_iter=max_iter,
        initial=initial,
    )
    return ScalarField(grid=grid, values=values, boundary_data=system.boundary_data)
