import enum
import math
from typing import (
    Dict,
    List,
    Optional,
    Tuple,
    TypedDict,
)

import pydantic


class DomainKind(str, enum.Enum):
    sector = "sector"
    cone = "cone"
    lipschitz_graph = "lipschitz_graph"
    disk = "disk"
    polygon = "polygon"


class Verdict(str, enum.Enum):
    bounded = "bounded"
    critical = "critical"
    counterexample = "counterexample"


class DomainSpec(pydantic.BaseModel):
    """
    Symbolic description of a domain.

    sector: planar sector, vertex at 0, bisector along +x2, full opening `aperture`.
    cone: right circular cone around +x_n with half-aperture `aperture`.
    lipschitz_graph: {x2 > g(x1)} with g piecewise linear through `vertices`.
    The first three are intersected with B_radius. `disk` and `polygon` are
    tables for the Hele-Shaw experiments and the Poisson checks.
    """

    kind: DomainKind
    dim: int = 2
    aperture: Optional[float] = None
    slope: Optional[float] = None
    vertices: Optional[List[Tuple[float, float]]] = None
    radius: float = 1.0

    class Config:
        extra = "forbid"
        allow_mutation = False

    @pydantic.root_validator(skip_on_failure=True)
    def _check_kind_fields(cls, values):
        kind = values["kind"]
        dim = values["dim"]
        aperture = values.get("aperture")
        vertices = values.get("vertices")
        if values["radius"] <= 0:
            raise ValueError("radius must be positive")
        if dim < 2:
            raise ValueError("dim must be >= 2")

        if kind == DomainKind.sector:
            if dim != 2:
                raise ValueError("sector requires dim=2")
            if aperture is None or not (0 < aperture < 2 * math.pi):
                raise ValueError(f"sector opening must lie in (0, 2pi): {aperture}")
            if vertices is not None:
                raise ValueError("sector does not take vertices")
        elif kind == DomainKind.cone:
            if aperture is None or not (0 < aperture < math.pi):
                raise ValueError(f"cone half-aperture must lie in (0, pi): {aperture}")
            if vertices is not None:
                raise ValueError("cone does not take vertices")
        elif kind == DomainKind.lipschitz_graph:
            if dim != 2:
                raise ValueError("lipschitz_graph requires dim=2")
            if aperture is not None:
                raise ValueError("lipschitz_graph does not take an aperture")
            if not vertices or len(vertices) < 2:
                raise ValueError("lipschitz_graph needs at least two vertices")
            if not any(x == 0.0 and y == 0.0 for x, y in vertices):
                raise ValueError("lipschitz_graph must pass through the origin")
            xs = [x for x, _ in vertices]
            if len(set(xs)) != len(xs):
                raise ValueError("lipschitz_graph abscissae must be distinct")
            ordered = sorted(vertices)
            steepest = max(
                abs(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(ordered, ordered[1:])
            )
            slope = values.get("slope")
            if slope is None or slope < steepest - 1e-12:
                raise ValueError(f"slope {slope} is below the graph Lipschitz constant")
        elif kind == DomainKind.disk:
            if aperture is not None or vertices is not None:
                raise ValueError("disk only takes a radius")
        elif kind == DomainKind.polygon:
            if dim != 2:
                raise ValueError("polygon requires dim=2")
            if not vertices or len(vertices) < 3:
                raise ValueError("polygon needs at least three vertices")
        return values


class HomogeneityReport(pydantic.BaseModel):
    dim: int
    aperture: float
    k: int = 1
    alpha_k: float
    alpha1: float
    alpha2: float
    lambda1: float
    f1_samples: List[Tuple[float, float]]


class RatioProfile(pydantic.BaseModel):
    radii: List[float]
    sup_ratio: List[float]
    ball_sup_ratio: List[float]
    anchor: List[float]
    anchor_ratio: float
    margin: float
    dropped_levels: List[int] = []


class GrowthFit(pydantic.BaseModel):
    fitted_exponent: float
    intercept: float
    normalized_intercept: Optional[float]
    residual: float
    fit_range: Tuple[float, float]
    radii: List[float]
    sups: List[float]


class IncrementSequence(pydantic.BaseModel):
    levels: List[int]
    increments: List[float]
    partial_sums: List[float]
    alpha1: float
    dropped_levels: List[int] = []


class WeissTrace(pydantic.BaseModel):
    radii: List[float]
    W: List[float]
    quadrature_h: float
    dropped_radii: List[float] = []


class HolderEstimate(pydantic.BaseModel):
    seminorm: float
    beta: float
    pairs_used: int
    pair_budget: int
    seed: int


class SumDivResult(pydantic.BaseModel):
    case: str
    subsequence_indices: List[int]
    ratio_table: Dict[int, List[float]]
    envelope_knots: List[Tuple[int, float]]


class WettingReport(pydantic.BaseModel):
    corner: Tuple[float, float]
    corner_angle: float
    h: float
    t_schedule: List[float]
    wet: bool
    first_wet_t: Optional[float]
    barrier_dry: bool
    volume_balance_error: Optional[float]
    wet_threshold: float
    corner_radius: float


class ThresholdRow(TypedDict):
    aperture: float
    alpha1: float
    gamma: float
    verdict: str
