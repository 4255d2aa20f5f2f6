import asyncio
import enum
import logging
import math
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Optional,
    Tuple,
    Type,
)

import numpy as np
import orjson
import pydantic
import scipy

from . import __version__, analysis, elliptic, geometry, heleshaw, output, plot, spectral
from .exceptions import (
    HarnackLabException,
    InsufficientResolutionException,
    InvalidArgumentException,
    InvalidExperimentException,
)
from .settings import Settings
from .types import DomainKind, DomainSpec, ThresholdRow
from .utils import expand_grid, run_async, set_dotted

logger = logging.getLogger(__name__)


class ExperimentName(str, enum.Enum):
    alpha = "alpha"
    pair = "pair"
    ratio = "ratio"
    growth = "growth"
    weiss = "weiss"
    fredholm = "fredholm"
    holder = "holder"
    sumdiv = "sumdiv"
    heleshaw = "heleshaw"
    threshold_sweep = "threshold-sweep"
    poisson = "poisson"


class GridConfig(pydantic.BaseModel):
    h: float = 1 / 64

    class Config:
        extra = "forbid"


class SolverConfig(pydantic.BaseModel):
    tol: Optional[float] = None
    max_iter: Optional[int] = None

    class Config:
        extra = "forbid"


class AnalysisConfig(pydantic.BaseModel):
    levels: int = 5
    margin: float = analysis.DEFAULT_MARGIN
    min_cells: float = 8.0
    pair_budget: int = 100_000
    seed: int = 42
    beta: Optional[float] = None
    anchor: Optional[List[float]] = None
    center: Optional[List[float]] = None
    radii: Optional[List[float]] = None
    j_max: int = 5

    class Config:
        extra = "forbid"


class SpectralConfig(pydantic.BaseModel):
    k: int = 1
    dim: Optional[int] = None
    apertures: Optional[List[float]] = None
    nodes: List[int] = [1000, 2000, 4000]

    class Config:
        extra = "forbid"


class SequenceFamily(str, enum.Enum):
    harmonic = "harmonic"
    constant = "constant"
    squares = "squares"


class SequenceConfig(pydantic.BaseModel):
    values: Optional[List[float]] = None
    input: Optional[str] = None
    family: Optional[SequenceFamily] = None
    horizon: int = 100_000

    class Config:
        extra = "forbid"


class TableKind(str, enum.Enum):
    square = "square"
    l_shape = "l_shape"
    corner = "corner"
    polygon = "polygon"


class HeleShawConfig(pydantic.BaseModel):
    table: TableKind = TableKind.square
    angle: Optional[float] = None
    vertices: Optional[List[Tuple[float, float]]] = None
    corner: Optional[Tuple[float, float]] = None
    source: Optional[Tuple[float, float]] = None
    t_max: float = 2.0
    steps: int = 8

    class Config:
        extra = "forbid"


class ExperimentConfig(pydantic.BaseModel):
    experiment: ExperimentName
    domain: Optional[DomainSpec] = None
    gamma: float = 0.0
    coefficients: elliptic.CoefficientField = elliptic.CoefficientField()
    grid: GridConfig = GridConfig()
    solver: SolverConfig = SolverConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    spectral: SpectralConfig = SpectralConfig()
    sequence: SequenceConfig = SequenceConfig()
    heleshaw: HeleShawConfig = HeleShawConfig()
    out_dir: Optional[str] = None

    class Config:
        extra = "forbid"


class Table(pydantic.BaseModel):
    columns: List[str]
    rows: List[List[Any]]


class ExperimentResult(pydantic.BaseModel):
    report: Dict[str, Any]
    tables: Dict[str, Table] = {}
    plots: Dict[str, str] = {}
    fields: Dict[str, elliptic.ScalarField] = {}
    masks: Dict[str, np.ndarray] = {}

    class Config:
        arbitrary_types_allowed = True


ExperimentFunc = Callable[[ExperimentConfig, Settings], ExperimentResult]
_registered: Dict[str, Tuple[ExperimentFunc, Type[pydantic.BaseModel]]] = {}


def register(name: str, func: ExperimentFunc, config: Type[pydantic.BaseModel] = ExperimentConfig):
    _registered[name] = (func, config)


def registered() -> List[str]:
    return sorted(_registered)


def execute(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    name = config.experiment.value
    if name not in _registered:
        raise InvalidExperimentException(f"Experiment is not registered: {name}")
    func, config_type = _registered[name]
    if not isinstance(config, config_type):
        raise InvalidExperimentException(f"Invalid experiment config: {name}: {config}")
    logger.info(f"Running experiment: {name}")
    result = func(config, settings)
    logger.info(f"Finished experiment: {name}")
    return result


def config_hash(config: pydantic.BaseModel) -> str:
    return output.sha256(orjson.dumps(config.dict(), option=orjson.OPT_SORT_KEYS))


def _comment(config: ExperimentConfig) -> str:
    return f"experiment={config.experiment.value}, h={config.grid.h}, gamma={config.gamma}"


def write_result(
    config: ExperimentConfig, settings: Settings, result: ExperimentResult, out_dir: Path
) -> List[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    comment = _comment(config)
    written = [output.write_json(out_dir / "report.json", result.report)]
    for name, table in sorted(result.tables.items()):
        written.append(output.write_csv(out_dir / f"{name}.csv", table.columns, table.rows, comment))
    for name, svg in sorted(result.plots.items()):
        path = out_dir / f"{name}.svg"
        path.write_text(svg)
        written.append(path)
    for name, field in sorted(result.fields.items()):
        written.append(output.write_field_csv(out_dir / f"{name}.csv", field, comment))
        written.append(output.write_field_binary(out_dir / f"{name}.bin", field))
    for name, mask in sorted(result.masks.items()):
        path = out_dir / f"{name}.csv"
        path.write_text(output.mask_text(mask))
        written.append(path)

    manifest = {
        "config": config,
        "config_sha256": config_hash(config),
        "versions": {
            "harnacklab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pydantic": str(pydantic.VERSION),
            "orjson": orjson.__version__,
        },
        "grid": {"h": config.grid.h},
        "tolerances": _tolerances(config, settings),
        "files": {path.name: output.sha256(path.read_bytes()) for path in written},
    }
    written.append(output.write_json(out_dir / "manifest.json", manifest))
    return written


def run(config: ExperimentConfig, settings: Settings, out_dir: Optional[Path] = None) -> List[Path]:
    result = execute(config, settings)
    target = out_dir or Path(config.out_dir or f"out/{config.experiment.value}")
    return write_result(config, settings, result, target)


def _tolerances(config: ExperimentConfig, settings: Settings) -> Dict[str, Any]:
    tol, max_iter = _solver(config, settings)
    return {
        "solver_tol": tol,
        "solver_max_iter": max_iter,
        "psor_tol": settings.psor_tol,
        "psor_max_iter": settings.psor_max_iter,
        "critical_band": analysis.CRITICAL_BAND,
    }


def _solver(config: ExperimentConfig, settings: Settings) -> Tuple[float, int]:
    return (
        config.solver.tol or settings.solver_tol,
        config.solver.max_iter or settings.solver_max_iter,
    )


def _domain(config: ExperimentConfig, *kinds: DomainKind) -> DomainSpec:
    if config.domain is None:
        raise InvalidArgumentException(f"Experiment {config.experiment.value} needs a domain")
    if kinds and config.domain.kind not in kinds:
        allowed = ", ".join(k.value for k in kinds)
        raise InvalidArgumentException(
            f"Experiment {config.experiment.value} needs one of {allowed}: {config.domain.kind.value}"
        )
    return config.domain


_CONE_KINDS = (DomainKind.sector, DomainKind.cone, DomainKind.lipschitz_graph)


def _axis_point(dim: int, height: float) -> List[float]:
    point = [0.0] * dim
    point[-1] = height
    return point


def _pair(config: ExperimentConfig, settings: Settings):
    spec = _domain(config, *_CONE_KINDS)
    tol, max_iter = _solver(config, settings)
    return spec, elliptic.solve_pair(
        spec, config.gamma, config.grid.h, config.coefficients, tol=tol, max_iter=max_iter
    )


def _homogeneity(spec: DomainSpec, k: int = 1):
    if spec.kind == DomainKind.sector:
        return spectral.sector_report(spec.aperture, k)
    if spec.kind == DomainKind.cone and spec.dim == 2:
        return spectral.sector_report(2 * spec.aperture, k)
    if spec.kind == DomainKind.cone:
        return spectral.alpha_axisymmetric(spec.dim, spec.aperture, k)
    return spectral.sector_report(spectral.tangent_opening(spec), k)


def run_alpha(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    spec = _domain(config, *_CONE_KINDS)
    report = _homogeneity(spec, config.spectral.k)
    verdict = analysis.threshold_verdict(report.alpha1, config.gamma)
    thetas, values = zip(*report.f1_samples)
    return ExperimentResult(
        report={**report.dict(), "gamma": config.gamma, "verdict": verdict.value},
        tables={"f1": Table(columns=["theta", "f1"], rows=[list(p) for p in report.f1_samples])},
        plots={"f1": plot.line_plot({"f1": (thetas, values)}, "cross-section profile", "theta")},
    )


def _field_summary(field: elliptic.ScalarField) -> Dict[str, float]:
    return {"min": float(field.values.min()), "max": float(field.values.max())}


def run_pair(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    spec, (u, v) = _pair(config, settings)
    report = {
        "domain": spec,
        "gamma": config.gamma,
        "h": u.grid.h,
        "nodes": u.grid.size,
        "shape": list(u.grid.shape),
        "boundary_data": u.boundary_data,
        "u": _field_summary(u),
        "v": _field_summary(v),
    }
    return ExperimentResult(report=report, fields={"u": u, "v": v})


def run_ratio(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    spec, (u, v) = _pair(config, settings)
    options = config.analysis
    alpha1 = spectral.alpha_for_domain(spec)
    anchor = options.anchor or _axis_point(spec.dim, 0.25)
    profile = analysis.ratio_profile(
        u, v, anchor, options.levels, options.margin, options.min_cells
    )
    increments = analysis.dyadic_increments(u, v, anchor, alpha1, options.levels, options.margin)
    try:
        rate: Optional[float] = analysis.profile_log2_rate(profile)
    except InsufficientResolutionException:
        rate = None
    normalized = [s / profile.anchor_ratio for s in profile.sup_ratio]
    report = {
        **profile.dict(),
        "normalized_sup_ratio": normalized,
        "log2_rate": rate,
        "alpha1": alpha1,
        "gamma": config.gamma,
        "verdict": analysis.threshold_verdict(alpha1, config.gamma).value,
        "increments": increments.dict(),
        "partial_sums_plateau": analysis.has_plateau(increments.partial_sums),
    }
    return ExperimentResult(
        report=report,
        tables={
            "ratio": Table(
                columns=["r", "sup_ratio", "ball_sup_ratio", "normalized"],
                rows=[
                    list(row)
                    for row in zip(
                        profile.radii, profile.sup_ratio, profile.ball_sup_ratio, normalized
                    )
                ],
            ),
            "increments": Table(
                columns=["k", "a_k", "partial_sum"],
                rows=[
                    list(row)
                    for row in zip(
                        increments.levels, increments.increments, increments.partial_sums
                    )
                ],
            ),
        },
        plots={
            "ratio": plot.line_plot(
                {"shell": (profile.radii, normalized)},
                "sup v/u relative to the anchor",
                y_label="ratio",
                log_x=True,
                log_y=True,
            )
        },
    )


def run_growth(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    spec, (u, _) = _pair(config, settings)
    center = config.analysis.center or [0.0] * spec.dim
    fit = analysis.growth_exponent(u, center)
    expected = spectral.alpha_for_domain(spec)
    return ExperimentResult(
        report={**fit.dict(), "expected_exponent": expected, "center": center},
        tables={"growth": Table(columns=["r", "sup_u"], rows=[list(p) for p in zip(fit.radii, fit.sups)])},
        plots={
            "growth": plot.line_plot(
                {"sup u": (fit.radii, fit.sups)}, "boundary growth", y_label="sup u", log_x=True, log_y=True
            )
        },
    )


def run_weiss(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    spec = _domain(config, DomainKind.sector, DomainKind.cone)
    tol, max_iter = _solver(config, settings)
    _, v = elliptic.solve_pair(
        spec, config.gamma, config.grid.h, config.coefficients, tol=tol, max_iter=max_iter
    )
    radii = config.analysis.radii or np.linspace(0.1, 0.45, 8).tolist()
    trace = analysis.weiss_trace(v, radii)
    steps = np.diff(trace.W)
    return ExperimentResult(
        report={**trace.dict(), "min_step": float(steps.min()) if len(steps) else None},
        tables={"weiss": Table(columns=["r", "W"], rows=[list(p) for p in zip(trace.radii, trace.W)])},
        plots={"weiss": plot.line_plot({"W": (trace.radii, trace.W)}, "Weiss energy", y_label="W")},
    )


def run_fredholm(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    dim = config.spectral.dim or (config.domain.dim if config.domain else 2)
    nodes = sorted(config.spectral.nodes)
    residuals = [spectral.fredholm_residual(dim, n) for n in nodes]
    limit = spectral.fredholm_limit(dim)
    return ExperimentResult(
        report={
            "dim": dim,
            "critical_aperture": spectral.critical_aperture(dim),
            "nodes": nodes,
            "residuals": residuals,
            "limit": limit,
        },
        tables={
            "fredholm": Table(
                columns=["nodes", "residual"], rows=[list(p) for p in zip(nodes, residuals)]
            )
        },
    )


def holder_exponent(alpha1: float, gamma: float) -> float:
    margin = 2 - alpha1 + gamma
    if margin <= 0:
        raise InvalidArgumentException(f"No Hoelder exponent when 2 - alpha1 + gamma = {margin} <= 0")
    return min(1.0, margin)


def run_holder(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    spec, (u, v) = _pair(config, settings)
    options = config.analysis
    beta = options.beta or holder_exponent(spectral.alpha_for_domain(spec), config.gamma)
    estimate = analysis.holder_quotient(
        u, v, beta, options.pair_budget, options.seed, options.margin
    )
    return ExperimentResult(report={**estimate.dict(), "h": config.grid.h})


def load_sequence(options: SequenceConfig) -> np.ndarray:
    if options.values is not None:
        return np.asarray(options.values, dtype=float)
    if options.input is not None:
        text = Path(options.input).read_bytes()
        try:
            return np.asarray(orjson.loads(text), dtype=float)
        except orjson.JSONDecodeError:
            return np.asarray([float(line) for line in text.decode().split() if line], dtype=float)
    k = np.arange(1, options.horizon + 1)
    if options.family == SequenceFamily.harmonic:
        return 1.0 / k
    if options.family == SequenceFamily.constant:
        return np.ones(options.horizon)
    if options.family == SequenceFamily.squares:
        root = np.rint(np.sqrt(k)).astype(np.int64)
        return (root * root == k).astype(float)
    raise InvalidArgumentException("sumdiv needs sequence values, an input file or a family")


def run_sumdiv(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    a = load_sequence(config.sequence)
    j_max = config.analysis.j_max
    result = analysis.sumdiv_subsequence(a, j_max)
    indices = result.subsequence_indices
    tail = slice(len(indices) // 2, None)
    report = {
        "case": result.case,
        "length": len(a),
        "selected": len(indices),
        "first_indices": indices[:20],
        "tail_max_ratio": {
            str(j): max(ratios[tail]) if ratios[tail] else None
            for j, ratios in result.ratio_table.items()
        },
        "envelope_knots": len(result.envelope_knots),
    }
    columns = ["k_l"] + [f"j={j}" for j in range(1, j_max + 1)]
    rows = [
        [k] + [result.ratio_table[j][position] for j in range(1, j_max + 1)]
        for position, k in enumerate(indices)
    ]
    return ExperimentResult(report=report, tables={"sumdiv": Table(columns=columns, rows=rows)})


_TABLE_DEFAULTS = {
    TableKind.square: ((1.0, 1.0), (0.0, 0.0)),
    TableKind.l_shape: ((0.0, 0.0), (-0.35, -0.35)),
    TableKind.corner: ((0.0, 0.0), (0.0, 0.75)),
}


def _table(options: HeleShawConfig) -> Tuple[DomainSpec, Tuple[float, float], Tuple[float, float]]:
    if options.table == TableKind.square:
        spec = geometry.square_table()
    elif options.table == TableKind.l_shape:
        spec = geometry.l_shaped_table()
    elif options.table == TableKind.corner:
        spec = geometry.corner_table(options.angle if options.angle is not None else 3 * math.pi / 4)
    else:
        if not options.vertices:
            raise InvalidArgumentException("Polygon tables need vertices")
        spec = geometry.make_polygon(options.vertices)
    corner, source = _TABLE_DEFAULTS.get(options.table, (None, None))
    corner = options.corner or corner
    source = options.source or source
    if corner is None or source is None:
        raise InvalidArgumentException("Polygon tables need a corner and a source")
    return spec, corner, source


def run_heleshaw(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    options = config.heleshaw
    spec, corner, source = _table(options)
    report, state = heleshaw.corner_sweep(
        spec,
        corner,
        source,
        options.t_max,
        options.steps,
        config.grid.h,
        tol=settings.psor_tol,
        max_iter=settings.psor_max_iter,
    )
    reached = [t for t in report.t_schedule if t <= state.t]
    return ExperimentResult(
        report={**report.dict(), "table": spec, "source": source, "final_t": state.t},
        tables={"schedule": Table(columns=["t"], rows=[[t] for t in reached])},
        fields={"u_t": state.u_t},
        masks={"wet_mask": state.wet_mask},
    )


def threshold_rows(apertures: List[float], gamma: float, dim: int = 2) -> List[ThresholdRow]:
    rows: List[ThresholdRow] = []
    for aperture in apertures:
        if dim == 2:
            alpha1 = spectral.alpha_sector(aperture)
        else:
            alpha1 = spectral.alpha_axisymmetric(dim, aperture).alpha1
        verdict = analysis.threshold_verdict(alpha1, gamma)
        rows.append(
            ThresholdRow(aperture=aperture, alpha1=alpha1, gamma=gamma, verdict=verdict.value)
        )
    return rows


def run_threshold_sweep(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    dim = config.spectral.dim or 2
    apertures = config.spectral.apertures or [k * math.pi / 4 for k in range(1, 8)]
    rows = threshold_rows(apertures, config.gamma, dim)
    columns = ["aperture", "alpha1", "gamma", "verdict"]
    return ExperimentResult(
        report={"dim": dim, "rows": rows},
        tables={"threshold": Table(columns=columns, rows=[[row[c] for c in columns] for row in rows])},
    )


def run_poisson(config: ExperimentConfig, settings: Settings) -> ExperimentResult:
    spec = config.domain or geometry.make_disk()
    if spec.kind != DomainKind.disk:
        raise InvalidArgumentException(f"Poisson check needs a disk: {spec.kind.value}")
    tol, max_iter = _solver(config, settings)
    grid = geometry.rasterize(spec, config.grid.h)
    rhs = elliptic.RhsSpec(kind=elliptic.RhsKind.constant, amplitude=-1.0)
    u = elliptic.solve(elliptic.assemble(grid, config.coefficients, rhs), tol, max_iter)
    exact = (spec.radius ** 2 - np.sum(grid.points ** 2, axis=1)) / (2 * spec.dim)
    return ExperimentResult(
        report={
            "h": grid.h,
            "value_at_origin": u.at(np.zeros(spec.dim)),
            "error_at_origin": abs(u.at(np.zeros(spec.dim)) - spec.radius ** 2 / (2 * spec.dim)),
            "max_error": float(np.abs(u.values - exact).max()),
        }
    )


register(ExperimentName.alpha.value, run_alpha)
register(ExperimentName.pair.value, run_pair)
register(ExperimentName.ratio.value, run_ratio)
register(ExperimentName.growth.value, run_growth)
register(ExperimentName.weiss.value, run_weiss)
register(ExperimentName.fredholm.value, run_fredholm)
register(ExperimentName.holder.value, run_holder)
register(ExperimentName.sumdiv.value, run_sumdiv)
register(ExperimentName.heleshaw.value, run_heleshaw)
register(ExperimentName.threshold_sweep.value, run_threshold_sweep)
register(ExperimentName.poisson.value, run_poisson)


def _summary(report: Dict[str, Any]) -> Dict[str, Any]:
    return {
        key: value
        for key, value in report.items()
        if isinstance(value, (int, float, str, bool)) or value is None
    }


async def sweep(
    base: Dict[str, Any], grid: Dict[str, List[Any]], settings: Settings
) -> Table:
    """
    Run one experiment per point of the parameter grid. Rows keep grid order,
    failures land in the status column and the sweep carries on.
    """
    semaphore = asyncio.Semaphore(max(1, settings.threads))
    combos = list(expand_grid(grid))

    async def run_row(combo: List[Tuple[str, Any]]) -> Dict[str, Any]:
        data = base
        for path, value in combo:
            data = set_dotted(data, path, value)
        row: Dict[str, Any] = dict(combo)
        try:
            config = ExperimentConfig.parse_obj(data)
            async with semaphore:
                result = await run_async(execute, config, settings)
        except (pydantic.ValidationError, HarnackLabException) as err:
            logger.exception(f"Sweep row failed: {combo}")
            row["status"] = f"{type(err).__name__}: {err}".replace("\n", " ")
            return row
        row.update(_summary(result.report))
        row["status"] = "ok"
        return row

    rows = await asyncio.gather(*(run_row(combo) for combo in combos))
    keys = sorted(grid)
    extra = sorted({key for row in rows for key in row} - set(keys) - {"status"})
    columns = keys + extra + ["status"]
    return Table(columns=columns, rows=[[row.get(c) for c in columns] for row in rows])
