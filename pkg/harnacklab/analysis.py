import logging
import math
from typing import (
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
from numpy.typing import ArrayLike
from scipy.interpolate import RegularGridInterpolator

from .elliptic import ScalarField
from .exceptions import InsufficientResolutionException, InvalidArgumentException
from .geometry import GridDomain, region_distance
from .types import (
    DomainKind,
    GrowthFit,
    HolderEstimate,
    IncrementSequence,
    RatioProfile,
    SumDivResult,
    Verdict,
    WeissTrace,
)

logger = logging.getLogger(__name__)

DEFAULT_MARGIN = 2.0
CRITICAL_BAND = 1e-9
MIN_FIT_RADII = 4


def _shared_grid(u: ScalarField, v: ScalarField) -> GridDomain:
    if u.grid is not v.grid and (u.grid.shape != v.grid.shape or u.grid.h != v.grid.h):
        raise InvalidArgumentException("Fields must live on the same grid")
    return u.grid


def admissible_mask(u: ScalarField, margin: float = DEFAULT_MARGIN) -> np.ndarray:
    """Rows at distance >= margin * h from the boundary with u > 0."""
    grid = u.grid
    depth = -np.asarray(region_distance(grid.spec, grid.points))
    return (depth >= margin * grid.h) & (u.values > 0)


def _anchor_row(grid: GridDomain, admissible: np.ndarray, anchor: ArrayLike) -> int:
    row = grid.nearest_row(anchor)
    if row < 0 or not admissible[row]:
        raise InvalidArgumentException(f"Anchor {list(anchor)} is not an admissible cell")
    return row


def ratio_profile(
    u: ScalarField,
    v: ScalarField,
    anchor: ArrayLike,
    levels: int,
    margin: float = DEFAULT_MARGIN,
    min_cells: float = 8.0,
) -> RatioProfile:
    """
    Levels start at radius 1/2 and halve: level j covers the dyadic shell
    r_j / 2 < |x| <= r_j with r_j = 2^-j / 2. `sup_ratio` is the shell sup of
    v/u, `ball_sup_ratio` the sup over B_{r_j} assembled from the shells below
    it. A level is dropped, and listed in `dropped_levels`, when its inner
    radius is below min_cells * h or it holds no admissible cells.
    """
    grid = _shared_grid(u, v)
    admissible = admissible_mask(u, margin)
    row = _anchor_row(grid, admissible, anchor)
    norms = np.linalg.norm(grid.points, axis=1)
    quotient = np.zeros(grid.size)
    quotient[admissible] = v.values[admissible] / u.values[admissible]

    radii: List[float] = []
    sups: List[float] = []
    dropped: List[int] = []
    for level in range(levels):
        radius = 0.5 * 2.0 ** -level
        shell = admissible & (norms <= radius) & (norms > radius / 2)
        if radius / 2 < min_cells * grid.h - 1e-15 or not shell.any():
            dropped.append(level)
            continue
        radii.append(radius)
        sups.append(float(quotient[shell].max()))
    if dropped:
        logger.info(f"Ratio profile dropped unresolved levels {dropped} at h={grid.h}")

    ball = np.maximum.accumulate(np.asarray(sups)[::-1])[::-1] if sups else np.zeros(0)
    return RatioProfile(
        radii=radii,
        sup_ratio=sups,
        ball_sup_ratio=ball.tolist(),
        anchor=grid.points[row].tolist(),
        anchor_ratio=float(quotient[row]),
        margin=margin,
        dropped_levels=dropped,
    )


def fit_log2_rate(radii: Sequence[float], values: Sequence[float]) -> float:
    """Growth of values per halving of the radius, in powers of 2."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(radii) < 2 or np.any(values <= 0):
        raise InsufficientResolutionException("Need two positive samples to fit a rate")
    slope, _ = np.polyfit(-np.log2(radii), np.log2(values), 1)
    return float(slope)


def profile_log2_rate(profile: RatioProfile, max_radius: float = 0.25) -> float:
    """Log2 growth rate of the shell sups over radii <= max_radius."""
    pairs = [(r, s) for r, s in zip(profile.radii, profile.sup_ratio) if r <= max_radius + 1e-15]
    if len(pairs) < 2:
        raise InsufficientResolutionException(
            f"Only {len(pairs)} resolved levels at radius <= {max_radius}"
        )
    radii, sups = zip(*pairs)
    return fit_log2_rate(radii, sups)


def growth_exponent(
    u: ScalarField,
    center: ArrayLike,
    levels: Optional[int] = None,
    max_radius: float = 0.25,
    min_cells: float = 8.0,
) -> GrowthFit:
    """Fit log sup_{B_r(center)} u = b + beta log r over dyadic r in [8h, 1/4]."""
    grid = u.grid
    center = np.asarray(center, dtype=float)
    distance = np.linalg.norm(grid.points - center, axis=1)

    radii: List[float] = []
    sups: List[float] = []
    radius = max_radius
    while radius >= min_cells * grid.h - 1e-15:
        if levels is not None and len(radii) >= levels:
            break
        inside = distance <= radius + 1e-12
        peak = float(u.values[inside].max()) if inside.any() else 0.0
        if peak > 0:
            radii.append(radius)
            sups.append(peak)
        radius /= 2
    if len(radii) < MIN_FIT_RADII:
        raise InsufficientResolutionException(
            f"Only {len(radii)} usable radii in [{min_cells}h, {max_radius}] at h={grid.h}"
        )

    (slope, offset), residuals, *_ = np.polyfit(np.log(radii), np.log(sups), 1, full=True)
    intercept = math.exp(offset)
    reference = np.zeros(grid.dim)
    reference[-1] = 0.5
    scale = u.at(reference)
    return GrowthFit(
        fitted_exponent=float(slope),
        intercept=intercept,
        normalized_intercept=intercept / scale if scale > 0 else None,
        residual=float(residuals[0]) if len(residuals) else 0.0,
        fit_range=(min(radii), max(radii)),
        radii=radii,
        sups=sups,
    )


def dyadic_increments(
    u: ScalarField,
    v: ScalarField,
    anchor: ArrayLike,
    alpha1: float,
    levels: int,
    margin: float = DEFAULT_MARGIN,
) -> IncrementSequence:
    """
    a_k = 2^(k alpha1) sup_{B_{2^-k}} |v - q_k u|, q_k = v/u at the admissible
    cell nearest 2^-k anchor.
    """
    grid = _shared_grid(u, v)
    admissible = admissible_mask(u, margin)
    anchor = np.asarray(anchor, dtype=float)
    _anchor_row(grid, admissible, anchor)
    rows = np.flatnonzero(admissible)
    points = grid.points[rows]
    norms = np.linalg.norm(points, axis=1)

    kept: List[int] = []
    increments: List[float] = []
    dropped: List[int] = []
    for k in range(levels):
        scale = 2.0 ** -k
        inside = norms <= scale
        target = scale * anchor
        gaps = np.linalg.norm(points - target, axis=1)
        nearest = int(np.argmin(gaps)) if len(gaps) else -1
        if not inside.any() or nearest < 0 or gaps[nearest] > np.linalg.norm(target) / 2:
            dropped.append(k)
            continue
        row = rows[nearest]
        q = v.values[row] / u.values[row]
        ball = rows[inside]
        deviation = float(np.abs(v.values[ball] - q * u.values[ball]).max())
        kept.append(k)
        increments.append(2.0 ** (k * alpha1) * deviation)

    return IncrementSequence(
        levels=kept,
        increments=increments,
        partial_sums=np.cumsum(increments).tolist(),
        alpha1=alpha1,
        dropped_levels=dropped,
    )


def has_plateau(partial_sums: Sequence[float], rel_tol: float = 0.05, window: int = 2) -> bool:
    """True when the last `window` terms add less than rel_tol of the running sum."""
    sums = np.asarray(partial_sums, dtype=float)
    if len(sums) <= window or sums[-1] <= 0:
        return False
    return bool(sums[-1] - sums[-1 - window] <= rel_tol * sums[-1])


def _gradient_arrays(v: ScalarField) -> List[np.ndarray]:
    """
    Gradient on grid-shaped arrays. Interior nodes use the three-point formula
    on the cut-cell arms (zero data at crossings), exterior nodes near
    the domain take the mean of their already known axis neighbours, layer by
    layer.
    """
    grid = v.grid
    h = grid.h
    multi = grid.multi_index
    interior = grid.interior_mask()
    gradients = []
    for axis in range(grid.dim):
        values = []
        for step in (-1, 1):
            neighbour = multi.copy()
            neighbour[:, axis] += step
            nbr = grid.row_of[tuple(neighbour.T)]
            values.append(np.where(nbr >= 0, v.values[np.maximum(nbr, 0)], 0.0))
        back, front = values
        h1 = grid.eta[:, axis, 0] * h
        h2 = grid.eta[:, axis, 1] * h
        derivative = (h1 * h1 * front - h2 * h2 * back + (h2 * h2 - h1 * h1) * v.values) / (
            h1 * h2 * (h1 + h2)
        )
        full = np.zeros(grid.shape)
        full.ravel()[grid.interior_index] = derivative
        gradients.append(full)

    # one layer per dimension reaches every node sharing a cell with the domain;
    # the raster keeps an exterior frame, so rolling never wraps interior values
    known = interior.copy()
    for _ in range(grid.dim):
        count = sum(
            np.roll(known, step, axis=axis).astype(float)
            for axis in range(grid.dim)
            for step in (-1, 1)
        )
        layer = ~known & (count > 0)
        for full in gradients:
            masked = np.where(known, full, 0.0)
            total = sum(
                np.roll(masked, step, axis=axis) for axis in range(grid.dim) for step in (-1, 1)
            )
            full[layer] = total[layer] / count[layer]
        known |= layer
    return gradients


def _cap_directions(spec, samples: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit directions covering the cross-section of a sector or cone with
    trapezoid weights summing to the cross-section measure.
    """
    if spec.kind == DomainKind.sector:
        phi = np.linspace(-spec.aperture / 2, spec.aperture / 2, samples)
        weights = np.full(samples, spec.aperture / (samples - 1))
        weights[[0, -1]] /= 2
        return np.stack([np.sin(phi), np.cos(phi)], axis=1), weights

    dim = spec.dim
    theta = np.linspace(0.0, spec.aperture, samples)
    theta_weights = np.full(samples, spec.aperture / (samples - 1))
    theta_weights[[0, -1]] /= 2
    azimuths = 4 * samples
    phi = np.arange(azimuths) * 2 * math.pi / azimuths
    t, p = np.meshgrid(theta, phi, indexing="ij")
    directions = np.zeros((samples, azimuths, dim))
    directions[..., 0] = np.sin(t) * np.cos(p)
    directions[..., 1] = np.sin(t) * np.sin(p)
    directions[..., -1] = np.cos(t)
    # azimuthal mean times |S^(n-2)| sin^(n-2) theta
    sphere = 2 * math.pi ** ((dim - 1) / 2) / math.gamma((dim - 1) / 2)
    weights = (theta_weights * np.sin(theta) ** (dim - 2) * sphere)[:, None] / azimuths
    weights = np.broadcast_to(weights, (samples, azimuths))
    return directions.reshape(-1, dim), weights.ravel()


def weiss_trace(v: ScalarField, radii: Iterable[float], density: float = 4.0) -> WeissTrace:
    """
    W(r) = r^-(n+2) int_{B_r} (|grad v|^2 - 2v) - 2 r^-(n+3) int_{dB_r} v^2,
    integrated in polar coordinates centred at the vertex: midpoint rule in
    the radius, trapezoid rule across the cross-section, fields linearly
    interpolated from the grid.
    """
    grid = v.grid
    spec = grid.spec
    if spec.kind not in (DomainKind.sector, DomainKind.cone):
        raise InvalidArgumentException(f"Weiss energy needs a cone or sector: {spec.kind.value}")
    dim = grid.dim
    h = grid.h
    axes = tuple(grid.axes)

    def interpolator(values: np.ndarray) -> RegularGridInterpolator:
        return RegularGridInterpolator(axes, values, bounds_error=False, fill_value=0.0)

    value_at = interpolator(v.full())
    energy_at = interpolator(sum(g * g for g in _gradient_arrays(v)))

    kept: List[float] = []
    values: List[float] = []
    dropped: List[float] = []
    for radius in radii:
        if not (8 * h < radius < spec.radius / 2):
            dropped.append(float(radius))
            continue
        samples = max(16, int(round(density * radius / h)))
        directions, weights = _cap_directions(spec, samples)
        shells = (np.arange(samples) + 0.5) * radius / samples

        sphere_values = value_at(radius * directions)
        sphere = radius ** (dim - 1) * float(weights @ sphere_values ** 2)

        bulk = 0.0
        for rho in shells:
            points = rho * directions
            integrand = energy_at(points) - 2 * value_at(points)
            bulk += rho ** (dim - 1) * float(weights @ integrand)
        bulk *= radius / samples

        kept.append(float(radius))
        values.append(bulk / radius ** (dim + 2) - 2 * sphere / radius ** (dim + 3))

    if dropped:
        logger.info(f"Weiss trace dropped radii {dropped} outside (8h, R/2)")
    return WeissTrace(radii=kept, W=values, quadrature_h=h, dropped_radii=dropped)


def holder_quotient(
    u: ScalarField,
    v: ScalarField,
    beta: float,
    pair_budget: int = 100_000,
    seed: int = 42,
    margin: float = DEFAULT_MARGIN,
    region_radius: float = 0.5,
) -> HolderEstimate:
    """
    Sampled C^{0,beta} seminorm of q = v/u over admissible cells in
    B_region_radius. Pairs are stratified over dyadic separation bands
    between margin*h and region_radius.
    """
    if not (0 < beta <= 1):
        raise InvalidArgumentException(f"Hoelder exponent must lie in (0, 1]: {beta}")
    grid = _shared_grid(u, v)
    admissible = admissible_mask(u, margin) & (
        np.linalg.norm(grid.points, axis=1) <= region_radius
    )
    rows = np.flatnonzero(admissible)
    if len(rows) < 2:
        raise InsufficientResolutionException("Fewer than two admissible cells")
    quotient = np.zeros(grid.size)
    quotient[rows] = v.values[rows] / u.values[rows]

    rng = np.random.default_rng(seed)
    low = margin * grid.h
    bands = max(1, int(math.ceil(math.log2(2 * region_radius / low))))
    per_band = max(1, pair_budget // bands)
    origin = np.asarray(grid.origin_index)
    shape = np.asarray(grid.shape)

    best = 0.0
    used = 0
    for band in range(bands):
        first = rows[rng.integers(0, len(rows), per_band)]
        length = low * 2.0 ** (band + rng.random(per_band))
        direction = rng.normal(size=(per_band, grid.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        target = grid.points[first] + length[:, None] * direction
        index = np.rint(target / grid.h).astype(np.int64) + origin
        inside = np.all((index >= 0) & (index < shape), axis=1)
        second = np.full(per_band, -1)
        second[inside] = grid.row_of[tuple(index[inside].T)]
        valid = second >= 0
        valid[valid] = admissible[second[valid]] & (second[valid] != first[valid])
        if not valid.any():
            continue
        a, b = first[valid], second[valid]
        separation = np.linalg.norm(grid.points[a] - grid.points[b], axis=1)
        ratio = np.abs(quotient[a] - quotient[b]) / separation ** beta
        best = max(best, float(ratio.max()))
        used += int(valid.sum())

    return HolderEstimate(
        seminorm=best, beta=beta, pairs_used=used, pair_budget=pair_budget, seed=seed
    )


def threshold_verdict(alpha1: float, gamma: float) -> Verdict:
    """Sign of 2 - alpha1 + gamma, critical within 1e-9."""
    if alpha1 <= 0:
        raise InvalidArgumentException(f"Homogeneity exponent must be positive: {alpha1}")
    margin = 2 - alpha1 + gamma
    if abs(margin) <= CRITICAL_BAND:
        return Verdict.critical
    return Verdict.bounded if margin > 0 else Verdict.counterexample


def _suffix_maxima(a: np.ndarray) -> np.ndarray:
    # last occurrence of each tail maximum, 0-based
    later = np.maximum.accumulate(a[::-1])[::-1]
    later = np.append(later[1:], -np.inf)
    return np.flatnonzero((a > later) & (a > 0))


def _convex_knots(knots: np.ndarray, a: np.ndarray, chunk: int = 1024) -> List[int]:
    """
    Knots of the decreasing convex minorant construction: from knot k the
    next knot is the first f2 knot whose chord slope is no smaller than the
    slope of the last accepted segment.
    """
    chosen = [int(knots[0])]
    previous_slope = -math.inf
    position = 0
    while position < len(knots) - 1:
        current = chosen[-1]
        found = -1
        start = position + 1
        while start < len(knots):
            candidates = knots[start : start + chunk]
            slopes = (a[candidates] - a[current]) / (candidates - current)
            hits = np.flatnonzero(slopes >= previous_slope)
            if len(hits):
                found = start + int(hits[0])
                break
            start += chunk
        if found < 0:
            break
        nxt = int(knots[found])
        previous_slope = (a[nxt] - a[current]) / (nxt - current)
        chosen.append(nxt)
        position = found
    return chosen


def _ratio_table(a: np.ndarray, selected: Sequence[int], j_max: int) -> Dict[int, List[float]]:
    # a is 0-based here; predecessors before the first term count as 0
    prefix = np.concatenate([[0.0], np.cumsum(a)])
    idx = np.asarray(selected, dtype=np.int64)
    table = {}
    for j in range(1, j_max + 1):
        lower = np.maximum(idx - j, 0)
        table[j] = ((prefix[idx] - prefix[lower]) / a[idx]).tolist()
    return table


def sumdiv_subsequence(
    a: Sequence[float], j_max: int = 5, positive_fraction: float = 0.9
) -> SumDivResult:
    """
    Subsequence k_l of a nonnegative sequence with
    sum_{i<=j} a_{k_l - i} / a_{k_l} bounded by about j along the tail.
    The finite sequence is classified by comparing the maxima of its two
    halves: growing maxima select running records, comparable maxima select
    near-maximal terms, decaying maxima go through the decreasing envelope
    and its convex minorant. Indices are 1-based.
    """
    values = np.asarray(a, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise InvalidArgumentException("Expected a non-empty one dimensional sequence")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidArgumentException("Sequence must be finite and nonnegative")
    if not np.any(values > 0):
        raise InvalidArgumentException("Sequence is identically zero")
    if np.count_nonzero(values) < 3:
        raise InvalidArgumentException("Need at least three nonzero terms")
    if j_max < 1:
        raise InvalidArgumentException(f"j_max must be >= 1: {j_max}")

    half = max(1, len(values) // 2)
    head, tail = float(values[:half].max()), float(values[half:].max(initial=0.0))
    knots: List[Tuple[int, float]] = []
    if tail > head * (1 + 1e-9):
        case = "unbounded"
        records = np.maximum.accumulate(values)
        previous = np.concatenate([[0.0], records[:-1]])
        selected = np.flatnonzero(values > previous)
    elif tail >= 0.5 * head:
        case = "positive"
        selected = np.flatnonzero(values >= positive_fraction * tail)
    else:
        case = "vanishing"
        envelope = _suffix_maxima(values)
        selected = np.asarray(_convex_knots(envelope, values), dtype=np.int64)
        knots = [(int(k) + 1, float(values[k])) for k in selected]

    logger.debug(f"sumdiv case={case}, {len(selected)} of {len(values)} indices selected")
    return SumDivResult(
        case=case,
        subsequence_indices=(selected + 1).tolist(),
        ratio_table=_ratio_table(values, selected, j_max),
        envelope_knots=knots,
    )
