"""
Homogeneity exponents of cones.

A positive harmonic function vanishing on the boundary of a cone is
r^alpha f(theta) with alpha(alpha + n - 2) the first Dirichlet eigenvalue of
the spherical cross-section. For axisymmetric caps the cross-section problem
is the ODE (w f')' + lambda w f = 0, w = sin^(n-2) theta, on (0, theta_c).
"""
import logging
import math
from typing import (
    Callable,
    List,
    Optional,
    Tuple,
)

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import gamma as gamma_function

from .exceptions import InvalidArgumentException, NumericalFailureException
from .types import DomainKind, DomainSpec, HomogeneityReport

logger = logging.getLogger(__name__)

FROBENIUS_START = 1e-6
SCAN_STEP = 0.25
BISECTION_ITERATIONS = 80
ODE_RTOL = 1e-12
ODE_ATOL = 1e-14
SAMPLES = 129


def alpha_from_eigenvalue(dim: int, eigenvalue: float) -> float:
    if eigenvalue <= 0:
        raise InvalidArgumentException(f"Eigenvalue must be positive: {eigenvalue}")
    b = dim - 2
    # positive root of a^2 + b a - lambda, written without cancellation
    return 2 * eigenvalue / (b + math.sqrt(b * b + 4 * eigenvalue))


def alpha_sector(opening: float, k: int = 1) -> float:
    if not (0 < opening < 2 * math.pi):
        raise InvalidArgumentException(f"Sector opening must lie in (0, 2pi): {opening}")
    if k < 1:
        raise InvalidArgumentException(f"Mode index must be >= 1: {k}")
    return k * math.pi / opening


def _cap_equation(dim: int, eigenvalue: float) -> Callable:
    b = dim - 2

    def rhs(theta, y):
        return [y[1], -b * y[1] / math.tan(theta) - eigenvalue * y[0]]

    return rhs


def _shoot(dim: int, half_aperture: float, eigenvalue: float, dense: bool = False, events=None):
    # two-term Frobenius expansion at the regular singular point theta = 0
    t0 = FROBENIUS_START
    y0 = [1.0 - eigenvalue * t0 * t0 / (2 * (dim - 1)), -eigenvalue * t0 / (dim - 1)]
    sol = solve_ivp(
        _cap_equation(dim, eigenvalue),
        (t0, half_aperture),
        y0,
        method="DOP853",
        rtol=ODE_RTOL,
        atol=ODE_ATOL,
        dense_output=dense,
        events=events,
    )
    if sol.status < 0:
        raise NumericalFailureException(f"Cap ODE integration failed: {sol.message}")
    return sol


def _edge_value(dim: int, half_aperture: float, alpha: float) -> float:
    sol = _shoot(dim, half_aperture, alpha * (alpha + dim - 2))
    return float(sol.y[0, -1])


def exponent_roots(dim: int, half_aperture: float, count: int) -> List[float]:
    """First `count` exponents alpha_k of the axisymmetric cap (dim >= 2)."""
    if not (0 < half_aperture < math.pi):
        raise InvalidArgumentException(f"Half-aperture must lie in (0, pi): {half_aperture}")

    def shooting(alpha: float) -> float:
        return _edge_value(dim, half_aperture, alpha)

    roots: List[float] = []
    limit = (count + 2) * 2 * math.pi / half_aperture + 10
    lo, f_lo = 1e-3, shooting(1e-3)
    while len(roots) < count:
        hi = lo + SCAN_STEP
        if hi > limit:
            raise NumericalFailureException(
                f"Only {len(roots)} of {count} exponents found below alpha={limit}"
            )
        f_hi = shooting(hi)
        if f_hi == 0.0:
            roots.append(hi)
        elif f_lo * f_hi < 0:
            root, result = brentq(
                shooting,
                lo,
                hi,
                xtol=1e-13,
                maxiter=BISECTION_ITERATIONS,
                full_output=True,
                disp=False,
            )
            if not result.converged:
                raise NumericalFailureException(
                    f"Exponent bisection did not converge in {result.iterations} iterations",
                    residual=abs(shooting(root)),
                    iterations=result.iterations,
                )
            roots.append(root)
        lo, f_lo = hi, f_hi
    return roots


def _f1_samples(dim: int, half_aperture: float, alpha: float) -> List[Tuple[float, float]]:
    sol = _shoot(dim, half_aperture, alpha * (alpha + dim - 2), dense=True)
    thetas = np.linspace(0.0, half_aperture, SAMPLES)
    values = np.empty(SAMPLES)
    values[0] = 1.0
    values[1:] = sol.sol(np.maximum(thetas[1:], FROBENIUS_START))[0]
    values /= values.max()
    values[-1] = 0.0
    return [(float(t), float(v)) for t, v in zip(thetas, values)]


def alpha_axisymmetric(dim: int, half_aperture: float, k: int = 1) -> HomogeneityReport:
    if dim < 3:
        raise InvalidArgumentException(f"Axisymmetric caps need dim >= 3: {dim}")
    if k < 1:
        raise InvalidArgumentException(f"Mode index must be >= 1: {k}")
    roots = exponent_roots(dim, half_aperture, max(k, 2))
    alpha1 = roots[0]
    logger.debug(f"Cap exponents dim={dim} theta_c={half_aperture}: {roots}")
    return HomogeneityReport(
        dim=dim,
        aperture=half_aperture,
        k=k,
        alpha_k=roots[k - 1],
        alpha1=alpha1,
        alpha2=roots[1],
        lambda1=alpha1 * (alpha1 + dim - 2),
        f1_samples=_f1_samples(dim, half_aperture, alpha1),
    )


def sector_report(opening: float, k: int = 1) -> HomogeneityReport:
    alpha1 = alpha_sector(opening, 1)
    thetas = np.linspace(0.0, opening / 2, SAMPLES)
    values = np.cos(alpha1 * thetas)
    values[-1] = 0.0
    return HomogeneityReport(
        dim=2,
        aperture=opening,
        k=k,
        alpha_k=alpha_sector(opening, k),
        alpha1=alpha1,
        alpha2=alpha_sector(opening, 2),
        lambda1=alpha1 * alpha1,
        f1_samples=[(float(t), float(v)) for t, v in zip(thetas, values)],
    )


def tangent_opening(spec: DomainSpec) -> float:
    """Opening of the planar tangent cone at the origin of a graph domain."""
    verts = spec.vertices or []
    index = [i for i, (x, y) in enumerate(verts) if x == 0.0 and y == 0.0][0]
    if index == 0 or index == len(verts) - 1:
        raise InvalidArgumentException("Origin must be an inner vertex of the graph")
    (xl, yl), (xr, yr) = verts[index - 1], verts[index + 1]
    return math.pi + math.atan(yl / xl) - math.atan(yr / xr)


def alpha_for_domain(spec: DomainSpec) -> float:
    if spec.kind == DomainKind.sector:
        return alpha_sector(spec.aperture, 1)
    if spec.kind == DomainKind.cone:
        if spec.dim == 2:
            return alpha_sector(2 * spec.aperture, 1)
        return alpha_axisymmetric(spec.dim, spec.aperture).alpha1
    if spec.kind == DomainKind.lipschitz_graph:
        return alpha_sector(tangent_opening(spec), 1)
    raise InvalidArgumentException(f"No homogeneity exponent for {spec.kind.value}")


def critical_aperture(dim: int) -> float:
    """Aperture with alpha_1 = 2: full opening for dim 2, half-aperture otherwise."""
    if dim < 2:
        raise InvalidArgumentException(f"Dimension must be >= 2: {dim}")
    if dim == 2:
        return brentq(lambda w: alpha_sector(w) - 2.0, 0.1, 2 * math.pi - 0.1, xtol=1e-14)

    # alpha = 2 fixes lambda = 2n; the cap edge is the first zero of f
    def first_zero(theta, y):
        return y[0]

    first_zero.terminal = True  # type: ignore
    first_zero.direction = -1  # type: ignore
    sol = _shoot(dim, math.pi - 1e-6, 2.0 * dim, events=first_zero)
    if not len(sol.t_events[0]):
        raise NumericalFailureException(f"No critical aperture found for dim={dim}")
    return float(sol.t_events[0][0])


def _cap_measure(dim: int) -> float:
    # dim 2 integrates over (-theta_c, theta_c), otherwise |S^(n-2)| sin^(n-2)
    if dim == 2:
        return 2.0
    return 2 * math.pi ** ((dim - 1) / 2) / gamma_function((dim - 1) / 2)


def _cap_tridiagonal(dim: int, half_aperture: float, nodes: int):
    """
    Symmetrized cell-centred discretization of -(1/w)(w f')' with f'(0) = 0
    (zero flux) and f(theta_c) = 0 (ghost reflection at the last face).
    Returns diagonal, off-diagonal, cell centres, centre weights and step.
    """
    step = half_aperture / nodes
    centres = (np.arange(nodes) + 0.5) * step
    faces = np.arange(nodes + 1) * step
    w_centre = np.sin(centres) ** (dim - 2)
    w_face = np.sin(faces) ** (dim - 2)
    w_face[0] = 0.0
    diag = w_face[:-1] + w_face[1:]
    diag[-1] += w_face[-1]
    diag = diag / (w_centre * step * step)
    off = -w_face[1:-1] / (np.sqrt(w_centre[:-1] * w_centre[1:]) * step * step)
    return diag, off, centres, w_centre, step


def cap_eigenvalue_oracle(dim: int, half_aperture: float, nodes: int = 10_000) -> float:
    """Smallest cap eigenvalue from the matrix discretization, Richardson-extrapolated."""

    def smallest(n: int) -> float:
        diag, off, *_ = _cap_tridiagonal(dim, half_aperture, n)
        return float(eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, 0))[0])

    coarse, fine = smallest(nodes), smallest(2 * nodes)
    return (4 * fine - coarse) / 3


def fredholm_residual(
    dim: int,
    nodes: int = 4000,
    forcing: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> float:
    """
    Least-squares residual of (Delta_theta + 2n) g = F on the critical cap,
    F = -1 unless `forcing` is given. The operator has a one dimensional
    near-kernel spanned by f_1, so the residual is the weighted component of F
    along it; it tends to |<F, f_1>| / ||f_1|| under refinement.
    """
    half_aperture = critical_aperture(dim)
    if dim == 2:
        half_aperture /= 2
    diag, off, centres, w_centre, step = _cap_tridiagonal(dim, half_aperture, nodes)
    _, vectors = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    kernel = vectors[:, 0]
    values = -np.ones(nodes) if forcing is None else np.asarray(forcing(centres), dtype=float)
    weighted = values * np.sqrt(_cap_measure(dim) * w_centre * step)
    return float(abs(kernel @ weighted))


def fredholm_limit(dim: int) -> float:
    """Quadrature value of |<1, f_1>| / ||f_1|| on the critical cap."""
    half_aperture = critical_aperture(dim)
    measure = _cap_measure(dim)
    if dim == 2:
        half_aperture /= 2

        def f1(theta):
            return math.cos(2 * theta)

    else:
        sol = _shoot(dim, half_aperture, 2.0 * dim, dense=True)

        def f1(theta):
            return float(sol.sol(max(theta, FROBENIUS_START))[0])

    def weight(theta):
        return math.sin(theta) ** (dim - 2)

    first = quad(lambda t: f1(t) * weight(t), 0.0, half_aperture, epsabs=1e-13)[0]
    second = quad(lambda t: f1(t) ** 2 * weight(t), 0.0, half_aperture, epsabs=1e-13)[0]
    return abs(measure * first) / math.sqrt(measure * second)
