import math

import numpy as np
import pytest

from harnacklab import analysis, elliptic, geometry, spectral

pytestmark = pytest.mark.acceptance


def test_wedge_ratio_is_bounded(wedge_graph, wedge_pair):
    assert spectral.alpha_for_domain(wedge_graph) < 2
    u, v = wedge_pair
    profile = analysis.ratio_profile(u, v, (0.0, 0.25), levels=5)
    normalized = np.asarray(profile.sup_ratio) / profile.anchor_ratio
    assert normalized.max() / normalized.min() < 2.0


def test_wedge_growth_matches_tangent_cone(wedge_graph, wedge_pair):
    u, _ = wedge_pair
    fit = analysis.growth_exponent(u, (0.0, 0.0))
    expected = spectral.alpha_sector(math.pi - 2 * math.atan(0.5))
    assert spectral.alpha_for_domain(wedge_graph) == pytest.approx(expected)
    assert fit.fitted_exponent == pytest.approx(expected, abs=0.05)


def test_cone_growth_in_three_dimensions():
    cone = geometry.make_cone(3, 1.0)
    u, _ = elliptic.solve_pair(cone, 0.0, 1 / 64)
    fit = analysis.growth_exponent(u, (0.0, 0.0, 0.0), min_cells=2)
    expected = spectral.alpha_axisymmetric(3, math.pi / 4).alpha1
    assert fit.fitted_exponent == pytest.approx(expected, abs=0.1)


def test_holder_seminorm_is_stable_under_refinement():
    graph = geometry.make_lipschitz_graph([(-1.0, 0.2), (0.0, 0.0), (1.0, 0.2)])
    beta = min(1.0, 2 - spectral.alpha_for_domain(graph))
    seminorms = []
    for h in (1 / 64, 1 / 128):
        u, v = elliptic.solve_pair(graph, 0.0, h)
        seminorms.append(analysis.holder_quotient(u, v, beta, seed=7).seminorm)
    assert np.all(np.isfinite(seminorms))
    assert seminorms[1] == pytest.approx(seminorms[0], rel=0.2)
