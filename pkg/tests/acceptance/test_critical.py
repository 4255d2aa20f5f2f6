import numpy as np
import pytest

from harnacklab import analysis, spectral

pytestmark = pytest.mark.acceptance


def test_weiss_energy_is_nondecreasing(critical_pair):
    _, v = critical_pair
    trace = analysis.weiss_trace(v, np.linspace(0.1, 0.45, 8))
    assert len(trace.radii) == 8
    # bilinear interpolation bias stays below this at h = 1/256
    assert np.all(np.diff(trace.W) >= -2e-3)


@pytest.mark.parametrize("dim", [2, 3])
def test_fredholm_residual_converges(dim):
    limit = spectral.fredholm_limit(dim)
    residuals = [spectral.fredholm_residual(dim, nodes) for nodes in (1000, 2000, 4000, 8000)]
    gaps = np.abs(np.asarray(residuals) - limit)
    assert gaps[-1] <= gaps[0] + 1e-12
    assert residuals[-1] == pytest.approx(limit, rel=0.02)
