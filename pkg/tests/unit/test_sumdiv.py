import numpy as np
import pytest

from harnacklab import analysis
from harnacklab.exceptions import InvalidArgumentException


def test_constant_sequence():
    result = analysis.sumdiv_subsequence(np.ones(1000))
    assert result.case == "positive"
    assert result.subsequence_indices == list(range(1, 1001))
    # predecessors before the first term count as zero
    assert result.ratio_table[3][:4] == [0.0, 1.0, 2.0, 3.0]
    assert result.ratio_table[5][-1] == 5.0


def test_harmonic_sequence():
    k = np.arange(1, 100_001)
    result = analysis.sumdiv_subsequence(1.0 / k, j_max=5)
    assert result.case == "vanishing"
    indices = np.asarray(result.subsequence_indices)
    # 1/k is decreasing and convex, every index is a knot
    assert len(indices) == len(k)
    for j in range(1, 6):
        ratios = np.asarray(result.ratio_table[j])
        assert np.all(ratios[indices >= 100] <= j * 1.05)
    assert result.envelope_knots[0] == (1, 1.0)


def test_indicator_of_squares():
    k = np.arange(1, 10_001)
    root = np.rint(np.sqrt(k)).astype(int)
    a = (root * root == k).astype(float)
    result = analysis.sumdiv_subsequence(a)
    assert result.case == "positive"
    assert result.subsequence_indices == [n * n for n in range(1, 101)]
    ratios = np.asarray(result.ratio_table[5])
    assert np.all(ratios[3:] == 0.0)


def test_growing_sequence():
    a = np.arange(1, 501, dtype=float)
    result = analysis.sumdiv_subsequence(a, j_max=3)
    assert result.case == "unbounded"
    assert result.subsequence_indices == list(range(1, 501))
    assert max(result.ratio_table[3]) <= 3.0


def test_records_skip_repeats():
    a = [1.0, 3.0, 3.0, 2.0, 5.0, 4.0, 6.0, 7.0]
    result = analysis.sumdiv_subsequence(a)
    assert result.case == "unbounded"
    assert result.subsequence_indices == [1, 2, 5, 7, 8]


def test_convex_minorant_knots():
    a = [10.0, 2.0, 3.0, 1.0, 0.5, 0.4, 0.1, 0.05]
    result = analysis.sumdiv_subsequence(a)
    assert result.case == "vanishing"
    assert result.subsequence_indices == [1, 3, 4, 5, 6]
    knots = result.envelope_knots
    slopes = [(y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(knots, knots[1:])]
    assert slopes == sorted(slopes)


@pytest.mark.parametrize(
    "a",
    [
        [],
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 2.0],
        [1.0, -1.0, 2.0, 3.0],
        [1.0, np.inf, 2.0],
    ],
)
def test_invalid_sequences(a):
    with pytest.raises(InvalidArgumentException):
        analysis.sumdiv_subsequence(a)


def test_invalid_window():
    with pytest.raises(InvalidArgumentException):
        analysis.sumdiv_subsequence([1.0, 2.0, 3.0], j_max=0)
