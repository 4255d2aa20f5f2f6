import math
from pathlib import Path

import numpy as np
import orjson
import pytest

from harnacklab import elliptic, geometry, output, plot
from harnacklab.types import Verdict


@pytest.fixture()
def sector_field(quarter_sector):
    grid = geometry.rasterize(quarter_sector, 1 / 16)
    yield elliptic.ScalarField.from_function(grid, lambda p: p[:, 1])


class TestJson:
    def test_sorted_and_stable(self):
        assert output.dumps({"b": 1, "a": 2}) == output.dumps({"a": 2, "b": 1})
        assert output.dumps({"b": 1, "a": 2}) == b'{\n  "a": 2,\n  "b": 1\n}\n'

    def test_numpy_and_models(self, quarter_sector):
        data = orjson.loads(
            output.dumps(
                {
                    "array": np.arange(3),
                    "scalar": np.float64(0.5),
                    "domain": quarter_sector,
                    "path": Path("out/alpha"),
                    "verdict": Verdict.bounded,
                }
            )
        )
        assert data["array"] == [0, 1, 2]
        assert data["scalar"] == 0.5
        assert data["domain"]["kind"] == "sector"
        assert data["path"] == "out/alpha"
        assert data["verdict"] == "bounded"

    def test_unsupported(self):
        with pytest.raises(TypeError):
            output.dumps({"value": object()})

    def test_sha256(self):
        assert output.sha256(b"") == (
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        )


class TestCsv:
    def test_comment_and_floats(self, tmp_path):
        path = output.write_csv(
            tmp_path / "table.csv", ["r", "W"], [[0.1, 1 / 3], [0.2, 2]], comment="h=0.01"
        )
        text = path.read_text()
        assert text.startswith("# h=0.01\nr,W\n")
        assert repr(1 / 3) in text
        columns, rows = output.read_csv(path)
        assert columns == ["r", "W"]
        assert rows[1] == ["0.2", "2"]

    def test_field_rows(self, sector_field):
        columns, rows = output.field_rows(sector_field)
        assert columns == ["i", "j", "x", "y", "value"]
        assert len(rows) == sector_field.grid.size
        for row in rows:
            assert row[3] == row[4]


class TestBinary:
    def test_layout(self, sector_field):
        data = output.field_bytes(sector_field)
        assert data[:4] == output.MAGIC
        assert len(data) == 4 + 4 + 8 + 4 + sector_field.grid.size * (2 * 4 + 8)
        dim, h, indices, values = output.read_field_binary(data)
        assert (dim, h) == (2, 1 / 16)
        np.testing.assert_array_equal(indices, sector_field.grid.multi_index)
        np.testing.assert_array_equal(values, sector_field.values)

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            output.read_field_binary(b"XXXX" + bytes(16))


def test_mask_text():
    assert output.mask_text(np.array([[True, False], [False, True]])) == "1,0\n0,1\n"


class TestPlot:
    def test_svg(self):
        svg = plot.line_plot({"W": ([0.1, 0.2, 0.3], [1.0, 2.0, 1.5])}, "Weiss energy", y_label="W")
        assert svg.startswith("<svg")
        assert "polyline" in svg
        assert plot.Colors.PRIMARY in svg

    def test_log_axes_drop_nonpositive(self):
        svg = plot.line_plot(
            {"a": ([0.0, 0.5, 0.25], [1.0, 2.0, math.nan]), "b": ([0.5, 0.25], [3.0, 4.0])},
            "ratio",
            log_x=True,
            log_y=True,
        )
        assert plot.Colors.SECONDARY in svg
        assert "log10 r" in svg

    def test_nothing_to_plot(self):
        with pytest.raises(ValueError):
            plot.line_plot({"a": ([0.0], [1.0])}, "empty", log_x=True)
