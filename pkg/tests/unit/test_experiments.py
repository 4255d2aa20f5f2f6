import math
from unittest.mock import Mock, patch

import orjson
import pydantic
import pytest

from harnacklab import experiments, output
from harnacklab.exceptions import InvalidArgumentException, InvalidExperimentException

QUARTER = {"kind": "sector", "aperture": math.pi / 4}


def make_config(**data):
    return experiments.ExperimentConfig.parse_obj(data)


class FooType(pydantic.BaseModel):
    foo: str


class TestRegistry:
    def test_all_registered(self):
        assert set(experiments.registered()) == {e.value for e in experiments.ExperimentName}

    def test_execute_unregistered(self, settings):
        with patch.dict(experiments._registered, clear=True):
            with pytest.raises(InvalidExperimentException):
                experiments.execute(make_config(experiment="alpha"), settings)

    def test_execute_invalid_config_type(self, settings):
        with patch.dict(experiments._registered, {"alpha": (Mock(), FooType)}):
            with pytest.raises(InvalidExperimentException):
                experiments.execute(make_config(experiment="alpha"), settings)

    def test_execute_calls_registered(self, settings):
        func = Mock(return_value=experiments.ExperimentResult(report={"ok": True}))
        with patch.dict(experiments._registered, {"alpha": (func, experiments.ExperimentConfig)}):
            config = make_config(experiment="alpha")
            assert experiments.execute(config, settings).report == {"ok": True}
            func.assert_called_once_with(config, settings)


class TestConfig:
    def test_unknown_field(self):
        with pytest.raises(pydantic.ValidationError):
            make_config(experiment="alpha", colour="red")

    def test_unknown_experiment(self):
        with pytest.raises(pydantic.ValidationError):
            make_config(experiment="nope")

    def test_invalid_domain(self):
        with pytest.raises(pydantic.ValidationError):
            make_config(experiment="alpha", domain={"kind": "sector", "aperture": 7.0})

    def test_schema(self):
        schema = orjson.loads(experiments.ExperimentConfig.schema_json())
        assert "experiment" in schema["properties"]
        assert "experiment" in schema["required"]

    def test_hash_is_stable(self):
        first = make_config(experiment="alpha", domain=QUARTER, gamma=0.5)
        second = make_config(gamma=0.5, domain=QUARTER, experiment="alpha")
        assert experiments.config_hash(first) == experiments.config_hash(second)
        assert experiments.config_hash(first) != experiments.config_hash(
            make_config(experiment="alpha", domain=QUARTER)
        )


class TestAlpha:
    def test_report(self, settings):
        result = experiments.execute(make_config(experiment="alpha", domain=QUARTER), settings)
        assert result.report["alpha1"] == pytest.approx(4.0)
        assert result.report["verdict"] == "counterexample"
        assert "f1" in result.tables and "f1" in result.plots

    def test_needs_domain(self, settings):
        with pytest.raises(InvalidArgumentException):
            experiments.execute(make_config(experiment="alpha"), settings)

    def test_written_files(self, settings, tmp_path):
        config = make_config(experiment="alpha", domain=QUARTER, out_dir=str(tmp_path))
        written = experiments.run(config, settings)
        names = sorted(path.name for path in written)
        assert names == ["f1.csv", "f1.svg", "manifest.json", "report.json"]
        manifest = orjson.loads((tmp_path / "manifest.json").read_bytes())
        assert manifest["config_sha256"] == experiments.config_hash(config)
        assert manifest["files"]["report.json"] == output.sha256(
            (tmp_path / "report.json").read_bytes()
        )
        assert manifest["versions"]["harnacklab"]
        assert manifest["tolerances"]["solver_tol"] == settings.solver_tol

    def test_byte_identical_rerun(self, settings, tmp_path):
        config = make_config(experiment="alpha", domain=QUARTER, out_dir=str(tmp_path))
        first = {p.name: p.read_bytes() for p in experiments.run(config, settings)}
        second = {p.name: p.read_bytes() for p in experiments.run(config, settings)}
        assert first == second


class TestThreshold:
    def test_rows(self):
        rows = experiments.threshold_rows([math.pi / 4, math.pi / 2, 3 * math.pi / 4], 0.0)
        assert [row["verdict"] for row in rows] == ["counterexample", "critical", "bounded"]

    def test_gamma_moves_threshold(self):
        rows = experiments.threshold_rows([math.pi / 4], 2.0)
        assert rows[0]["verdict"] == "critical"

    def test_sweep_experiment(self, settings):
        result = experiments.execute(make_config(experiment="threshold-sweep"), settings)
        table = result.tables["threshold"]
        assert len(table.rows) == 7
        assert table.columns == ["aperture", "alpha1", "gamma", "verdict"]

    def test_cones(self, settings):
        config = make_config(
            experiment="threshold-sweep", spectral={"dim": 3, "apertures": [0.5, 1.5]}
        )
        rows = experiments.execute(config, settings).report["rows"]
        assert [row["verdict"] for row in rows] == ["counterexample", "bounded"]


def test_holder_exponent():
    assert experiments.holder_exponent(4 / 3, 0.0) == pytest.approx(2 / 3)
    assert experiments.holder_exponent(1.0, 0.5) == 1.0
    with pytest.raises(InvalidArgumentException):
        experiments.holder_exponent(3.0, 0.0)


class TestSequences:
    def test_values(self):
        config = experiments.SequenceConfig(values=[1, 2, 3])
        assert experiments.load_sequence(config).tolist() == [1.0, 2.0, 3.0]

    def test_json_file(self, tmp_path):
        path = tmp_path / "a.json"
        path.write_bytes(b"[1, 0.5, 0.25]")
        config = experiments.SequenceConfig(input=str(path))
        assert experiments.load_sequence(config).tolist() == [1.0, 0.5, 0.25]

    def test_text_file(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text("1\n0.5\n0.25\n")
        config = experiments.SequenceConfig(input=str(path))
        assert experiments.load_sequence(config).tolist() == [1.0, 0.5, 0.25]

    def test_families(self):
        squares = experiments.load_sequence(experiments.SequenceConfig(family="squares", horizon=10))
        assert squares.tolist() == [1, 0, 0, 1, 0, 0, 0, 0, 1, 0]
        harmonic = experiments.load_sequence(experiments.SequenceConfig(family="harmonic", horizon=4))
        assert harmonic.tolist() == [1.0, 0.5, 1 / 3, 0.25]

    def test_nothing(self):
        with pytest.raises(InvalidArgumentException):
            experiments.load_sequence(experiments.SequenceConfig())

    def test_run(self, settings):
        config = make_config(
            experiment="sumdiv", sequence={"family": "constant", "horizon": 100}, analysis={"j_max": 3}
        )
        result = experiments.execute(config, settings)
        assert result.report["case"] == "positive"
        assert result.report["tail_max_ratio"] == {"1": 1.0, "2": 2.0, "3": 3.0}
        assert result.tables["sumdiv"].columns == ["k_l", "j=1", "j=2", "j=3"]


class TestSolvers:
    def test_poisson(self, settings):
        result = experiments.execute(make_config(experiment="poisson", grid={"h": 1 / 32}), settings)
        assert result.report["error_at_origin"] < 2 / 32 ** 2

    def test_poisson_needs_disk(self, settings):
        with pytest.raises(InvalidArgumentException):
            experiments.execute(make_config(experiment="poisson", domain=QUARTER), settings)

    def test_pair(self, settings, tmp_path):
        config = make_config(
            experiment="pair", domain=QUARTER, grid={"h": 1 / 32}, out_dir=str(tmp_path)
        )
        names = {path.name for path in experiments.run(config, settings)}
        assert {"u.csv", "u.bin", "v.csv", "v.bin", "report.json"} <= names

    def test_ratio(self, settings):
        config = make_config(
            experiment="ratio",
            domain={"kind": "sector", "aperture": 3 * math.pi / 4},
            grid={"h": 1 / 32},
            analysis={"levels": 3},
        )
        report = experiments.execute(config, settings).report
        assert report["verdict"] == "bounded"
        # h = 1/32 resolves only the outer shell
        assert report["radii"] == [0.5]
        assert report["log2_rate"] is None
        assert len(report["normalized_sup_ratio"]) == len(report["radii"])
        assert report["increments"]["levels"][0] == 0

    def test_fredholm(self, settings):
        config = make_config(experiment="fredholm", spectral={"dim": 2, "nodes": [1000, 2000]})
        report = experiments.execute(config, settings).report
        assert report["critical_aperture"] == pytest.approx(math.pi / 2)
        assert report["residuals"][-1] == pytest.approx(report["limit"], abs=1e-2)

    def test_heleshaw(self, settings, tmp_path):
        config = make_config(
            experiment="heleshaw",
            grid={"h": 1 / 32},
            heleshaw={"table": "square", "t_max": 0.5, "steps": 2},
            out_dir=str(tmp_path),
        )
        names = {path.name for path in experiments.run(config, settings)}
        assert {"u_t.csv", "u_t.bin", "wet_mask.csv", "schedule.csv"} <= names
        report = orjson.loads((tmp_path / "report.json").read_bytes())
        assert report["wet"] is False
        assert report["barrier_dry"] is True
        assert report["final_t"] == 0.5

    def test_polygon_table_needs_corner(self, settings):
        config = make_config(
            experiment="heleshaw",
            heleshaw={"table": "polygon", "vertices": [(0, 0), (1, 0), (0, 1)]},
        )
        with pytest.raises(InvalidArgumentException):
            experiments.execute(config, settings)


@pytest.mark.asyncio
async def test_sweep(settings):
    base = {"experiment": "alpha", "domain": {"kind": "sector", "aperture": 3 * math.pi / 4}}
    table = await experiments.sweep(base, {"gamma": [-1.0, 0.0]}, settings)
    assert table.columns[0] == "gamma"
    assert table.columns[-1] == "status"
    verdict = table.columns.index("verdict")
    assert [row[verdict] for row in table.rows] == ["counterexample", "bounded"]


@pytest.mark.asyncio
async def test_sweep_keeps_failures(settings):
    base = {"experiment": "alpha", "domain": {"kind": "sector", "aperture": 1.0}}
    table = await experiments.sweep(base, {"domain.aperture": [1.0, 7.0]}, settings)
    status = table.columns.index("status")
    assert table.rows[0][status] == "ok"
    assert table.rows[1][status].startswith("ValidationError")
