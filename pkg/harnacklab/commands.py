import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import (
    Any,
    Dict,
    List,
    Optional,
    Tuple,
)

import dotenv
import orjson
import pydantic

from . import experiments, output
from .exceptions import (
    EmptyDomainException,
    InsufficientResolutionException,
    InvalidArgumentException,
    InvalidExperimentException,
    NumericalFailureException,
)
from .settings import Settings
from .utils import run_async, set_dotted

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

SWEEP = "sweep"
SCHEMA = "schema"

parser = argparse.ArgumentParser(description="harnacklab experiment runner")
parser.add_argument(
    "command",
    choices=experiments.registered() + [SWEEP, SCHEMA],
    help="Experiment to run, `sweep` over a parameter grid or `schema`",
)
parser.add_argument("-e", "--env-file", help="Env file")
parser.add_argument("-c", "--config", help="JSON experiment config")
parser.add_argument("-o", "--out", help="Output directory")
parser.add_argument("--h", type=float, help="Grid width")
parser.add_argument("--seed", type=int, help="Random seed for sampled estimators")
parser.add_argument("-q", "--quiet", action="store_true", help="Only log warnings")
parser.add_argument(
    "--set",
    action="append",
    default=[],
    metavar="PATH=JSON",
    help="Override a config value, e.g. --set domain.aperture=0.785",
)
parser.add_argument(
    "--param",
    action="append",
    default=[],
    metavar="PATH=JSON_LIST",
    help="Sweep axis, e.g. --param gamma=[-0.5,0,0.5]",
)
parser.add_argument("--grid", help="JSON file mapping dotted config paths to value lists")


def run_command():
    sys.exit(main(sys.argv[1:]))


def main(argv: Optional[List[str]] = None) -> int:
    return asyncio.run(_run(argv))


def _split(item: str) -> Tuple[str, Any]:
    path, sep, value = item.partition("=")
    if not sep or not path:
        raise InvalidArgumentException(f"Expected PATH=JSON, got {item!r}")
    try:
        return path, orjson.loads(value)
    except orjson.JSONDecodeError:
        # bare words are taken as strings
        return path, value


def load_base(arguments: argparse.Namespace) -> Dict[str, Any]:
    data: Dict[str, Any] = {}
    if arguments.config:
        data = orjson.loads(Path(arguments.config).read_bytes())
        if not isinstance(data, dict):
            raise InvalidArgumentException(f"Config must be a JSON object: {arguments.config}")
    for item in arguments.set:
        path, value = _split(item)
        data = set_dotted(data, path, value)
    if arguments.h is not None:
        data = set_dotted(data, "grid.h", arguments.h)
    if arguments.seed is not None:
        data = set_dotted(data, "analysis.seed", arguments.seed)
    if arguments.out is not None:
        data = set_dotted(data, "out_dir", arguments.out)
    return data


def load_grid(arguments: argparse.Namespace) -> Dict[str, List[Any]]:
    grid: Dict[str, List[Any]] = {}
    if arguments.grid:
        grid.update(orjson.loads(Path(arguments.grid).read_bytes()))
    for item in arguments.param:
        path, values = _split(item)
        grid[path] = values
    if not grid:
        raise InvalidArgumentException("Sweep needs --grid or at least one --param")
    for path, values in grid.items():
        if not isinstance(values, list) or not values:
            raise InvalidArgumentException(f"Sweep axis {path} must be a non-empty list")
    return grid


def _out_dir(data: Dict[str, Any], default: str) -> Path:
    return Path(data.get("out_dir") or default)


async def _sweep(data: Dict[str, Any], arguments: argparse.Namespace, settings: Settings) -> Path:
    grid = load_grid(arguments)
    table = await experiments.sweep(data, grid, settings)
    out_dir = _out_dir(data, "out/sweep")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = output.write_csv(
        out_dir / "sweep.csv",
        table.columns,
        table.rows,
        comment=f"sweep experiment={data.get('experiment')}, axes={','.join(sorted(grid))}",
    )
    output.write_json(
        out_dir / "manifest.json",
        {
            "base": data,
            "grid": grid,
            "config_sha256": output.sha256(orjson.dumps(data, option=orjson.OPT_SORT_KEYS)),
            "files": {path.name: output.sha256(path.read_bytes())},
        },
    )
    return path


def _write_failure(out_dir: Path, command: str, err: Exception) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    output.write_json(
        out_dir / "failure.json",
        {
            "experiment": command,
            "error": type(err).__name__,
            "message": str(err),
            "residual": getattr(err, "residual", None),
            "iterations": getattr(err, "iterations", None),
        },
    )


async def _run(argv: Optional[List[str]] = None) -> int:
    arguments = parser.parse_args(argv)
    if arguments.env_file:
        dotenv.load_dotenv(arguments.env_file)
    settings = Settings()
    logging.basicConfig(level=logging.WARNING if arguments.quiet else settings.log_level)

    if arguments.command == SCHEMA:
        print(experiments.ExperimentConfig.schema_json(indent=2))
        return EXIT_OK

    data: Dict[str, Any] = {}
    try:
        data = load_base(arguments)
        if arguments.command == SWEEP:
            path = await _sweep(data, arguments, settings)
            logger.info(f"Wrote {path}")
            return EXIT_OK
        data = set_dotted(data, "experiment", arguments.command)
        config = experiments.ExperimentConfig.parse_obj(data)
        written = await run_async(experiments.run, config, settings)
        logger.info(f"Wrote {len(written)} files to {written[0].parent}")
    except (
        pydantic.ValidationError,
        InvalidArgumentException,
        InvalidExperimentException,
        EmptyDomainException,
        orjson.JSONDecodeError,
        OSError,
    ) as err:
        print(f"Invalid configuration: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailureException, InsufficientResolutionException) as err:
        logger.error(f"Numerical failure in {arguments.command}: {err}")
        _write_failure(_out_dir(data, f"out/{arguments.command}"), arguments.command, err)
        return EXIT_NUMERICAL
    return EXIT_OK
