"""
Artifact writers. JSON goes through orjson with sorted keys so equal
inputs give byte-identical files.

Binary field layout (little endian):

    4 bytes   magic b"HLF1"
    uint32    dim
    float64   h
    uint32    count
    count x   (int32 index[dim], float64 value)

indices are node indices of the raster, value is the field at that node.
"""
import csv
import hashlib
import io
import struct
from pathlib import Path
from typing import (
    Any,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import orjson
import pydantic

from .elliptic import ScalarField

MAGIC = b"HLF1"
_HEADER = struct.Struct("<4sIdI")

JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY


def _default(obj: Any) -> Any:
    if isinstance(obj, pydantic.BaseModel):
        return obj.dict()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Type is not JSON serializable: {type(obj).__name__}")


def dumps(obj: Any) -> bytes:
    return orjson.dumps(obj, option=JSON_OPTIONS, default=_default) + b"\n"


def write_json(path: Path, obj: Any) -> Path:
    path.write_bytes(dumps(obj))
    return path


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def csv_text(columns: Sequence[str], rows: Iterable[Sequence[Any]], comment: Optional[str] = None) -> str:
    buffer = io.StringIO()
    if comment:
        buffer.write(f"# {comment}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buffer.getvalue()


def write_csv(
    path: Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    comment: Optional[str] = None,
) -> Path:
    path.write_text(csv_text(columns, rows, comment))
    return path


def read_csv(path: Path) -> Tuple[List[str], List[List[str]]]:
    lines = [line for line in path.read_text().splitlines() if not line.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def field_rows(field: ScalarField) -> Tuple[List[str], List[List[Any]]]:
    grid = field.grid
    axes = ["i", "j", "k"][: grid.dim]
    coords = ["x", "y", "z"][: grid.dim]
    rows = [
        [*map(int, index), *map(float, point), float(value)]
        for index, point, value in zip(grid.multi_index, grid.points, field.values)
    ]
    return axes + coords + ["value"], rows


def write_field_csv(path: Path, field: ScalarField, comment: Optional[str] = None) -> Path:
    columns, rows = field_rows(field)
    return write_csv(path, columns, rows, comment)


def field_bytes(field: ScalarField) -> bytes:
    grid = field.grid
    records = np.zeros(
        grid.size, dtype=[("index", "<i4", (grid.dim,)), ("value", "<f8")]
    )
    records["index"] = grid.multi_index
    records["value"] = field.values
    return _HEADER.pack(MAGIC, grid.dim, grid.h, grid.size) + records.tobytes()


def write_field_binary(path: Path, field: ScalarField) -> Path:
    path.write_bytes(field_bytes(field))
    return path


def read_field_binary(data: bytes) -> Tuple[int, float, np.ndarray, np.ndarray]:
    """Returns (dim, h, indices, values)."""
    magic, dim, h, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"Not a field dump: magic {magic!r}")
    dtype = np.dtype([("index", "<i4", (dim,)), ("value", "<f8")])
    records = np.frombuffer(data, dtype=dtype, count=count, offset=_HEADER.size)
    return dim, h, records["index"].copy(), records["value"].copy()


def mask_text(mask: np.ndarray) -> str:
    """Rows of 0/1 with the first array index running down the file."""
    return "".join(",".join("1" if cell else "0" for cell in row) + "\n" for row in mask)
