import asyncio
import contextvars
import copy
import itertools
from functools import partial
from typing import (
    Any,
    Dict,
    Iterator,
    List,
    Tuple,
)


async def run_async(func, *args, **kwargs):
    loop = asyncio.get_event_loop()
    child = partial(func, *args, **kwargs)
    context = contextvars.copy_context()
    func = context.run
    args = (child,)
    return await loop.run_in_executor(None, func, *args)


def set_dotted(data: Dict[str, Any], path: str, value: Any) -> Dict[str, Any]:
    """Copy of `data` with data[a][b][c] = value for path "a.b.c"."""
    result = copy.deepcopy(data)
    *parents, leaf = path.split(".")
    node = result
    for key in parents:
        if node.get(key) is None:
            node[key] = {}
        node = node[key]
    node[leaf] = value
    return result


def expand_grid(grid: Dict[str, List[Any]]) -> Iterator[List[Tuple[str, Any]]]:
    """Cartesian product over the grid in sorted key order."""
    keys = sorted(grid)
    for values in itertools.product(*(grid[key] for key in keys)):
        yield list(zip(keys, values))
