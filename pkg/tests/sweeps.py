"""Cached pipeline runs shared by the experiment and acceptance tests."""
from functools import lru_cache

from helmcauchy.assembly import build_grid
from helmcauchy.cli import DEFAULT_GRIDS
from helmcauchy.experiment import AlphaGrid, NoiseSpec, run_sweep
from helmcauchy.problem import get_case


@lru_cache(maxsize=None)
def sweep(case_name, red=None, seed=0, grid=None, N0=15):
    case = get_case(case_name)
    nx, ny = grid or DEFAULT_GRIDS[case_name]
    noise = None if red is None else NoiseSpec(red, seed)
    return run_sweep(case, build_grid(case.domain, nx, ny), noise, AlphaGrid(0.5, 0.7, N0))
