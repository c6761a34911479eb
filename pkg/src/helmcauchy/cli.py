"""Command-line front end: ``run``, ``kernel`` and ``consistency``.

Exit codes: 0 on success, 1 for usage, configuration or I/O problems, 2 when
a numerical step fails.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .assembly import build_grid, truncation_residual
from .experiment import (SLICE_LEVELS, AlphaGrid, NoiseSpec, SweepReport, resolvable_alphas,
                         run_sweep)
from .mollifier import (PENALTY_WEIGHT, GaussianKernel, asymptote_ratio, lemma_bounds)
from .problem import CASES, get_case
from .solver import SolverError

log = logging.getLogger("helmcauchy")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

# equal spacing dx = 0.05, dy = 0.025 on both benchmark domains
DEFAULT_GRIDS = {"example1": (41, 41), "example2": (61, 41)}

DEFAULTS = {
    "case": "example2",
    "grid": {"n_x": None, "n_y": None},
    "noise_levels": [1e-2, 1e-3, 1e-4],
    "alpha_grid": {"alpha0": 0.5, "q": 0.7, "N0": 15},
    "solver": {"tol": 1e-10, "max_iter": None},
    "regularizer": {"penalty_weight": PENALTY_WEIGHT, "taper_width": 2},
    "seed": 0,
    "out": "results",
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


@dataclass(frozen=True)
class RunConfig:
    case: str
    n_x: int
    n_y: int
    noise_levels: tuple
    agrid: AlphaGrid
    tol: float
    max_iter: Optional[int]
    penalty_weight: float
    taper_width: int
    seed: int
    out: str

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        cfg = _merge(DEFAULTS, raw)
        if cfg["case"] not in CASES:
            raise ConfigError(f"unknown case {cfg['case']!r}; choose from {sorted(CASES)}")
        n_x, n_y = DEFAULT_GRIDS[cfg["case"]]
        n_x = cfg["grid"]["n_x"] if cfg["grid"]["n_x"] is not None else n_x
        n_y = cfg["grid"]["n_y"] if cfg["grid"]["n_y"] is not None else n_y
        levels = cfg["noise_levels"]
        if not isinstance(levels, list) or not levels:
            raise ConfigError("noise_levels must be a non-empty list")
        if len(set(levels)) != len(levels):
            raise ConfigError("noise_levels must be distinct")
        try:
            ag = cfg["alpha_grid"]
            agrid = AlphaGrid(float(ag["alpha0"]), float(ag["q"]), int(ag["N0"]))
            for r in levels:
                NoiseSpec(float(r), int(cfg["seed"]))
            conf = cls(cfg["case"], int(n_x), int(n_y), tuple(float(r) for r in levels), agrid,
                       float(cfg["solver"]["tol"]),
                       None if cfg["solver"]["max_iter"] is None else int(cfg["solver"]["max_iter"]),
                       float(cfg["regularizer"]["penalty_weight"]),
                       int(cfg["regularizer"]["taper_width"]), int(cfg["seed"]), str(cfg["out"]))
            grid = conf.grid()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if not conf.tol > 0:
            raise ConfigError("solver.tol must be positive")
        if conf.max_iter is not None and conf.max_iter < 1:
            raise ConfigError("solver.max_iter must be positive")
        if not conf.penalty_weight > 0:
            raise ConfigError("regularizer.penalty_weight must be positive")
        if len(resolvable_alphas(agrid.values(), grid)) < 2:
            raise ConfigError("fewer than two alphas of the grid are resolvable at this mesh size")
        return conf

    def grid(self):
        return build_grid(get_case(self.case).domain, self.n_x, self.n_y)

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "grid": {"n_x": self.n_x, "n_y": self.n_y},
            "noise_levels": list(self.noise_levels),
            "alpha_grid": {"alpha0": self.agrid.alpha0, "q": self.agrid.q, "N0": self.agrid.N0},
            "solver": {"tol": self.tol, "max_iter": self.max_iter},
            "regularizer": {"penalty_weight": self.penalty_weight,
                            "taper_width": self.taper_width},
            "seed": self.seed,
            "out": self.out,
        }


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    return raw


# ---------------------------------------------------------------- output

def fmt(v) -> str:
    """Shortest round-trip text for floats, plain text otherwise."""
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(out: str, files: dict) -> None:
    """Render everything first, then commit file by file."""
    os.makedirs(out, exist_ok=True)
    for name, text in files.items():
        write_atomic(os.path.join(out, name), text)


def run_files(conf: RunConfig, reports: List[SweepReport], verbose: bool) -> dict:
    grid = reports[0].grid
    case = get_case(conf.case)
    sweep, slices, field, summary, diag = [], [], [], [], []
    X, Y = np.meshgrid(grid.x, grid.y)
    exact = case.sample(case.exact, grid.x, grid.y) if case.has_exact else None
    for red, rep in zip(conf.noise_levels, reports):
        for i, a in enumerate(rep.alphas):
            ratio = rep.ratios[i] if i < len(rep.ratios) else None
            err = rep.errors[i] if rep.errors is not None else None
            sweep.append((red, i + 1, a, ratio, err))
        U = rep.selected.reshape(grid.n_y, grid.n_x)
        for j in range(grid.n_y):
            for i in range(grid.n_x):
                ue = exact[j, i] if exact is not None else None
                field.append((red, X[j, i], Y[j, i], ue, U[j, i]))
        se = rep.slice_errors or {}
        summary.append((red, rep.n_star, rep.alpha_star, rep.global_error,
                        *[se.get(y) for y in SLICE_LEVELS]))
        for a, s in zip(rep.alphas, rep.solves):
            diag.append((red, a, s.iters, s.rel_residual, int(s.converged)))
    for y in SLICE_LEVELS:
        slices.append((y, *[(rep.slice_errors or {}).get(y) for rep in reports]))

    red_cols = [f"red={fmt(r)}" for r in conf.noise_levels]
    files = {
        "sweep.csv": csv_text(["noise_level", "n", "alpha", "ratio", "global_error"], sweep),
        "slices.csv": csv_text(["y", *red_cols], slices),
        "field.csv": csv_text(["noise_level", "x", "y", "u_exact", "u_reconstructed"], field),
        "summary.csv": csv_text(["noise_level", "n_star", "alpha_star", "global_error",
                                 *[f"y={fmt(y)}" for y in SLICE_LEVELS]], summary),
        "config.json": json.dumps(conf.to_dict(), indent=2, sort_keys=True) + "\n",
    }
    if verbose:
        files["solver.csv"] = csv_text(
            ["noise_level", "alpha", "iters", "rel_residual", "converged"], diag)
    return files


def summary_table(conf: RunConfig, reports: List[SweepReport]) -> str:
    head = "Red".ljust(10) + "".join(f"y={y:<9g}" for y in SLICE_LEVELS) + "alpha*"
    lines = [head]
    for red, rep in zip(conf.noise_levels, reports):
        se = rep.slice_errors or {}
        cells = "".join(f"{se[y]:<11.4e}" if y in se else "n/a".ljust(11) for y in SLICE_LEVELS)
        lines.append(f"{red:<10g}{cells}{rep.alpha_star:.4g}")
    return "\n".join(lines)


# --------------------------------------------------------------- commands

def cmd_run(args) -> int:
    raw = load_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    conf = RunConfig.from_dict(raw)
    case, grid = get_case(conf.case), conf.grid()

    def one(red):
        return run_sweep(case, grid, NoiseSpec(red, conf.seed), conf.agrid, tol=conf.tol,
                         max_iter=conf.max_iter, penalty_weight=conf.penalty_weight,
                         taper_width=conf.taper_width)

    threads = max(1, args.threads or 1)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, conf.noise_levels))
    else:
        reports = [one(r) for r in conf.noise_levels]

    write_outputs(conf.out, run_files(conf, reports, args.verbose))
    print(summary_table(conf, reports))
    print(f"wrote results to {conf.out}")
    return EXIT_OK


def cmd_kernel(args) -> int:
    alphas = args.alphas
    if not alphas:
        raise ConfigError("need at least one alpha")
    rows = []
    for a in alphas:
        try:
            kern = GaussianKernel(a)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        m, M = lemma_bounds(kern)
        rows.append((kern.alpha, m, M, asymptote_ratio(kern, args.xi)))
    text = csv_text(["alpha", "m_alpha", "M_alpha", "ratio_to_asymptote"], rows)
    if args.out is None:
        sys.stdout.write(text)
    else:
        write_outputs(args.out, {"kernel.csv": text})
        print(f"wrote {os.path.join(args.out, 'kernel.csv')}")
    return EXIT_OK


def consistency_ratio(case_name: str, coarse, fine):
    """Truncation residuals on two grids, raw and divided by ``dy^2``."""
    case = get_case(case_name)
    if not case.has_exact:
        raise ConfigError(f"case {case_name!r} has no exact solution")
    out = {}
    for scaled in (False, True):
        rc = np.abs(truncation_residual(build_grid(case.domain, *coarse), case, scaled)).max()
        rf = np.abs(truncation_residual(build_grid(case.domain, *fine), case, scaled)).max()
        out["scaled" if scaled else "raw"] = (float(rc), float(rf), float(rc / rf))
    return out


def cmd_consistency(args) -> int:
    coarse, fine = tuple(args.coarse), tuple(args.fine)
    if coarse == fine:
        log.warning("coarse and fine grids are identical; the ratio is 1 by construction")
    try:
        res = consistency_ratio(args.case, coarse, fine)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(f"case {args.case}: grid {coarse} -> {fine}")
    for key, label in (("raw", "max|A U - B|"), ("scaled", "max|A U - B| / dy^2")):
        rc, rf, ratio = res[key]
        print(f"{label:<22} coarse {rc:.6e}  fine {rf:.6e}  ratio {ratio:.4f}")
    return EXIT_OK


# ------------------------------------------------------------------ entry

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="log progress and solver stats")

    p = argparse.ArgumentParser(prog="helmcauchy", parents=[common],
                                description="Mollified Cauchy problem solver for the Helmholtz equation.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="noise-level sweep with CSV reports")
    r.add_argument("--config", metavar="PATH", help="JSON configuration file")
    r.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    r.add_argument("--seed", type=int, help="noise seed (overrides config)")
    r.add_argument("--threads", type=int, default=1, help="noise levels solved in parallel")
    r.set_defaults(func=cmd_run)

    k = sub.add_parser("kernel", parents=[common], help="Gaussian kernel symbol diagnostics")
    k.add_argument("--alphas", type=float, nargs="*", default=[1.0, 0.5, 0.1, 0.01],
                   metavar="A", help="kernel widths in (0, 1]")
    k.add_argument("--xi", type=float, default=1.0, help="|xi| used for the asymptote ratio")
    k.add_argument("--out", metavar="DIR", help="write kernel.csv here instead of stdout")
    k.set_defaults(func=cmd_kernel)

    c = sub.add_parser("consistency", parents=[common], help="truncation order of the scheme")
    c.add_argument("--case", default="example2", choices=sorted(CASES))
    c.add_argument("--coarse", type=int, nargs=2, default=[31, 21], metavar=("NX", "NY"))
    c.add_argument("--fine", type=int, nargs=2, default=[61, 41], metavar=("NX", "NY"))
    c.set_defaults(func=cmd_consistency)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
