"""Noise injection, the alpha sweep, the selection rule and error metrics."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .assembly import Grid2D, assemble_rhs, assemble_system, march_solve
from .mollifier import (GaussianKernel, ExtendedGrid, build_penalty, default_ghost_layers,
                        PENALTY_WEIGHT)
from .problem import CauchyCase
from .solver import SolveResult, assemble_normal, solve_direct, solve_spd

log = logging.getLogger(__name__)

SLICE_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class NoiseSpec:
    """Target relative data error and the seed of the noise draw."""

    target_red: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.target_red < 1.0:
            raise ValueError(f"target_red must lie in (0, 1), got {self.target_red}; "
                             "pass noise=None for clean data")


def add_noise(G, F, spec: NoiseSpec):
    """Perturb the Cauchy data so that each trace has relative error ``target_red``.

    Two independent standard-normal vectors are drawn from
    ``default_rng(seed)`` and rescaled separately, so the achieved relative
    error equals the target up to rounding.  Returns
    ``(G_eps, F_eps, eps_g, eps_f)``.
    """
    G = np.asarray(G, float)
    F = np.asarray(F, float)
    nG, nF = np.linalg.norm(G), np.linalg.norm(F)
    if nG == 0 or nF == 0:
        raise ValueError("cannot calibrate relative noise on zero data")
    rng = np.random.default_rng(spec.seed)
    theta_g = rng.standard_normal(G.shape)
    theta_f = rng.standard_normal(F.shape)
    eps_g = spec.target_red * nG / np.linalg.norm(theta_g)
    eps_f = spec.target_red * nF / np.linalg.norm(theta_f)
    return G + eps_g * theta_g, F + eps_f * theta_f, eps_g, eps_f


def relative_error(noisy, clean) -> float:
    clean = np.asarray(clean, float)
    return float(np.linalg.norm(np.asarray(noisy) - clean) / np.linalg.norm(clean))


@dataclass(frozen=True)
class AlphaGrid:
    alpha0: float = 0.5
    q: float = 0.7
    N0: int = 15

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.N0 < 2:
            raise ValueError("N0 must be at least 2")

    def values(self) -> np.ndarray:
        """``alpha_n = alpha0 q^n`` for ``n = 1..N0``."""
        return self.alpha0 * self.q ** np.arange(1, self.N0 + 1)


def resolvable_alphas(alphas: Sequence[float], grid: Grid2D) -> np.ndarray:
    """Drop values whose truncated kernel covers a single node.

    Below ``4 alpha < min(dx, dy)`` the discrete convolution is the identity,
    the penalty vanishes and every such alpha returns the same solution.
    """
    alphas = np.asarray(alphas, float)
    keep = 4.0 * alphas >= min(grid.dx, grid.dy)
    return alphas[keep]


def select_alpha(solutions: Sequence[Tuple[float, np.ndarray]]):
    """Minimise ``|U_n - U_{n+1}| / (alpha_n - alpha_{n+1})`` over consecutive pairs.

    Returns ``(n_star, alpha_star, ratios)`` with ``n_star`` 1-based.  Ties go
    to the larger alpha.
    """
    if len(solutions) < 2:
        raise ValueError("need at least two regularised solutions")
    alphas = np.array([a for a, _ in solutions], float)
    if np.any(np.diff(alphas) >= 0):
        raise ValueError("alphas must be strictly decreasing")
    ratios = np.array([
        np.linalg.norm(np.asarray(solutions[i][1]) - np.asarray(solutions[i + 1][1]))
        / (alphas[i] - alphas[i + 1])
        for i in range(len(solutions) - 1)
    ])
    i = int(np.argmin(ratios))  # first minimum, i.e. largest alpha among ties
    return i + 1, float(alphas[i]), ratios


def slice_error(U, case: CauchyCase, grid: Grid2D, y: float) -> float:
    """Relative l2 error of the reconstruction along the line ``y``."""
    if not case.has_exact:
        raise ValueError(f"case {case.name!r} has no exact solution")
    i = grid.level_index(y)
    x = grid.x
    exact = case.exact(x, np.full_like(x, grid.y[i]))
    row = np.asarray(U, float).reshape(grid.n_y, grid.n_x)[i]
    return float(np.linalg.norm(row - exact) / np.linalg.norm(exact))


def global_error(U, case: CauchyCase, grid: Grid2D) -> float:
    return relative_error(U, grid.sample(case))


@dataclass
class SweepReport:
    case: str
    grid: Grid2D
    noise: Optional[NoiseSpec]
    alphas: np.ndarray
    solutions: List[np.ndarray] = field(repr=False)
    ratios: np.ndarray
    n_star: int
    alpha_star: float
    solves: List[SolveResult] = field(repr=False)
    errors: Optional[np.ndarray] = None
    slice_errors: Optional[dict] = None
    global_error: Optional[float] = None
    march_error: Optional[float] = None
    achieved_red: Optional[Tuple[float, float]] = None

    @property
    def selected(self) -> np.ndarray:
        return self.solutions[self.n_star - 1]

    def recompute_ratios(self) -> np.ndarray:
        return select_alpha(list(zip(self.alphas, self.solutions)))[2]


def run_sweep(case: CauchyCase, grid: Grid2D, noise: Optional[NoiseSpec] = None,
              agrid: AlphaGrid = AlphaGrid(), tol: float = 1e-10,
              max_iter: Optional[int] = None, penalty_weight: float = PENALTY_WEIGHT,
              taper_width: int = 2) -> SweepReport:
    """Solve the regularised problem over the alpha grid and apply the selection rule."""
    alphas = resolvable_alphas(agrid.values(), grid)
    if len(alphas) < 2:
        raise ValueError(f"fewer than two alphas of {agrid} are resolvable on this grid")

    sys = assemble_system(grid, case)
    G, F = case.dirichlet(grid.x), case.neumann(grid.x)
    achieved = None
    if noise is not None:
        G_eps, F_eps, _, _ = add_noise(G, F, noise)
        achieved = (relative_error(G_eps, G), relative_error(F_eps, F))
    else:
        G_eps, F_eps = G, F
    B = assemble_rhs(grid, case, G_eps, F_eps)

    egrid = ExtendedGrid(grid, default_ghost_layers(grid, alphas[0]), taper_width)
    solutions, solves = [], []
    for a in alphas:
        stack = build_penalty(GaussianKernel(float(a)), egrid, weight=penalty_weight)
        nsys = assemble_normal(sys, stack, B)
        res = solve_spd(nsys, tol=tol, max_iter=max_iter)
        if not res.converged:
            log.warning("alpha=%.5g: CG did not converge, using the direct solution", a)
            U = solve_direct(nsys)
            res = SolveResult(U, res.iters, nsys.residual(U), True, res.history)
        log.info("alpha=%.5g iters=%d residual=%.2e", a, res.iters, res.rel_residual)
        solutions.append(res.U)
        solves.append(res)

    n_star, alpha_star, ratios = select_alpha(list(zip(alphas, solutions)))
    report = SweepReport(case.name, grid, noise, alphas, solutions, ratios, n_star,
                         alpha_star, solves, achieved_red=achieved)
    if case.has_exact:
        U_sel = report.selected
        report.errors = np.array([global_error(U, case, grid) for U in solutions])
        report.global_error = global_error(U_sel, case, grid)
        report.slice_errors = {y: slice_error(U_sel, case, grid, y) for y in SLICE_LEVELS}
        report.march_error = global_error(march_solve(sys, B), case, grid)
    return report
