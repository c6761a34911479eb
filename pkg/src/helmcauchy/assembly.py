"""Finite-difference discretisation and the block lower-triangular system.

Unknowns are stacked level by level, ``U = (U^1; ...; U^{n_y})`` with ``U^n``
the ``n_x`` nodal values on the line ``y = y_n`` (x varies fastest).  The
global system reads::

    U^1                          = G
    2 U^2 + A_1 U^1              = dy^2 S^1 + 2 dy F
    U^{n+1} + A_n U^n + U^{n-1}  = dy^2 S^n,      n = 2 .. n_y - 1

Level and node indices ``n`` and ``j`` in the public functions are 1-based to
match the way the scheme is written; arrays are 0-based internally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.sparse as sp

from .problem import CauchyCase, RectDomain


@dataclass(frozen=True)
class Grid2D:
    domain: RectDomain
    n_x: int
    n_y: int

    def __post_init__(self):
        if self.n_x < 5:
            raise ValueError(f"n_x must be >= 5 for the one-sided edge stencil, got {self.n_x}")
        if self.n_y < 3:
            raise ValueError(f"n_y must be >= 3, got {self.n_y}")

    @property
    def dx(self) -> float:
        return self.domain.width / (self.n_x - 1)

    @property
    def dy(self) -> float:
        return 1.0 / (self.n_y - 1)

    @property
    def gamma(self) -> float:
        return self.dy**2 / self.dx**2

    @property
    def x(self) -> np.ndarray:
        return self.domain.a + np.arange(self.n_x) * self.dx

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.n_y) * self.dy

    @property
    def size(self) -> int:
        return self.n_x * self.n_y

    def level_index(self, y: float) -> int:
        """0-based level whose ordinate is within ``dy/2`` of ``y``."""
        i = int(round(y / self.dy))
        if i < 0 or i >= self.n_y or abs(i * self.dy - y) > 0.5 * self.dy:
            raise ValueError(f"y={y} is not on the grid")
        return i

    def sample(self, case: CauchyCase, which: str = "exact") -> np.ndarray:
        """Flattened nodal values of one of the case's 2D fields."""
        fn = getattr(case, which)
        if fn is None:
            raise ValueError(f"case {case.name!r} has no {which!r} field")
        return case.sample(fn, self.x, self.y).ravel()


def build_grid(domain: RectDomain, n_x: int, n_y: int) -> Grid2D:
    return Grid2D(domain, int(n_x), int(n_y))


def _check_level(grid: Grid2D, n: int) -> None:
    if not 1 <= n <= grid.n_y - 1:
        raise IndexError(f"level {n} outside 1..{grid.n_y - 1}")


def lambda_coeff(grid: Grid2D, case: CauchyCase, j: int, n: int) -> float:
    """``2 + 2 gamma - k^2 dy^2 eta(x_j, y_n)`` at the 1-based node (j, n)."""
    if not 1 <= j <= grid.n_x:
        raise IndexError(f"node {j} outside 1..{grid.n_x}")
    if not 1 <= n <= grid.n_y:
        raise IndexError(f"level {n} outside 1..{grid.n_y}")
    eta = float(case.eta(np.float64(grid.x[j - 1]), np.float64(grid.y[n - 1])))
    return 2.0 + 2.0 * grid.gamma - case.k**2 * grid.dy**2 * eta


def lambda_row(grid: Grid2D, case: CauchyCase, n: int) -> np.ndarray:
    """All ``Lambda_j^n`` for level ``n`` at once."""
    y = np.full(grid.n_x, grid.y[n - 1])
    eta = np.broadcast_to(case.eta(grid.x, y), (grid.n_x,))
    return 2.0 + 2.0 * grid.gamma - case.k**2 * grid.dy**2 * eta


@dataclass(frozen=True)
class LevelMatrix:
    n: int
    matrix: sp.csr_matrix

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, v):
        return self.matrix @ v


def assemble_level(grid: Grid2D, case: CauchyCase, n: int) -> LevelMatrix:
    """Nearly tridiagonal ``A_n``: three-point rows inside, 4-wide edge rows."""
    _check_level(grid, n)
    nx, g = grid.n_x, grid.gamma
    lam = lambda_row(grid, case, n)

    diag = -lam.copy()
    diag[0] += 4 * g
    diag[-1] += 4 * g
    rows = [np.arange(nx), np.arange(1, nx - 1), np.arange(1, nx - 1)]
    cols = [np.arange(nx), np.arange(0, nx - 2), np.arange(2, nx)]
    vals = [diag, np.full(nx - 2, g), np.full(nx - 2, g)]
    # edge rows: u_xx ~ (2u_1 - 5u_2 + 4u_3 - u_4) / dx^2
    edge = np.array([-5 * g, 4 * g, -g])
    rows += [np.zeros(3, int), np.full(3, nx - 1)]
    cols += [np.array([1, 2, 3]), np.array([nx - 2, nx - 3, nx - 4])]
    vals += [edge, edge]
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nx, nx)).tocsr()
    return LevelMatrix(n, A)


@dataclass(frozen=True)
class ForwardSystem:
    """The block system ``A U = B``, kept as its level matrices."""

    grid: Grid2D
    case: CauchyCase
    levels: List[LevelMatrix] = field(repr=False)

    def _blocks(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, float)
        if v.shape != (self.grid.size,):
            raise ValueError(f"expected vector of length {self.grid.size}, got shape {v.shape}")
        return v.reshape(self.grid.n_y, self.grid.n_x)

    def level(self, n: int) -> sp.csr_matrix:
        return self.levels[n - 1].matrix

    def matrix(self) -> sp.csr_matrix:
        """Materialise the global ``n_x n_y`` square matrix."""
        ny = self.grid.n_y
        I = sp.identity(self.grid.n_x, format="csr")
        blocks = [[None] * ny for _ in range(ny)]
        blocks[0][0] = I
        blocks[1][0] = self.level(1)
        blocks[1][1] = 2 * I
        for m in range(2, ny):
            blocks[m][m - 2] = I
            blocks[m][m - 1] = self.level(m)
            blocks[m][m] = I
        return sp.bmat(blocks, format="csr")

    def apply(self, U: np.ndarray) -> np.ndarray:
        return apply_forward(self, U)

    def apply_transpose(self, V: np.ndarray) -> np.ndarray:
        W = self._blocks(V)
        out = np.zeros_like(W)
        out[0] = W[0] + self.level(1).T @ W[1]
        out[1] = 2 * W[1]
        for m in range(2, self.grid.n_y):
            out[m - 2] += W[m]
            out[m - 1] += self.level(m).T @ W[m]
            out[m] += W[m]
        return out.ravel()


def assemble_system(grid: Grid2D, case: CauchyCase) -> ForwardSystem:
    levels = [assemble_level(grid, case, n) for n in range(1, grid.n_y)]
    return ForwardSystem(grid, case, levels)


def assemble_rhs(grid: Grid2D, case: CauchyCase, g_vec, f_vec) -> np.ndarray:
    """Right-hand side ``B`` for Dirichlet data ``g_vec`` and Neumann data ``f_vec``."""
    g_vec = np.asarray(g_vec, float)
    f_vec = np.asarray(f_vec, float)
    if g_vec.shape != (grid.n_x,) or f_vec.shape != (grid.n_x,):
        raise ValueError(f"boundary data must have length n_x={grid.n_x}")
    S = case.sample(case.source, grid.x, grid.y)
    B = np.empty((grid.n_y, grid.n_x))
    B[0] = g_vec
    B[1] = grid.dy**2 * S[0] + 2 * grid.dy * f_vec
    B[2:] = grid.dy**2 * S[1:-1]
    return B.ravel()


def exact_rhs(grid: Grid2D, case: CauchyCase) -> np.ndarray:
    """``B`` built from the noise-free traces ``g(x_j)`` and ``f(x_j)``."""
    return assemble_rhs(grid, case, case.dirichlet(grid.x), case.neumann(grid.x))


def apply_forward(sys: ForwardSystem, U: np.ndarray) -> np.ndarray:
    W = sys._blocks(U)
    out = np.empty_like(W)
    out[0] = W[0]
    out[1] = sys.level(1) @ W[0] + 2 * W[1]
    for m in range(2, sys.grid.n_y):
        out[m] = W[m - 2] + sys.level(m) @ W[m - 1] + W[m]
    return out.ravel()


def march_solve(sys: ForwardSystem, rhs: np.ndarray) -> np.ndarray:
    """Exact block forward substitution; unstable in depth for noisy data."""
    B = sys._blocks(rhs)
    U = np.empty_like(B)
    U[0] = B[0]
    U[1] = 0.5 * (B[1] - sys.level(1) @ U[0])
    for m in range(2, sys.grid.n_y):
        U[m] = B[m] - sys.level(m) @ U[m - 1] - U[m - 2]
    return U.ravel()


def truncation_residual(grid: Grid2D, case: CauchyCase, scaled: bool = True) -> np.ndarray:
    """Residual of the exact solution in the interior marching rows.

    Returns ``(A U_exact - B_exact)`` restricted to blocks ``3..n_y`` as an
    ``(n_y - 2, n_x)`` array.  With ``scaled=True`` the rows are divided by
    ``dy^2``, which turns them into the local truncation error of the
    five-point equation itself.
    """
    if not case.has_exact:
        raise ValueError(f"case {case.name!r} has no exact solution")
    sys = assemble_system(grid, case)
    r = apply_forward(sys, grid.sample(case)) - exact_rhs(grid, case)
    r = r.reshape(grid.n_y, grid.n_x)[2:]
    return r / grid.dy**2 if scaled else r
