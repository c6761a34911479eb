"""Mollifier penalty: extension, Gaussian convolution and difference operators.

Every operator on the rectangle factors as a Kronecker product of a y-factor
and an x-factor (x fastest in the flattened ordering), so the penalty

    P = E^T (I - C)^T D (I - C) E,
    D = I + Dx^T Dx + Dy^T Dy + Dxx^T Dxx + Dyy^T Dyy + 2 Dxy^T Dxy

is assembled from small 1D matrices without ever forming the extended-grid
operators explicitly.  The assembled penalty carries a scalar ``weight``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Tuple

import numpy as np
import scipy.sparse as sp

from .assembly import Grid2D

TRUNCATION_RADIUS = 4.0  # kernel support, in units of alpha
# Scale of the penalty against the data misfit.  The difference operators
# carry their 1/h factors, which makes the unweighted penalty dwarf the
# dy^2-scaled misfit rows; 1.0 gives the bare functional.
PENALTY_WEIGHT = 1e-14


@dataclass(frozen=True)
class GaussianKernel:
    """Isotropic Gaussian ``exp(-|x|^2 / (2 alpha^2)) / (2 pi alpha^2)``."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    def __call__(self, x, y):
        a2 = self.alpha**2
        return np.exp(-(np.asarray(x) ** 2 + np.asarray(y) ** 2) / (2 * a2)) / (2 * np.pi * a2)

    @property
    def radius(self) -> float:
        return TRUNCATION_RADIUS * self.alpha


def symbol(kernel: GaussianKernel, xi) -> float:
    """Fourier transform of the kernel, convention ``exp(-2 pi i <x, xi>)``."""
    xi = np.asarray(xi, float)
    return float(np.exp(-2.0 * np.pi**2 * kernel.alpha**2 * np.dot(xi, xi)))


def lemma_bounds(kernel: GaussianKernel, n_dirs: int = 256) -> Tuple[float, float]:
    """``(m_alpha, M_alpha)``: min and max of ``|1 - symbol|^2`` on the unit circle.

    The extremes are taken over ``n_dirs`` sampled directions and checked
    against the closed form ``(1 - exp(-2 pi^2 alpha^2))^2``.
    """
    theta = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    vals = np.array([(1.0 - symbol(kernel, (np.cos(t), np.sin(t)))) ** 2 for t in theta])
    m, M = float(vals.min()), float(vals.max())
    closed = math.expm1(-2.0 * math.pi**2 * kernel.alpha**2) ** 2
    if abs(m - closed) > 1e-12 or abs(M - closed) > 1e-12:
        raise ArithmeticError(f"sampled bounds ({m}, {M}) disagree with closed form {closed}")
    return m, M


def asymptote_ratio(kernel: GaussianKernel, xi_norm: float = 1.0) -> float:
    """``(1 - symbol) / (2 pi^2 alpha^2 |xi|^2)``; tends to 1 as ``alpha |xi| -> 0``."""
    t = 2.0 * math.pi**2 * kernel.alpha**2 * xi_norm**2
    return -math.expm1(-t) / t


# --------------------------------------------------------------------------
# Kronecker-structured operators


class KronOperator:
    """Linear map ``v -> vec(Ly @ V @ Lx^T)`` with ``V`` the (ny, nx) reshape of ``v``.

    Equivalent to ``kron(Ly, Lx)`` acting on x-fastest flattened vectors.
    """

    def __init__(self, left, right):
        self.left = _dense(left)
        self.right = _dense(right)

    @property
    def shape(self):
        return (self.left.shape[0] * self.right.shape[0],
                self.left.shape[1] * self.right.shape[1])

    def apply2d(self, V: np.ndarray) -> np.ndarray:
        return self.left @ V @ self.right.T

    def __matmul__(self, v):
        v = np.asarray(v, float)
        V = v.reshape(self.left.shape[1], self.right.shape[1])
        return self.apply2d(V).ravel()

    @property
    def T(self) -> "KronOperator":
        return KronOperator(self.left.T, self.right.T)

    def tosparse(self) -> sp.csr_matrix:
        return sp.kron(sp.csr_matrix(self.left), sp.csr_matrix(self.right), format="csr")

    def toarray(self) -> np.ndarray:
        return np.kron(self.left, self.right)


def _dense(m) -> np.ndarray:
    return m.toarray() if sp.issparse(m) else np.asarray(m, float)


# --------------------------------------------------------------------------
# Extended grid and the 1D factors


def smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


@dataclass(frozen=True)
class ExtendedGrid:
    """The base grid padded by ``p`` ghost layers on every side.

    Only the innermost ``depth`` ghost layers carry reflected data; the
    outer ``taper_width`` of those are damped by a smoothstep cutoff and
    everything further out is zero.  ``depth`` defaults to the deepest
    reflection the base grid supports.
    """

    base: Grid2D
    p: int
    taper_width: int = 2
    depth: int = -1

    def __post_init__(self):
        if self.taper_width < 1 or self.p < 2 * self.taper_width:
            raise ValueError(f"need p >= 2*taper_width >= 2, got p={self.p}, "
                             f"taper_width={self.taper_width}")
        if self.depth < 0:
            object.__setattr__(self, "depth", min(self.p, self.max_depth))
        if not 2 * self.taper_width <= self.depth <= self.p:
            raise ValueError(f"depth={self.depth} must lie in [2*taper_width, p]")

    @property
    def max_depth(self) -> int:
        return (min(self.base.n_x, self.base.n_y) - 1) // 2

    @property
    def n_x(self) -> int:
        return self.base.n_x + 2 * self.p

    @property
    def n_y(self) -> int:
        return self.base.n_y + 2 * self.p

    @property
    def x(self) -> np.ndarray:
        return self.base.domain.a + (np.arange(self.n_x) - self.p) * self.base.dx

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.n_y) - self.p) * self.base.dy

    def cutoff(self) -> np.ndarray:
        """Cutoff weight of ghost layers ``1..p`` (index 0 is layer 1)."""
        m = np.arange(1, self.p + 1)
        s = (m - (self.depth - self.taper_width)) / self.taper_width
        chi = 1.0 - smoothstep(s)
        chi[m > self.depth] = 0.0
        return chi

    def interior_mask(self) -> np.ndarray:
        """Flattened mask of base nodes inside the extended grid."""
        mask = np.zeros((self.n_y, self.n_x), bool)
        mask[self.p:self.p + self.base.n_y, self.p:self.p + self.base.n_x] = True
        return mask.ravel()

    def untapered_mask(self) -> np.ndarray:
        """Nodes where the cutoff equals one (base nodes included)."""
        keep = self.depth - self.taper_width
        mask = np.zeros((self.n_y, self.n_x), bool)
        mask[self.p - keep:self.p + self.base.n_y + keep,
             self.p - keep:self.p + self.base.n_x + keep] = True
        return mask.ravel()


def default_ghost_layers(grid: Grid2D, alpha_max: float) -> int:
    h = min(grid.dx, grid.dy)
    return max(4, math.ceil(TRUNCATION_RADIUS * alpha_max / h - 1e-9))


def extension_1d(n: int, p: int, depth: int, chi: np.ndarray) -> np.ndarray:
    """``(n + 2p) x n`` reflection ``3 u(-t) - 2 u(-2t)`` damped by ``chi``."""
    if 2 * depth >= n:
        raise ValueError(f"{n} nodes cannot support {depth} reflected ghost layers")
    E = np.zeros((n + 2 * p, n))
    E[p:p + n] = np.eye(n)
    for m in range(1, depth + 1):
        w = chi[m - 1]
        lo, hi = p - m, p + n - 1 + m
        E[lo, m] += 3 * w
        E[lo, 2 * m] -= 2 * w
        E[hi, n - 1 - m] += 3 * w
        E[hi, n - 1 - 2 * m] -= 2 * w
    return E


def convolution_1d(n: int, h: float, alpha: float) -> np.ndarray:
    """Sampled 1D Gaussian truncated at ``4 alpha``, rows renormalised to unit mass."""
    r = int(math.floor(TRUNCATION_RADIUS * alpha / h + 1e-12))
    offs = np.arange(-r, r + 1)
    w = np.exp(-0.5 * (offs * h / alpha) ** 2)
    C = np.zeros((n, n))
    for i in range(n):
        lo, hi = max(0, i - r), min(n, i + r + 1)
        ww = w[lo - i + r:hi - i + r]
        C[i, lo:hi] = ww / ww.sum()
    return C


def first_difference(n: int, h: float) -> sp.csr_matrix:
    D = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1], D[i, i + 1] = -0.5, 0.5
    D[0, :3] = [-1.5, 2.0, -0.5]
    D[n - 1, n - 3:] = [0.5, -2.0, 1.5]
    return (D / h).tocsr()


def second_difference(n: int, h: float) -> sp.csr_matrix:
    D = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1:i + 2] = [1.0, -2.0, 1.0]
    D[0, :4] = [2.0, -5.0, 4.0, -1.0]
    D[n - 1, n - 4:] = [-1.0, 4.0, -5.0, 2.0]
    return (D / h**2).tocsr()


# --------------------------------------------------------------------------
# Builders


def build_extension(egrid: ExtendedGrid) -> KronOperator:
    g = egrid.base
    chi = egrid.cutoff()
    Ey = extension_1d(g.n_y, egrid.p, egrid.depth, chi)
    Ex = extension_1d(g.n_x, egrid.p, egrid.depth, chi)
    return KronOperator(Ey, Ex)


def build_convolution(kernel: GaussianKernel, egrid: ExtendedGrid) -> KronOperator:
    g = egrid.base
    for h in (g.dx, g.dy):
        if math.ceil(kernel.radius / h - 1e-9) > egrid.p:
            raise ValueError(f"kernel radius {kernel.radius} exceeds the ghost band "
                             f"of {egrid.p} layers at step {h}")
    return KronOperator(convolution_1d(egrid.n_y, g.dy, kernel.alpha),
                        convolution_1d(egrid.n_x, g.dx, kernel.alpha))


def build_derivatives(egrid: ExtendedGrid):
    """``(Dx, Dy, Dxx, Dyy, Dxy)`` on the extended grid."""
    g = egrid.base
    Iy, Ix = sp.identity(egrid.n_y), sp.identity(egrid.n_x)
    dx, dxx = first_difference(egrid.n_x, g.dx), second_difference(egrid.n_x, g.dx)
    dy, dyy = first_difference(egrid.n_y, g.dy), second_difference(egrid.n_y, g.dy)
    return (KronOperator(Iy, dx), KronOperator(dy, Ix), KronOperator(Iy, dxx),
            KronOperator(dyy, Ix), KronOperator(dy, dx))


def _weight_terms(egrid: ExtendedGrid) -> List[Tuple[np.ndarray, np.ndarray]]:
    """``D`` written as a sum of Kronecker products ``Ly (x) Lx``."""
    g = egrid.base
    dx, dxx = first_difference(egrid.n_x, g.dx), second_difference(egrid.n_x, g.dx)
    dy, dyy = first_difference(egrid.n_y, g.dy), second_difference(egrid.n_y, g.dy)
    Qx1, Qx2 = (dx.T @ dx).toarray(), (dxx.T @ dxx).toarray()
    Qy1, Qy2 = (dy.T @ dy).toarray(), (dyy.T @ dyy).toarray()
    Ix, Iy = np.eye(egrid.n_x), np.eye(egrid.n_y)
    return [(Iy, Ix + Qx1 + Qx2), (Qy1 + Qy2, Ix), (2.0 * Qy1, Qx1)]


@dataclass
class RegularizerStack:
    kernel: GaussianKernel
    egrid: ExtendedGrid
    E: KronOperator
    C: KronOperator
    Dx: KronOperator
    Dy: KronOperator
    Dxx: KronOperator
    Dyy: KronOperator
    Dxy: KronOperator
    weight: float = 1.0

    @property
    def size(self) -> int:
        return self.egrid.base.size

    def smoothing_residual(self, u: np.ndarray) -> np.ndarray:
        """``(I - C) E u`` on the extended grid."""
        Eu = self.E @ u
        return Eu - self.C @ Eu

    def apply_weight(self, w: np.ndarray) -> np.ndarray:
        out = w.copy()
        for Dop, c in ((self.Dx, 1.0), (self.Dy, 1.0), (self.Dxx, 1.0),
                       (self.Dyy, 1.0), (self.Dxy, 2.0)):
            out += c * (Dop.T @ (Dop @ w))
        return out

    def apply_penalty(self, u: np.ndarray) -> np.ndarray:
        """Matrix-free ``weight * E^T (I-C)^T D (I-C) E u``."""
        w = self.apply_weight(self.smoothing_residual(u))
        w = w - self.C.T @ w
        return self.weight * (self.E.T @ w)

    def penalty_value(self, u: np.ndarray) -> float:
        w = self.smoothing_residual(u)
        return self.weight * float(w @ self.apply_weight(w))

    @cached_property
    def penalty(self) -> np.ndarray:
        """Materialised penalty matrix, assembled from the 1D factors."""
        Ey, Ex = self.E.left, self.E.right
        Fy, Fx = self.C.left @ Ey, self.C.right @ Ex
        n = self.size
        P = np.zeros((n, n))
        for Ly, Lx in _weight_terms(self.egrid):
            LyEy, LyFy = Ly @ Ey, Ly @ Fy
            LxEx, LxFx = Lx @ Ex, Lx @ Fx
            P += np.kron(Ey.T @ LyEy, Ex.T @ LxEx)
            P -= np.kron(Ey.T @ LyFy, Ex.T @ LxFx)
            P -= np.kron(Fy.T @ LyEy, Fx.T @ LxEx)
            P += np.kron(Fy.T @ LyFy, Fx.T @ LxFx)
        if self.weight != 1.0:
            P *= self.weight
        return P

    def diagonal(self) -> np.ndarray:
        return np.diag(self.penalty).copy()


def build_penalty(kernel: GaussianKernel, egrid: ExtendedGrid,
                  weight: float = PENALTY_WEIGHT) -> RegularizerStack:
    if not weight > 0:
        raise ValueError(f"penalty weight must be positive, got {weight}")
    E = build_extension(egrid)
    C = build_convolution(kernel, egrid)
    return RegularizerStack(kernel, egrid, E, C, *build_derivatives(egrid), weight=weight)
