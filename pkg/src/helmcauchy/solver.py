"""Regularised normal equations ``(A^T A + P) U = A^T B`` and their solvers."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np
import scipy.linalg as sla

from .assembly import ForwardSystem
from .mollifier import RegularizerStack

log = logging.getLogger(__name__)

DIRECT_SIZE_LIMIT = 20000


class SolverError(RuntimeError):
    """Raised when a solve cannot produce a trustworthy answer."""


@dataclass
class NormalSystem:
    apply_M: Callable[[np.ndarray], np.ndarray]
    rhs: np.ndarray
    size: int
    matrix: Optional[np.ndarray] = None

    def residual(self, U: np.ndarray) -> float:
        """Relative residual ``|M U - rhs| / |rhs|``."""
        nb = np.linalg.norm(self.rhs)
        r = np.linalg.norm(self.apply_M(U) - self.rhs)
        return float(r / nb) if nb > 0 else float(r)


@dataclass
class SolveResult:
    U: np.ndarray
    iters: int
    rel_residual: float
    converged: bool
    history: List[float] = field(default_factory=list)


def assemble_normal(sys: ForwardSystem, stack: Optional[RegularizerStack], B: np.ndarray,
                    materialize: bool = True) -> NormalSystem:
    """Normal equations of ``|A U - B|^2 + U^T P U``.

    ``stack=None`` drops the penalty and leaves plain least squares.
    """
    n = sys.grid.size
    B = np.asarray(B, float)
    if B.shape != (n,):
        raise ValueError(f"rhs has shape {B.shape}, expected ({n},)")
    if stack is not None and stack.size != n:
        raise ValueError(f"penalty acts on {stack.size} unknowns, system has {n}")

    def apply_M(U):
        out = sys.apply_transpose(sys.apply(U))
        if stack is not None:
            out = out + stack.apply_penalty(U)
        return out

    M = None
    if materialize:
        A = sys.matrix()
        M = (A.T @ A).toarray()
        if stack is not None:
            M += stack.penalty
    return NormalSystem(apply_M, sys.apply_transpose(B), n, M)


def objective(sys: ForwardSystem, stack: Optional[RegularizerStack], B: np.ndarray,
              U: np.ndarray) -> float:
    r = sys.apply(U) - B
    J = float(r @ r)
    if stack is not None:
        J += stack.penalty_value(U)
    return J


def solve_spd(nsys: NormalSystem, tol: float = 1e-10, max_iter: Optional[int] = None,
              guess: Union[str, np.ndarray, None] = "auto") -> SolveResult:
    """Conjugate gradients on the symmetric positive definite normal matrix.

    Stops once ``|M U - rhs| <= tol |rhs|``.  Non-convergence is reported
    through ``converged=False`` rather than raised.

    ``guess="auto"`` starts from the direct solution whenever the matrix is
    materialised and small enough, otherwise from zero; ``guess=None``
    forces a cold start.  The normal matrix is badly conditioned, so cold
    starts rarely reach tight tolerances.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = 5 * nsys.size
    if isinstance(guess, str):
        if guess != "auto":
            raise ValueError(f"unknown guess mode {guess!r}")
        direct_ok = nsys.matrix is not None and nsys.size <= DIRECT_SIZE_LIMIT
        guess = solve_direct(nsys) if direct_ok else None
    M = nsys.matrix
    matvec = (lambda v: M @ v) if M is not None else nsys.apply_M

    b = nsys.rhs
    nb = np.linalg.norm(b)
    if nb == 0:
        return SolveResult(np.zeros(nsys.size), 0, 0.0, True, [0.0])
    x = np.zeros(nsys.size) if guess is None else np.array(guess, float)
    r = b - matvec(x)
    p = r.copy()
    rr = r @ r
    history = [np.sqrt(rr) / nb]
    it = 0
    while history[-1] > tol and it < max_iter:
        Ap = matvec(p)
        a = rr / (p @ Ap)
        x += a * p
        r -= a * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
        history.append(np.sqrt(rr) / nb)
    # recurrence residuals drift; report the true one
    rel = nsys.residual(x)
    converged = rel <= tol
    if not converged:
        log.warning("CG stopped after %d iterations at relative residual %.3e", it, rel)
    return SolveResult(x, it, rel, converged, history)


def solve_direct(nsys: NormalSystem, sym_tol: float = 1e-10) -> np.ndarray:
    """Cholesky solve of the materialised normal matrix."""
    if nsys.size > DIRECT_SIZE_LIMIT:
        raise SolverError(f"{nsys.size} unknowns exceed the direct-solve limit {DIRECT_SIZE_LIMIT}")
    M = nsys.matrix
    if M is None:
        raise SolverError("direct solve needs a materialised matrix")
    scale = np.abs(M).max()
    if np.abs(M - M.T).max() > sym_tol * scale:
        raise SolverError("normal matrix is not symmetric")
    try:
        factor = sla.cho_factor(M, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"normal matrix is not positive definite: {exc}") from None
    U = sla.cho_solve(factor, nsys.rhs)
    rel = nsys.residual(U)
    if rel > 1e-8:
        # one step of iterative refinement usually recovers the lost digits
        U = U + sla.cho_solve(factor, nsys.rhs - M @ U)
        rel = nsys.residual(U)
    if rel > 1e-8:
        raise SolverError(f"direct solve residual {rel:.3e} above 1e-8")
    return U

