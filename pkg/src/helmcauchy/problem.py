"""Continuous problem data for the 2D Helmholtz Cauchy problem.

The problem is posed on the rectangle ``[a, b] x [0, 1]``::

    u_xx + u_yy + k^2 eta(x, y) u = S(x, y)
    u_y(x, 0) = f(x)
    u(x, 0)   = g(x)

and the data are given at ``y = 0`` only.  Two closed-form benchmark cases are
shipped; custom cases are built directly from :class:`CauchyCase`.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]
Trace = Callable[[np.ndarray], np.ndarray]

SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class RectDomain:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"empty domain: a={self.a} must be < b={self.b}")

    @property
    def width(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class CauchyCase:
    """Problem data ``(k, eta, S, f, g)`` with an optional exact solution.

    Fields are vectorised callables: ``eta(x, y)``, ``source(x, y)`` and
    ``exact(x, y)`` broadcast over arrays, ``neumann(x)`` and ``dirichlet(x)``
    act on 1D abscissae.  ``exact_dy`` is the analytic y-derivative of the
    exact solution when one is known.
    """

    name: str
    domain: RectDomain
    k: float
    eta: Field
    source: Field
    neumann: Trace
    dirichlet: Trace
    exact: Optional[Field] = None
    exact_dy: Optional[Field] = None

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"wave number must be positive, got {self.k}")

    @property
    def has_exact(self) -> bool:
        return self.exact is not None

    def with_dirichlet(self, g: Trace) -> "CauchyCase":
        return replace(self, dirichlet=g)

    def sample(self, field: Field, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Evaluate ``field`` on the tensor grid ``x`` (fast) by ``y`` (slow).

        Returns an array of shape ``(len(y), len(x))``.
        """
        X, Y = np.meshgrid(np.asarray(x, float), np.asarray(y, float))
        return np.broadcast_to(field(X, Y), X.shape).astype(float)


def example1() -> CauchyCase:
    """Variable refraction index with an elliptic inclusion, ``k = 3``."""
    k = 3.0
    c = k / np.sqrt(2.0)

    def ellipse(x, y):
        return x**2 + (2.0 * y - 1.0) ** 2 / 0.8**2

    def eta(x, y):
        r = ellipse(np.asarray(x, float), np.asarray(y, float))
        return np.where(r <= 1.0, 2.0 - np.sqrt(np.minimum(r, 1.0)), 1.0)

    def exact(x, y):
        return (x - 2 * y + 1) * np.sin(c * (x + 2 * y - 1))

    def exact_dy(x, y):
        return (-2.0 * np.sin(c * (x + 2 * y - 1))
                + 2.0 * c * (x - 2 * y + 1) * np.cos(c * (x + 2 * y - 1)))

    def source(x, y):
        p = x - 2 * y + 1
        t = c * (x + 2 * y - 1)
        return (-2.5 * k**2 * p * np.sin(t)
                - 3.0 * k * np.sqrt(2.0) * np.cos(t)
                + k**2 * eta(x, y) * exact(x, y))

    def neumann(x):
        x = np.asarray(x, float)
        return (k * np.sqrt(2.0) * (x + 1) * np.cos(c * (x - 1))
                - 2.0 * np.sin(c * (x - 1)))

    def dirichlet(x):
        x = np.asarray(x, float)
        return (x + 1) * np.sin(c * (x - 1))

    return CauchyCase("example1", RectDomain(-1.0, 1.0), k, eta, source,
                      neumann, dirichlet, exact, exact_dy)


def example2() -> CauchyCase:
    """Gaussian profile growing linearly in depth, ``eta = 1 + y^2``, ``k = 1``."""
    k = 1.0

    def eta(x, y):
        return 1.0 + np.asarray(y, float) ** 2 + 0.0 * np.asarray(x, float)

    def exact(x, y):
        return 4.0 * (1.0 + y) / SQRT_2PI * np.exp(-8.0 * x**2)

    def exact_dy(x, y):
        return 4.0 / SQRT_2PI * np.exp(-8.0 * x**2) + 0.0 * y

    def source(x, y):
        return exact(x, y) * (256.0 * x**2 - 15.0 + y**2)

    def trace(x):
        return 4.0 / SQRT_2PI * np.exp(-8.0 * np.asarray(x, float) ** 2)

    return CauchyCase("example2", RectDomain(-1.5, 1.5), k, eta, source,
                      trace, trace, exact, exact_dy)


CASES = {"example1": example1, "example2": example2}


def get_case(name: str) -> CauchyCase:
    try:
        return CASES[name]()
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(CASES)}") from None


def verify_compatibility(case: CauchyCase, n_probe: int = 101) -> float:
    """Largest mismatch between the boundary data and the exact solution at y=0.

    Probes ``n_probe`` equispaced abscissae and compares ``g`` with ``u(x, 0)``
    and ``f`` with ``u_y(x, 0)``.  The y-derivative is analytic when the case
    provides one, otherwise a centred difference with step 1e-6.
    """
    if case.exact is None:
        raise ValueError(f"case {case.name!r} has no exact solution")
    x = np.linspace(case.domain.a, case.domain.b, n_probe)
    zero = np.zeros_like(x)
    if case.exact_dy is not None:
        uy = case.exact_dy(x, zero)
    else:
        h = 1e-6
        uy = (case.exact(x, zero + h) - case.exact(x, zero - h)) / (2 * h)
    mismatch_g = np.abs(case.dirichlet(x) - case.exact(x, zero))
    mismatch_f = np.abs(case.neumann(x) - uy)
    return float(max(mismatch_g.max(), mismatch_f.max()))
