"""Operators above or below the elementary level.

Half of this module deliberately implements functions at a *low* level of
abstraction so that differentiating them exhibits classic failure modes:
lookup tables and counting loops are piecewise constant, truncated
polynomial approximations have less accurate derivatives, input-dependent
fast paths carry the derivative of the branch actually taken, and iterating
a solver loop stops when the primal converges, not the derivative.

The other half raises the abstraction level to repair two of those cases:
`fixed_point_implicit` differentiates a fixed point through its defining
equation with its own stopping criterion, and `linear_solve` carries
closed-form forward/reverse rules instead of differentiating a
factorization loop.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from . import core
from .core import Dual, Scalar, maximum, primal_value
from .errors import DiagnosticError, UsageError

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Iterative square root, differentiated through the loop (the pitfall)
# ---------------------------------------------------------------------------

def heron_loop(a: Scalar, x0: Scalar, tol: float, max_iters: int):
    """Babylonian square-root iteration; returns (x, iterations).

    The stopping test |x*x - a| < tol compares primal values only, so
    derivatives flow through exactly the iterations that were executed.
    """
    if primal_value(a) <= 0.0 or primal_value(x0) <= 0.0 or tol <= 0.0:
        raise UsageError("heron requires a > 0, x0 > 0, tol > 0")
    x = x0
    iters = 0
    while abs(x * x - a) >= tol:
        if iters >= max_iters:
            raise DiagnosticError(f"heron did not converge within {max_iters} iterations")
        x = (x + a / x) * 0.5
        iters += 1
    return x, iters


def heron_sqrt_lowlevel(a: Scalar, x0: Scalar = 1.0, tol: float = 1e-6, max_iters: int = 100) -> Scalar:
    """Square root of ``a`` by refining ``x0`` until |x*x - a| < tol.

    Primal accuracy is guaranteed by the stopping test; derivative accuracy
    is not. With x0 already past the tolerance the loop body never runs and
    the result does not depend on ``a`` at all on this branch.
    """
    x, _ = heron_loop(a, x0, tol, max_iters)
    return x


# ---------------------------------------------------------------------------
# Implicit fixed-point differentiation (the repair)
# ---------------------------------------------------------------------------

@dataclass
class FixedPointProblem:
    """A contraction ``x <- phi(x, theta)`` with solve and derivative tolerances."""

    phi: Callable[[Scalar, Scalar], Scalar]
    x0: float
    tol_primal: float = 1e-12
    tol_deriv: float = 1e-12
    max_iters: int = 500

    def __post_init__(self):
        if self.tol_primal <= 0.0 or self.tol_deriv <= 0.0:
            raise UsageError("fixed-point tolerances must be positive")
        if self.max_iters < 1:
            raise UsageError("max_iters must be at least 1")


def fixed_point_implicit(problem: FixedPointProblem, theta: float) -> tuple[float, float]:
    """Solve x = phi(x, theta), then differentiate the fixed point itself.

    The derivative recurrence d <- phi_x * d + phi_theta runs at the
    converged state with its own stopping criterion, so the result is
    independent of the initial guess and converges to
    phi_theta / (1 - phi_x).
    """
    x = float(problem.x0)
    for _ in range(problem.max_iters):
        x_next = primal_value(problem.phi(x, theta))
        if abs(x_next - x) < problem.tol_primal:
            x = x_next
            break
        x = x_next
    else:
        raise DiagnosticError(
            f"fixed point did not converge within {problem.max_iters} iterations"
        )

    phi_x = problem.phi(Dual(x, 1.0), theta)
    dphi_dx = phi_x.tangent if isinstance(phi_x, Dual) else 0.0
    if abs(dphi_dx) >= 1.0:
        raise DiagnosticError(
            f"not a contraction at the fixed point: |dphi/dx| = {abs(dphi_dx)} >= 1"
        )
    phi_t = problem.phi(x, Dual(theta, 1.0))
    dphi_dtheta = phi_t.tangent if isinstance(phi_t, Dual) else 0.0

    d = 0.0
    for _ in range(problem.max_iters):
        d_next = dphi_dx * d + dphi_dtheta
        if abs(d_next - d) < problem.tol_deriv:
            return x, d_next
        d = d_next
    raise DiagnosticError(
        f"derivative recurrence did not converge within {problem.max_iters} iterations"
    )


# ---------------------------------------------------------------------------
# Linear solve with derivative rules at the solve level (the repair)
# ---------------------------------------------------------------------------

@dataclass
class DenseSystem:
    """A dense square system A x = b."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.ascontiguousarray(self.a, dtype=float)
        self.b = np.ascontiguousarray(self.b, dtype=float)
        if self.a.ndim != 2 or self.a.shape[0] != self.a.shape[1] or self.a.shape[0] < 1:
            raise UsageError(f"A must be square and non-empty, got shape {self.a.shape}")
        if self.b.shape != (self.a.shape[0],):
            raise UsageError(f"b must have shape ({self.a.shape[0]},), got {self.b.shape}")


_PIVOT_RTOL = 1e-12


def _factor(system: DenseSystem):
    with warnings.catch_warnings():
        # singularity is reported through our own pivot check below
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(system.a)
    scale = float(np.max(np.abs(system.a)))
    if scale == 0.0 or float(np.min(np.abs(np.diag(lu)))) < _PIVOT_RTOL * scale:
        raise DiagnosticError("matrix is singular to working precision (pivot below threshold)")
    return lu, piv


def linear_solve(system: DenseSystem) -> np.ndarray:
    """Solve A x = b by dense LU with partial pivoting."""
    lu, piv = _factor(system)
    return lu_solve((lu, piv), system.b)


def linear_solve_jvp(system: DenseSystem, a_dot: np.ndarray, b_dot: np.ndarray):
    """Forward rule: x_dot = A^{-1} (b_dot - A_dot x)."""
    a_dot = np.asarray(a_dot, dtype=float)
    b_dot = np.asarray(b_dot, dtype=float)
    if a_dot.shape != system.a.shape or b_dot.shape != system.b.shape:
        raise UsageError("tangent shapes must match the system")
    lu, piv = _factor(system)
    x = lu_solve((lu, piv), system.b)
    x_dot = lu_solve((lu, piv), b_dot - a_dot @ x)
    return x, x_dot


def linear_solve_vjp(system: DenseSystem, x_bar: np.ndarray):
    """Reverse rule: solve A^T lam = x_bar, then b_bar = lam, A_bar = -lam x^T."""
    x_bar = np.asarray(x_bar, dtype=float)
    if x_bar.shape != system.b.shape:
        raise UsageError("x_bar shape must match the solution")
    lu, piv = _factor(system)
    x = lu_solve((lu, piv), system.b)
    lam = lu_solve((lu, piv), x_bar, trans=1)
    return x, lam, -np.outer(lam, x)


# ---------------------------------------------------------------------------
# Explicit-function approximations (pitfalls by construction)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SineTable:
    """Precomputed sine samples on a uniform grid over [0, 2*pi)."""

    resolution: int
    samples: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.resolution < 1:
            raise UsageError("table resolution must be positive")
        if not self.samples:
            step = TWO_PI / self.resolution
            object.__setattr__(
                self, "samples", tuple(math.sin(k * step) for k in range(self.resolution))
            )
        if len(self.samples) != self.resolution:
            raise UsageError("sample count does not match resolution")
        step = TWO_PI / self.resolution
        for k, s in enumerate(self.samples):
            if s != math.sin(k * step):
                raise UsageError(f"table sample {k} does not equal sin at its grid point")


def sin_lut(x: Scalar, table: SineTable) -> float:
    """Nearest-grid-point table lookup for sin(x).

    The index computation is non-differentiable, so the result is a plain
    constant: the derivative seen by either AD mode is exactly 0 at every
    input, even though the primal tracks sin to within the grid spacing.
    """
    step = TWO_PI / table.resolution
    wrapped = math.fmod(primal_value(x), TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    index = int(round(wrapped / step)) % table.resolution
    return table.samples[index]


_POLY_DEGREES = (3, 5, 7, 9, 11)


def sin_poly(x: Scalar, degree: int) -> Scalar:
    """Truncated sine series up to the given odd degree, for x in [-pi, pi].

    Differentiates to the one-order-lower truncated cosine series, which is
    noticeably less accurate than the primal near |x| = pi.
    """
    if degree not in _POLY_DEGREES:
        raise UsageError(f"degree must be one of {_POLY_DEGREES}, got {degree}")
    x2 = x * x
    term = x
    total = x
    for k in range(3, degree + 1, 2):
        term = term * x2 * (-1.0 / (k * (k - 1)))
        total = total + term
    return total


# ---------------------------------------------------------------------------
# Branch fast paths and ties (pitfalls by construction)
# ---------------------------------------------------------------------------

def identity_fastpath(x: Scalar) -> Scalar:
    """Returns x for every input, but via a constant branch at x == 0.

    On that branch the result does not depend on x, so AD reports
    derivative 0 there; everywhere else the derivative is 1.
    """
    if x == 0:
        return 0.0
    return x


def identity_fastpath_consistent(x: Scalar) -> Scalar:
    """Returns x for every input, with a branch whose derivative agrees.

    At x == 0 it computes sin(x) instead of a constant: the value is still
    0 and the chain rule through sin yields derivative cos(0) = 1, matching
    the other branch.
    """
    if x == 0:
        return core.sin(x)
    return x


def mul_fastpath(x: Scalar, y: Scalar) -> Scalar:
    """x*y with shortcut branches for y == 1 (return x) and y == 0 (return 0).

    The shortcuts never change the value but drop the dependence on the
    skipped factor: at y == 1 the y-derivative becomes 0 (truth: x), at
    y == 0 both partial derivatives become 0 (truth for x is y = 0, for y
    it is x).
    """
    if y == 1:
        return x
    if y == 0:
        return 0.0
    return x * y


def vec_max(values: Sequence[Scalar]) -> Scalar:
    """Maximum of a non-empty vector.

    Reduction is a left fold of the elementary max, whose tie rule prefers
    the first operand, so the derivative lands entirely on the first index
    attaining the maximum.
    """
    if len(values) == 0:
        raise UsageError("vec_max requires a non-empty vector")
    result = values[0]
    for v in values[1:]:
        result = maximum(result, v)
    return result
