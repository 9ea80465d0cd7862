"""Dense BFGS with a backtracking Armijo line search."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg.blas import dsymv, dsyr2

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


class Termination(str, enum.Enum):
    GRADIENT = "gradient_tolerance"
    RELATIVE_DECREASE = "relative_decrease"
    MAX_ITERATIONS = "max_iterations"
    LINE_SEARCH = "line_search_failure"


class NonFiniteError(FloatingPointError):
    """Objective or gradient became NaN/inf."""


@dataclass
class BfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    termination: Termination
    history: list[float] = field(default_factory=list, repr=False)
    initial_fun: float = np.nan

    @property
    def converged(self) -> bool:
        return self.termination in (Termination.GRADIENT, Termination.RELATIVE_DECREASE)


def _checked(fun: Objective, x: np.ndarray) -> tuple[float, np.ndarray]:
    f, g = fun(x)
    f = float(f)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteError(f"non-finite objective ({f}) or gradient")
    return f, g


def armijo_backtrack(fun, x, f0, g0, p, alpha=1.0, c1=1e-4, shrink=0.5, max_steps=60):
    """Largest ``alpha = shrink**k`` giving sufficient decrease, or None.

    Uses a safeguarded quadratic-interpolation step instead of plain halving
    whenever the interpolant lands in ``[0.1, 0.5] * alpha``.
    Trial points whose objective overflows count as rejected steps.
    """
    slope = float(g0 @ p)
    for _ in range(max_steps):
        x_new = x + alpha * p
        if np.array_equal(x_new, x):
            return None  # step fell below floating-point resolution
        f_new, g_new = fun(x_new)
        f_new = float(f_new)
        if np.isfinite(f_new) and f_new <= f0 + c1 * alpha * slope:
            if not np.all(np.isfinite(g_new)):
                raise NonFiniteError("non-finite gradient at accepted step")
            return alpha, x_new, f_new, g_new
        if np.isfinite(f_new):
            denom = 2.0 * (f_new - f0 - slope * alpha)
            trial = -slope * alpha * alpha / denom if denom > 0 else shrink * alpha
            alpha = min(max(trial, 0.1 * alpha), shrink * alpha)
        else:
            alpha *= shrink
    return None


def minimize_bfgs(
    fun: Objective,
    x0: np.ndarray,
    max_iter: int = 1000,
    ftol: float = 1e-8,
    gtol: float = 1e-6,
    stall_iterations: int = 1,
    callback: Optional[Callable[[np.ndarray, float], None]] = None,
) -> BfgsResult:
    """Minimise ``fun`` (returning value and gradient) from ``x0``.

    Stops when ``max|g| < gtol``, when each of the last ``stall_iterations``
    iterations lowered the objective by less than ``ftol * (|f| + ftol)``, or
    after ``max_iter`` iterations. The update is skipped when ``s.y`` is not
    sufficiently positive, so every accepted iterate lowers the objective.
    """
    x = np.array(x0, dtype=np.float64)
    n = x.size
    f, g = _checked(fun, x)
    history = [f]
    # inverse Hessian, upper triangle only, updated in place
    H = np.asfortranarray(np.eye(n))
    scaled = False
    fresh = True  # H was just (re)set to the identity
    stalled = 0
    term = Termination.MAX_ITERATIONS
    it = 0
    if np.max(np.abs(g)) < gtol:
        term = Termination.GRADIENT
    while term is Termination.MAX_ITERATIONS and it < max_iter:
        p = -dsymv(1.0, H, g)
        if not g @ p < 0:
            H = np.asfortranarray(np.eye(n))
            scaled = False
            p = -g
        # without curvature information, try a step of unit length first
        alpha0 = 1.0 if scaled else 1.0 / max(float(np.linalg.norm(p)), 1e-12)
        step = armijo_backtrack(fun, x, f, g, p, alpha0)
        if step is None:
            if not fresh:
                # retry once along steepest descent before giving up
                H = np.asfortranarray(np.eye(n))
                scaled = False
                fresh = True
                continue
            term = Termination.LINE_SEARCH
            break
        _, x_new, f_new, g_new = step
        it += 1
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            if not scaled:
                H = np.asfortranarray(np.eye(n) * (sy / float(y @ y)))
                scaled = True
            rho = 1.0 / sy
            Hy = dsymv(1.0, H, y)
            # H += c s s' - rho (Hy s' + s Hy') as one symmetric rank-2 update
            c = rho * rho * float(y @ Hy) + rho
            H = dsyr2(1.0, s, 0.5 * c * s - rho * Hy, a=H, overwrite_a=True)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if callback is not None:
            callback(x, f)
        stalled = stalled + 1 if decrease <= ftol * (abs(f) + ftol) else 0
        fresh = False
        if np.max(np.abs(g)) < gtol:
            term = Termination.GRADIENT
        elif stalled >= stall_iterations:
            term = Termination.RELATIVE_DECREASE
    return BfgsResult(x, f, g, it, term, history, history[0])
