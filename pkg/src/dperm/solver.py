"""Accelerated proximal gradient for smooth + weighted-l1 objectives."""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import SchemaError

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 50_000
# Step growth after each accepted step; lets the step track local curvature
# far below the global bound 1 / lipschitz.
_EXPAND = 1.1


@dataclass(frozen=True)
class SolverConfig:
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    restart: bool = True
    record_history: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise SchemaError("solver tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise SchemaError("solver max_iter must be a positive integer")


@dataclass(eq=False)
class SolverResult:
    theta: np.ndarray
    iterations: int
    final_objective: float
    converged: bool
    residual: float = math.inf
    rel_change: float = math.inf
    history: Optional[List[float]] = field(default=None, repr=False)

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "final_objective": self.final_objective,
            "converged": self.converged,
            "residual": self.residual,
            "rel_change": self.rel_change,
        }


def prox_l1(v, t):
    """Soft thresholding: ``sign(v) * max(|v| - t, 0)``."""
    if t < 0:
        raise SchemaError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def subgradient_residual(grad, theta, l1_weight):
    """Infinity norm of the minimum-norm element of ``grad + l1_weight * d||theta||_1``."""
    nonzero = theta != 0
    r = np.where(
        nonzero,
        grad + l1_weight * np.sign(theta),
        np.sign(grad) * np.maximum(np.abs(grad) - l1_weight, 0.0),
    )
    return float(np.max(np.abs(r))) if r.size else 0.0


def minimize(objective, config=None):
    """Minimise ``objective.smooth_value(theta) + objective.l1_weight * ||theta||_1``.

    FISTA with backtracking, started at zero with step ``1 / objective.lipschitz``.
    With ``restart`` on, any step that would raise the objective resets the
    momentum and is replaced by a plain proximal step from the current iterate,
    so the objective sequence is monotone. Stops once both the relative
    objective change and the subgradient residual are at most ``tol``.
    """
    config = config or SolverConfig()
    f = objective.smooth_value
    grad = objective.smooth_grad
    w = float(objective.l1_weight)
    tol = config.tol

    x = np.zeros(objective.dim)
    F_x = f(x) + w * float(np.abs(x).sum())
    y = x
    t = 1.0
    step = 1.0 / float(objective.lipschitz)
    history = [F_x] if config.record_history else None
    residual = math.inf
    rel = math.inf
    it = 0

    while it < config.max_iter:
        it += 1
        g = grad(y)
        f_y = f(y)
        while True:
            z = prox_l1(y - step * g, step * w)
            d = z - y
            f_z = f(z)
            bound = f_y + float(g @ d) + float(d @ d) / (2.0 * step)
            if f_z <= bound + 1e-14 * max(1.0, abs(f_y)) or step < 1e-30:
                break
            step *= 0.5
        F_z = f_z + w * float(np.abs(z).sum())

        # a plain step from x (y is x) cannot increase F beyond rounding
        if config.restart and F_z > F_x and y is not x:
            y = x
            t = 1.0
            continue

        step *= _EXPAND
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = z + ((t - 1.0) / t_next) * (z - x)
        t = t_next
        rel = abs(F_x - F_z) / max(1.0, abs(F_z))
        x, F_x = z, F_z
        if history is not None:
            history.append(F_x)
        if rel <= tol:
            residual = subgradient_residual(grad(x), x, w)
            if residual <= tol:
                return SolverResult(x, it, F_x, True, residual, rel, history)

    residual = subgradient_residual(grad(x), x, w)
    return SolverResult(x, it, F_x, False, residual, rel, history)
