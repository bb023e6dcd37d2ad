"""Objective-perturbation release of elastic-net logistic regression coefficients."""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    ConvergenceError,
    EpsilonError,
    NoiseScaleError,
    SchemaError,
    StrongConvexityError,
)
from .noise import NoiseFamily, sample_noise
from .objective import ElasticNetSpec, build_objective, loss_constants
from .seeding import derive_seed
from .solver import SolverConfig, SolverResult, minimize

# Relative tolerance when comparing lam*(1-alpha) with the required curvature,
# so a lambda computed as convex_min / (1 - alpha) is not rejected by rounding.
_BOUND_RTOL = 1e-12


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise EpsilonError(f"epsilon must be a positive finite number, got {self.epsilon!r}")


def min_strong_convexity(c, n, epsilon):
    """Smallest admissible regulariser curvature ``c / (n (exp(eps/4) - 1))``."""
    if not c > 0:
        raise SchemaError(f"c must be positive, got {c!r}")
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise SchemaError(f"n must be a positive integer, got {n!r}")
    PrivacyBudget(epsilon)
    try:
        return c / (n * math.expm1(epsilon / 4.0))
    except OverflowError:
        return 0.0


class CheckedParameters(NamedTuple):
    kappa: float
    gamma: float
    c: float
    phi: float
    c_star: float
    augment: float
    n: int


def validate(dataset, enet, epsilon, phi=None, allow_augment=True):
    """Check the mechanism's requirements and work out the curvature top-up.

    ``phi`` defaults to ``2 * kappa``. When ``lam * (1 - alpha)`` is below the
    required curvature ``c_star`` the shortfall is covered by the augmentation
    term, or :class:`StrongConvexityError` is raised if ``allow_augment`` is off.
    """
    PrivacyBudget(epsilon)
    kappa, gamma, c = loss_constants(dataset)
    if phi is None:
        phi = 2.0 * kappa
    if not phi >= 2.0 * kappa:
        raise NoiseScaleError(f"phi={phi} is below 2*kappa={2.0 * kappa}")
    c_star = min_strong_convexity(c, dataset.n, epsilon)
    have = enet.strong_convexity
    if have >= c_star * (1.0 - _BOUND_RTOL):
        augment = 0.0
    elif allow_augment:
        augment = (c_star - have) / 2.0
    else:
        raise StrongConvexityError(
            f"lam*(1-alpha)={have:.6g} is below the required {c_star:.6g} "
            f"(n={dataset.n}, epsilon={epsilon})"
        )
    return CheckedParameters(kappa, gamma, c, float(phi), c_star, augment, dataset.n)


@dataclass(eq=False)
class PrivateFit:
    """A released coefficient vector with everything needed to regenerate it."""

    theta: np.ndarray
    epsilon: float
    enet: ElasticNetSpec
    family: NoiseFamily
    seed: int
    solver: SolverResult
    phi: float
    c_star: float
    augment: float
    allow_augment: bool = True
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    dataset_digest: Optional[str] = None
    noise_norm: float = float("nan")

    def reproduce(self, dataset):
        if self.dataset_digest is not None and dataset.digest() != self.dataset_digest:
            raise SchemaError("dataset does not match the one this fit was made from")
        return fit_private(
            dataset,
            self.enet,
            self.epsilon,
            family=self.family,
            seed=self.seed,
            solver_config=self.solver_config,
            allow_augment=self.allow_augment,
            phi=self.phi,
        )

    def provenance(self):
        return {
            "epsilon": self.epsilon,
            "lambda": self.enet.lam,
            "alpha": self.enet.alpha,
            "noise_family": self.family.value,
            "seed": self.seed,
            "phi": self.phi,
            "c_star": self.c_star,
            "augment": self.augment,
            "allow_augment": self.allow_augment,
            "solver_tol": self.solver_config.tol,
            "solver_max_iter": self.solver_config.max_iter,
            "solver": self.solver.as_dict(),
            "dataset_digest": self.dataset_digest,
        }


def _solve(objective, solver_config, what):
    result = minimize(objective, solver_config)
    if not result.converged:
        raise ConvergenceError(
            f"{what}: solver stopped after {result.iterations} iterations "
            f"(residual {result.residual:.3g})",
            result,
        )
    return result


def fit_private(
    dataset,
    enet,
    epsilon,
    family=NoiseFamily.B1,
    seed=0,
    solver_config=None,
    allow_augment=True,
    phi=None,
):
    """Release epsilon-DP coefficients: validate, draw ``b``, minimise the perturbed objective.

    An unconverged solve raises :class:`ConvergenceError` rather than
    returning a release.
    """
    solver_config = solver_config or SolverConfig()
    family = NoiseFamily.parse(family)
    params = validate(dataset, enet, epsilon, phi=phi, allow_augment=allow_augment)
    noise = sample_noise(family, dataset.s, int(seed))
    objective = build_objective(
        dataset, enet, epsilon, params.phi, noise=noise, c_star=params.c_star
    )
    result = _solve(objective, solver_config, "private fit")
    return PrivateFit(
        theta=result.theta,
        epsilon=float(epsilon),
        enet=enet,
        family=family,
        seed=int(seed),
        solver=result,
        phi=params.phi,
        c_star=params.c_star,
        augment=params.augment,
        allow_augment=allow_augment,
        solver_config=solver_config,
        dataset_digest=dataset.digest(),
        noise_norm=float(np.linalg.norm(noise.vector)),
    )


def fit_nonprivate(dataset, enet, solver_config=None, c_star=0.0, noise=None, epsilon=None, phi=None):
    """Solve the same objective without a noise draw (or with a supplied fixed ``noise``).

    ``c_star`` lets the caller keep the augmentation of a matching private fit.
    """
    kappa, _, _ = loss_constants(dataset)
    phi = 2.0 * kappa if phi is None else phi
    objective = build_objective(dataset, enet, epsilon, phi, noise=noise, c_star=c_star)
    return _solve(objective, solver_config, "non-private fit")


def excess_objective(dataset, enet, epsilon, family=NoiseFamily.B1, replicates=100, seed=0,
                     solver_config=None):
    """Sample ``J(theta_b) - J(theta*)`` over ``replicates`` noise draws.

    ``J`` is the noiseless objective (with the same augmentation as the
    private fits). Replicate ``r`` uses noise seed ``derive_seed(seed, "excess", r)``,
    so two families run with the same ``seed`` share a seed schedule.
    """
    if isinstance(replicates, bool) or int(replicates) != replicates or replicates < 1:
        raise SchemaError("replicates must be a positive integer")
    family = NoiseFamily.parse(family)
    params = validate(dataset, enet, epsilon)
    base = build_objective(dataset, enet, epsilon, params.phi, c_star=params.c_star)
    theta_star = _solve(base, solver_config, "noiseless fit").theta
    j_star = base.penalized_risk(theta_star)
    out = np.empty(int(replicates))
    for r in range(int(replicates)):
        noise = sample_noise(family, dataset.s, derive_seed(seed, "excess", r))
        obj = build_objective(dataset, enet, epsilon, params.phi, noise=noise, c_star=params.c_star)
        theta_b = _solve(obj, solver_config, "perturbed fit").theta
        out[r] = base.penalized_risk(theta_b) - j_star
    return out
