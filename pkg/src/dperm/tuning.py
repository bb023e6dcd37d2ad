"""Private choice of the regularisation strength from a lambda grid.

Each candidate is fitted with the objective-perturbation mechanism on the
training split, scored on the validation split, and the winner is drawn by
the exponential mechanism with weights ``exp(eps_select * m * q_i / (2 beta2))``.
The training budget ``eps_train`` and selection budget ``eps_select`` are
reported separately, together with ``delta``; no composed total is claimed.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import SchemaError, StrongConvexityError
from .mechanism import PrivateFit, fit_nonprivate, fit_private, min_strong_convexity
from .noise import NoiseFamily, xi_bound
from .objective import ElasticNetSpec, loss_constants, mean_logistic_loss
from .seeding import derive_seed, make_rng
from .solver import SolverConfig

DEFAULT_MULTIPLIERS = (1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple
    alpha: float

    def __post_init__(self):
        cands = tuple(self.candidates)
        if not cands:
            raise SchemaError("candidate set is empty")
        for cand in cands:
            if cand.alpha != self.alpha:
                raise SchemaError("all candidates must share the same alpha")
        object.__setattr__(self, "candidates", cands)

    @classmethod
    def from_multipliers(cls, convex_min, alpha, multipliers=DEFAULT_MULTIPLIERS):
        """Grid ``lambda_min * m`` with ``lambda_min = convex_min / (1 - alpha)``."""
        if not multipliers:
            raise SchemaError("need at least one grid multiplier")
        if any(m < 1 for m in multipliers):
            raise SchemaError("grid multipliers must be >= 1")
        lam_min = convex_min / (1.0 - alpha)
        return cls(tuple(ElasticNetSpec(lam_min * m, alpha) for m in multipliers), alpha)

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    @property
    def c_min(self):
        return min(c.strong_convexity for c in self.candidates)

    def check(self, convex_min):
        for i, cand in enumerate(self.candidates):
            if cand.strong_convexity < convex_min * (1.0 - 1e-12):
                raise StrongConvexityError(
                    f"candidate {i} (lambda={cand.lam:.6g}) is below "
                    f"convex_min/(1-alpha)={convex_min / (1.0 - self.alpha):.6g}"
                )


@dataclass(frozen=True)
class StabilityConstants:
    beta1: float
    beta2: float
    xi: float
    delta: float


def stability_constants(gamma, kappa, c_star, c_min, h_star, phi, epsilon, n, family, s, k, delta):
    """Training/validation stability constants of the validation score.

    ``beta1 = 2 gamma kappa / max(c*, c_min)`` and
    ``beta2 = min(h*, kappa / max(c*, c_min) * (gamma + phi xi / (eps n)))``
    with ``xi`` from :func:`xi_bound`. Pass ``h_star=math.inf`` for an
    unbounded validation loss.
    """
    for name, val in (("gamma", gamma), ("kappa", kappa), ("phi", phi), ("epsilon", epsilon)):
        if not val > 0:
            raise SchemaError(f"{name} must be positive, got {val!r}")
    if c_star < 0 or c_min < 0 or max(c_star, c_min) <= 0:
        raise SchemaError("need max(c_star, c_min) > 0")
    if h_star < 0:
        raise SchemaError("h_star must be nonnegative")
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise SchemaError("n must be a positive integer")
    xi = xi_bound(family, s, k, delta)
    curv = max(c_star, c_min)
    beta1 = 2.0 * gamma * kappa / curv
    beta2 = min(h_star, kappa / curv * (gamma + phi * xi / (epsilon * n)))
    return StabilityConstants(beta1, beta2, xi, delta)


def validation_score(theta, validation):
    """Negative mean logistic loss on the validation records; higher is better."""
    if validation.n == 0:
        raise SchemaError("validation set is empty")
    return -mean_logistic_loss(np.asarray(theta, dtype=float), validation.X, validation.y)


def selection_probabilities(scores, scale):
    """Exponential-mechanism weights ``exp(scale * q_i)``, normalised."""
    q = np.asarray(scores, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise SchemaError("scores must be a non-empty vector")
    if not scale >= 0 or math.isinf(scale):
        raise SchemaError(f"selection scale must be finite and nonnegative, got {scale!r}")
    z = scale * (q - q.max())
    w = np.exp(z)
    return w / w.sum()


def draw_index(probabilities, rng):
    gen = make_rng(rng)
    cdf = np.cumsum(probabilities)
    u = gen.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))


def split_train_validation(dataset, train_fraction=0.8, seed=0):
    """Seeded shuffle, then the first ``round(train_fraction * n)`` rows train."""
    if not 0.0 < train_fraction < 1.0:
        raise SchemaError("train_fraction must lie in (0, 1)")
    n = dataset.n
    n_train = int(round(train_fraction * n))
    if n_train < 1 or n_train >= n:
        raise SchemaError(f"cannot split {n} records with train fraction {train_fraction}")
    perm = np.random.default_rng(int(seed)).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


@dataclass(eq=False)
class TuningResult:
    selected: ElasticNetSpec
    index: int
    theta: np.ndarray
    fit: Optional[PrivateFit]
    scores: np.ndarray
    selection_probabilities: np.ndarray
    stability: Optional[StabilityConstants] = None
    epsilon_train: Optional[float] = None
    epsilon_select: Optional[float] = None
    selection_scale: Optional[float] = None
    convex_min: Optional[float] = None
    thetas: List[np.ndarray] = field(default_factory=list, repr=False)


def select_private(candidates, train, validation, epsilon_train, epsilon_select=None,
                   family=NoiseFamily.B1, delta=0.05, seed=0, solver_config=None):
    """Fit every candidate privately, then pick one with the exponential mechanism.

    Candidate ``i`` draws its noise from ``derive_seed(seed, "candidate", i)`` and
    the selection draw uses ``derive_seed(seed, "select")``. Any candidate that
    misses the curvature requirement aborts the call before anything is fitted.
    """
    if epsilon_select is None:
        epsilon_select = epsilon_train
    if not epsilon_select > 0:
        raise SchemaError("epsilon_select must be positive")
    family = NoiseFamily.parse(family)
    solver_config = solver_config or SolverConfig()
    kappa, gamma, c = loss_constants(train)
    convex_min = min_strong_convexity(c, train.n, epsilon_train)
    candidates.check(convex_min)
    if validation.s != train.s:
        raise SchemaError("train and validation feature dimensions differ")

    phi = 2.0 * kappa
    stab = stability_constants(
        gamma, kappa, convex_min, candidates.c_min, math.inf, phi,
        epsilon_train, train.n, family, train.s, len(candidates), delta,
    )
    fits = [
        fit_private(train, cand, epsilon_train, family=family,
                    seed=derive_seed(seed, "candidate", i),
                    solver_config=solver_config, allow_augment=False, phi=phi)
        for i, cand in enumerate(candidates)
    ]
    scores = np.array([validation_score(f.theta, validation) for f in fits])
    scale = epsilon_select * validation.n / (2.0 * stab.beta2)
    probs = selection_probabilities(scores, scale)
    idx = draw_index(probs, derive_seed(seed, "select"))
    return TuningResult(
        selected=candidates.candidates[idx],
        index=idx,
        theta=fits[idx].theta,
        fit=fits[idx],
        scores=scores,
        selection_probabilities=probs,
        stability=stab,
        epsilon_train=float(epsilon_train),
        epsilon_select=float(epsilon_select),
        selection_scale=scale,
        convex_min=convex_min,
        thetas=[f.theta for f in fits],
    )


def select_nonprivate(candidates, train, validation, solver_config=None):
    """Baseline: noiseless fits and argmax selection (ties go to the smaller lambda)."""
    thetas = [fit_nonprivate(train, cand, solver_config).theta for cand in candidates]
    scores = np.array([validation_score(t, validation) for t in thetas])
    idx = int(np.argmax(scores))
    probs = np.zeros(len(thetas))
    probs[idx] = 1.0
    return TuningResult(
        selected=candidates.candidates[idx],
        index=idx,
        theta=thetas[idx],
        fit=None,
        scores=scores,
        selection_probabilities=probs,
        thetas=thetas,
    )
