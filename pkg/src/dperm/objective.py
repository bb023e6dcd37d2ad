"""Logistic loss, elastic-net penalty and the perturbed training objective."""

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import expit

from .errors import (
    EpsilonError,
    NoiseScaleError,
    NormalizationError,
    SchemaError,
)
from .noise import NoiseDraw

# Relative slack when certifying row norms; guards against rounding in x / scale.
_NORM_SLACK = 1e-12


class LabeledRecord(NamedTuple):
    x: np.ndarray
    y: int


class Normalized(NamedTuple):
    features: np.ndarray
    kappa: float
    scale: float


def _as_matrix(raw):
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise SchemaError("feature matrix must be a non-empty 2-D array")
    if not np.all(np.isfinite(arr)):
        raise SchemaError("feature matrix has non-finite entries")
    return arr


def normalize_rows(raw, bound=None):
    """Scale all rows by one common factor so every row has l1 norm <= 1.

    The factor is ``max(1, B)`` where ``B`` is the largest row l1 norm in the
    data, or the caller's a-priori ``bound`` when given. Passing a bound that
    does not depend on the data keeps the certificate itself data-independent.
    Coefficients fitted on the scaled features map back via ``theta / scale``.
    """
    arr = _as_matrix(raw)
    row_l1 = np.abs(arr).sum(axis=1)
    observed = float(row_l1.max())
    if bound is None:
        scale = max(1.0, observed)
    else:
        if observed > bound * (1.0 + _NORM_SLACK):
            raise SchemaError(f"row l1 norm {observed} exceeds declared bound {bound}")
        scale = max(1.0, float(bound))
    return Normalized(arr / scale, 1.0, scale)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature rows with +/-1 labels.

    ``kappa`` is the certified bound on both ``||x||_1`` and ``||x||_2``; it is
    None for a dataset that has not been normalised, and such a dataset cannot
    be used by the private mechanism. ``scale`` is the divisor applied by
    :func:`normalize_rows`. ``terms`` optionally names each column.
    """

    X: np.ndarray
    y: np.ndarray
    kappa: Optional[float] = None
    scale: float = 1.0
    terms: Optional[tuple] = None

    def __post_init__(self):
        X = _as_matrix(self.X)
        y = np.asarray(self.y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise SchemaError("labels must be a vector with one entry per row")
        if not np.all((y == 1) | (y == -1)):
            raise SchemaError("labels must be exactly -1 or +1")
        y = y.astype(float)
        if self.kappa is not None:
            if self.kappa <= 0:
                raise SchemaError("kappa must be positive")
            if np.abs(X).sum(axis=1).max() > self.kappa * (1.0 + _NORM_SLACK):
                raise SchemaError("a row violates the certified l1 bound kappa")
        if self.terms is not None and len(self.terms) != X.shape[1]:
            raise SchemaError("term metadata must name every column")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_raw(cls, raw, y, bound=None, terms=None):
        feats, kappa, scale = normalize_rows(raw, bound=bound)
        return cls(feats, y, kappa=kappa, scale=scale, terms=terms)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def s(self):
        return self.X.shape[1]

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return LabeledRecord(self.X[i], int(self.y[i]))

    def records(self):
        return [self[i] for i in range(self.n)]

    def subset(self, idx):
        return LabeledDataset(
            self.X[idx], self.y[idx], kappa=self.kappa, scale=self.scale, terms=self.terms
        )

    def replace_record(self, i, x, y):
        """Neighbouring dataset: record ``i`` swapped for ``(x, y)``."""
        X = np.array(self.X)
        Y = np.array(self.y)
        X[i] = x
        Y[i] = y
        return LabeledDataset(X, Y, kappa=self.kappa, scale=self.scale, terms=self.terms)

    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        h.update(repr((self.kappa, self.scale)).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class ElasticNetSpec:
    """Penalty ``lam*(1-alpha)/2 ||theta||_2^2 + lam*alpha ||theta||_1``."""

    lam: float
    alpha: float

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise SchemaError(f"lambda must be a finite nonnegative number, got {self.lam!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise SchemaError(f"alpha must lie in [0, 1), got {self.alpha!r}")

    @property
    def strong_convexity(self):
        return self.lam * (1.0 - self.alpha)

    @property
    def l1_weight(self):
        return self.lam * self.alpha


def _check_dims(theta, x):
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if theta.shape != x.shape:
        raise SchemaError(f"dimension mismatch: theta {theta.shape} vs x {x.shape}")
    return theta, x


def logistic_loss(theta, record):
    """``log(1 + exp(-y theta.x))``, evaluated without overflow."""
    theta, x = _check_dims(theta, record.x)
    margin = record.y * float(theta @ x)
    return float(np.logaddexp(0.0, -margin))


def logistic_grad(theta, record):
    theta, x = _check_dims(theta, record.x)
    margin = record.y * float(theta @ x)
    return -expit(-margin) * record.y * x


def mean_logistic_loss(theta, X, y):
    return float(np.mean(np.logaddexp(0.0, -y * (X @ theta))))


def mean_logistic_grad(theta, X, y):
    weights = -expit(-y * (X @ theta)) * y
    return X.T @ weights / X.shape[0]


def enet_penalty(theta, spec):
    theta = np.asarray(theta, dtype=float)
    return 0.5 * spec.strong_convexity * float(theta @ theta) + spec.l1_weight * float(
        np.abs(theta).sum()
    )


def loss_constants(dataset):
    """Return ``(kappa, gamma, c)``: gradient bound, Lipschitz constant, Hessian bound.

    Uses ``c = kappa**2`` (not the tighter ``kappa**2 / 4``).
    """
    if dataset.kappa is None:
        raise NormalizationError("dataset has no certified kappa; normalise it first")
    kappa = float(dataset.kappa)
    return kappa, kappa, kappa * kappa


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """Composite objective: smooth part plus ``l1_weight * ||theta||_1``.

    The smooth part is the mean logistic loss, the ridge share of the elastic
    net, the strong-convexity top-up ``augment * ||theta||^2`` and, when a noise
    draw is present, the linear term ``noise_scale * b.theta``.
    """

    dataset: LabeledDataset
    enet: ElasticNetSpec
    augment: float = 0.0
    noise: Optional[NoiseDraw] = None
    noise_scale: float = 0.0
    _ridge: float = field(init=False, repr=False)
    _Z: np.ndarray = field(init=False, repr=False)
    _lin: Optional[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        if self.augment < 0:
            raise SchemaError("augment must be nonnegative")
        if self.noise is not None and self.noise.dim != self.dataset.s:
            raise SchemaError("noise dimension does not match the feature dimension")
        object.__setattr__(self, "_ridge", self.enet.strong_convexity + 2.0 * self.augment)
        # rows pre-multiplied by their labels: margins are Z @ theta
        object.__setattr__(self, "_Z", self.dataset.X * self.dataset.y[:, None])
        lin = None if self.noise is None else self.noise_scale * self.noise.vector
        object.__setattr__(self, "_lin", lin)

    @property
    def dim(self):
        return self.dataset.s

    @property
    def strong_convexity(self):
        return self._ridge

    @property
    def l1_weight(self):
        return self.enet.l1_weight

    @property
    def lipschitz(self):
        """Upper bound on the Lipschitz constant of the smooth gradient."""
        kappa = self.dataset.kappa
        if kappa is None:
            kappa = float(np.linalg.norm(self.dataset.X, axis=1).max())
        return kappa * kappa / 4.0 + self._ridge

    def smooth_value(self, theta):
        Z = self._Z
        val = np.logaddexp(0.0, -(Z @ theta)).sum() / Z.shape[0]
        val += 0.5 * self._ridge * (theta @ theta)
        if self._lin is not None:
            val += self._lin @ theta
        return float(val)

    def smooth_grad(self, theta):
        Z = self._Z
        g = Z.T @ expit(-(Z @ theta)) * (-1.0 / Z.shape[0]) + self._ridge * theta
        if self._lin is not None:
            g += self._lin
        return g

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.smooth_value(theta) + self.l1_weight * float(np.abs(theta).sum())

    def penalized_risk(self, theta):
        """Objective without the noise term (loss plus augmented penalty)."""
        theta = np.asarray(theta, dtype=float)
        d = self.dataset
        return (
            mean_logistic_loss(theta, d.X, d.y)
            + 0.5 * self._ridge * float(theta @ theta)
            + self.l1_weight * float(np.abs(theta).sum())
        )

    def without_noise(self):
        return ObjectiveSpec(self.dataset, self.enet, self.augment)


def augment_coefficient(enet, c_star):
    return max(0.0, c_star - enet.strong_convexity) / 2.0


def build_objective(dataset, spec, epsilon, phi, noise=None, c_star=0.0):
    """Assemble the training objective.

    ``phi`` must be at least ``2 * kappa``. The noise enters as
    ``phi / (epsilon * n) * b.theta``. ``epsilon`` may be None only for a
    noiseless objective.
    """
    kappa, _, _ = loss_constants(dataset)
    if noise is not None or epsilon is not None:
        if epsilon is None or not epsilon > 0:
            raise EpsilonError(f"epsilon must be positive, got {epsilon!r}")
    if not phi >= 2.0 * kappa:
        raise NoiseScaleError(f"phi={phi} is below 2*kappa={2.0 * kappa}")
    if c_star < 0:
        raise SchemaError("c_star must be nonnegative")
    augment = augment_coefficient(spec, c_star)
    scale = 0.0 if noise is None else phi / (epsilon * dataset.n)
    return ObjectiveSpec(dataset, spec, augment=augment, noise=noise, noise_scale=scale)
