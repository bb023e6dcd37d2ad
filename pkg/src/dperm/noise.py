"""Perturbation-noise samplers and their high-probability norm bounds.

Two families are supported:

* ``B1``: density proportional to ``exp(-||b||_1 / 2)``, i.e. independent
  Laplace(0, 2) coordinates. ``||b||_1`` is Gamma(s, scale=2).
* ``B2``: density proportional to ``exp(-||b||_2 / 2)``, sampled as a uniform
  direction times a chi-square(2s) radius. ``||b||_2`` is Gamma(s, scale=2).
"""

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SchemaError
from .seeding import make_rng

LAPLACE_SCALE = 2.0


class NoiseFamily(str, enum.Enum):
    B1 = "B1"
    B2 = "B2"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise SchemaError(f"unknown noise family {value!r}; expected b1 or b2") from None


@dataclass(frozen=True, eq=False)
class NoiseDraw:
    """A perturbation vector together with what produced it.

    ``seed`` is None when the caller supplied an already-running Generator,
    in which case the draw can only be reproduced by replaying that stream.
    """

    vector: np.ndarray
    family: NoiseFamily
    seed: Optional[int]

    @property
    def dim(self):
        return self.vector.shape[0]

    def same_as(self, other):
        return (
            self.family == other.family
            and self.seed == other.seed
            and np.array_equal(self.vector, other.vector)
        )

    def negated(self):
        return NoiseDraw(-self.vector, self.family, self.seed)


def _check_dim(s):
    if isinstance(s, bool) or int(s) != s or s < 1:
        raise SchemaError(f"noise dimension must be a positive integer, got {s!r}")
    return int(s)


def _seed_of(rng):
    return None if isinstance(rng, np.random.Generator) else int(rng)


def laplace_inverse_cdf(u_sign, u_mag, scale=LAPLACE_SCALE):
    """Map two uniforms on [0, 1) to Laplace(0, scale) variates.

    The magnitude uses the exponential inverse CDF ``-scale*log(1-u)``, which
    stays finite for every u in [0, 1); the sign comes from the second uniform.
    """
    magnitude = -scale * np.log1p(-u_mag)
    return np.where(u_sign < 0.5, -magnitude, magnitude)


def sample_batch(family, s, size, rng):
    """Draw ``size`` noise vectors at once, shape ``(size, s)``.

    The scalar samplers are this function with ``size=1``, so a seeded scalar
    draw equals the first row of a seeded batch draw.
    """
    family = NoiseFamily.parse(family)
    s = _check_dim(s)
    gen = make_rng(rng)
    if family is NoiseFamily.B1:
        u = gen.random((2, size, s))
        return laplace_inverse_cdf(u[0], u[1])
    w = gen.standard_normal((size, s))
    radius = gen.gamma(shape=s, scale=2.0, size=(size, 1))
    return w / np.linalg.norm(w, axis=1, keepdims=True) * radius


def sample_b1(s, rng):
    """Draw ``s`` i.i.d. Laplace(0, 2) coordinates.

    ``rng`` may be an integer seed or a ``numpy.random.Generator``.
    """
    return NoiseDraw(sample_batch(NoiseFamily.B1, s, 1, rng)[0], NoiseFamily.B1, _seed_of(rng))


def sample_b2(s, rng):
    """Draw from the density proportional to ``exp(-||x||_2 / 2)`` in ``R^s``.

    Built as ``W / ||W||_2 * Y`` with ``W`` standard normal and
    ``Y ~ chi-square(2s) = Gamma(s, scale=2)``.
    """
    return NoiseDraw(sample_batch(NoiseFamily.B2, s, 1, rng)[0], NoiseFamily.B2, _seed_of(rng))


def sample_noise(family, s, rng):
    family = NoiseFamily.parse(family)
    if family is NoiseFamily.B1:
        return sample_b1(s, rng)
    return sample_b2(s, rng)


def xi_bound(family, s, k, delta):
    """Radius ``xi`` with ``P(||b||_2 >= xi) <= delta / k`` for the family.

    B1 uses the l1 tail bound ``2 s log(s k / delta)`` (valid for the l2 norm
    since ``||b||_2 <= ||b||_1``). B2 uses the Laurent-Massart chi-square tail
    ``D + 2 sqrt(D x) + 2 x`` with ``x = log(k/delta)`` and ``D = 2s`` degrees of
    freedom, i.e. ``(sqrt(2s) + sqrt(x))^2 + x``. Plugging in ``D = s`` instead
    gives a radius the chi-square(2s) norm exceeds far too often.
    """
    family = NoiseFamily.parse(family)
    s = _check_dim(s)
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise SchemaError(f"k must be a positive integer, got {k!r}")
    if not 0.0 < delta < 1.0:
        raise SchemaError(f"delta must lie in (0, 1), got {delta!r}")
    if family is NoiseFamily.B1:
        ratio = s * k / delta
        if ratio <= 1.0:
            raise SchemaError("B1 bound needs s*k/delta > 1")
        return 2.0 * s * math.log(ratio)
    log_term = math.log(k / delta)
    dof = 2 * s
    return (math.sqrt(dof) + math.sqrt(log_term)) ** 2 + log_term
