"""Histogram likelihood-ratio smoke test for a release mechanism.

Compares output samples on two neighbouring datasets bin by bin. Passing
does not prove differential privacy; failing points at a broken mechanism.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AuditResult:
    edges: np.ndarray
    counts_a: np.ndarray
    counts_b: np.ndarray
    ratios: np.ndarray
    limits: np.ndarray
    epsilon: float

    @property
    def passed(self):
        return bool(np.all(self.ratios <= self.limits))

    @property
    def worst(self):
        """Largest ratio / limit over bins; <= 1 means every bin passed."""
        return float(np.max(self.ratios / self.limits))


def histogram_ratio_audit(a, b, epsilon, bins=20, sigmas=3.0):
    """Check ``max(p_a/p_b, p_b/p_a) <= e^eps * (1 + sigmas * se)`` in every bin.

    Bin edges are quantiles of the pooled sample so every bin holds enough
    mass; ``se`` is the delta-method relative standard error of the ratio of
    two binomial proportions. A bin empty on exactly one side fails outright;
    bins empty on both sides (possible when atoms repeat an edge) are ignored.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pooled = np.concatenate([a, b])
    inner = np.quantile(pooled, np.linspace(0.0, 1.0, bins + 1)[1:-1])
    # atoms (e.g. exact zeros from the l1 penalty) can repeat a quantile
    edges = np.unique(np.concatenate([[-np.inf], inner, [np.inf]]))
    ca = np.histogram(a, edges)[0].astype(float)
    cb = np.histogram(b, edges)[0].astype(float)
    pa = ca / a.size
    pb = cb / b.size
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.maximum(pa / pb, pb / pa)
        rel_se = np.sqrt((1 - pa) / (a.size * pa) + (1 - pb) / (b.size * pb))
    ratios = np.where((ca == 0) != (cb == 0), np.inf, ratios)
    ratios = np.where((ca == 0) & (cb == 0), 0.0, ratios)
    limits = math.exp(epsilon) * (1.0 + sigmas * np.nan_to_num(rel_se, nan=0.0, posinf=0.0))
    return AuditResult(edges, ca, cb, ratios, limits, float(epsilon))
