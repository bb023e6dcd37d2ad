"""Replicated simulation study: cohort -> screen -> design -> (private) tuning -> recovery."""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

from .errors import DpermError, SchemaError
from .gwas import (
    CohortConfig,
    RecoveryFlags,
    build_design,
    evaluate_run,
    generate_cohort,
    screen,
    threshold_model,
)
from .mechanism import min_strong_convexity
from .noise import NoiseFamily
from .seeding import derive_seed
from .solver import SolverConfig
from .tuning import (
    DEFAULT_MULTIPLIERS,
    CandidateSet,
    select_nonprivate,
    select_private,
    split_train_validation,
)

SCREENING_MODES = ("chi2", "chi2_with_causal")

RATE_COLUMNS = (
    "epsilon", "alpha", "convex_min", "interaction_rate", "mains_half_rate",
    "all_rate", "specificity_rate", "R",
)
REPLICATE_COLUMNS = (
    "epsilon", "alpha", "convex_min", "replicate", "seed", "screened", "selected_lambda",
    "interaction_found", "n_mains_found", "both_mains_found", "all_found", "no_extras", "error",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One grid of (epsilon, alpha) cells evaluated over ``replicates`` cohorts.

    ``screening="chi2"`` keeps the top ``top_m`` SNPs by chi-square.
    ``"chi2_with_causal"`` additionally swaps the causative SNPs into the
    screened set when the statistic missed them (an oracle-assisted screen for
    studying the regression step alone).
    """

    cohort: CohortConfig = field(default_factory=CohortConfig)
    epsilons: Tuple[float, ...] = (0.1, 1.0, 10.0)
    alphas: Tuple[float, ...] = (0.1, 0.5, 0.9)
    private: bool = True
    replicates: int = 100
    seed: int = 0
    top_m: int = 5
    threshold_ratio: float = 0.01
    grid_multipliers: Tuple[float, ...] = DEFAULT_MULTIPLIERS
    delta: float = 0.05
    noise: str = "B1"
    train_fraction: float = 0.8
    epsilon_select: Optional[float] = None
    screening: str = "chi2"
    solver_tol: float = 1e-9
    solver_max_iter: int = 50_000

    def __post_init__(self):
        if not self.epsilons or any(not (e > 0 and math.isfinite(e)) for e in self.epsilons):
            raise SchemaError("epsilons must be a non-empty list of positive numbers")
        if not self.alphas or any(not 0.0 <= a < 1.0 for a in self.alphas):
            raise SchemaError("alphas must be a non-empty list of values in [0, 1)")
        if isinstance(self.replicates, bool) or int(self.replicates) != self.replicates or self.replicates < 1:
            raise SchemaError("replicates must be a positive integer")
        if self.top_m < 2 or self.top_m > self.cohort.p_snps:
            raise SchemaError("top_m must be between 2 and p_snps")
        if self.screening not in SCREENING_MODES:
            raise SchemaError(f"screening must be one of {SCREENING_MODES}")
        if self.epsilon_select is not None and not self.epsilon_select > 0:
            raise SchemaError("epsilon_select must be positive")
        NoiseFamily.parse(self.noise)
        for name in ("epsilons", "alphas", "grid_multipliers"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise SchemaError("experiment config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise SchemaError(f"unknown experiment field(s): {sorted(unknown)}")
        kwargs = dict(data)
        if "cohort" in kwargs:
            if not isinstance(kwargs["cohort"], dict):
                raise SchemaError("'cohort' must be an object")
            kwargs["cohort"] = CohortConfig.from_dict(kwargs["cohort"])
        for name in ("epsilons", "alphas", "grid_multipliers"):
            if name in kwargs and not isinstance(kwargs[name], list):
                raise SchemaError(f"'{name}' must be a list")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise SchemaError(str(exc)) from None

    def to_dict(self):
        d = asdict(self)
        d["cohort"] = self.cohort.to_dict()
        for name in ("epsilons", "alphas", "grid_multipliers"):
            d[name] = list(d[name])
        return d

    def n_train(self):
        n_train = int(round(self.train_fraction * self.cohort.n))
        return n_train

    def convex_min(self, epsilon):
        # kappa = 1 after normalisation, so the Hessian bound c is 1
        return min_strong_convexity(1.0, self.n_train(), epsilon)

    def cells(self):
        return [(e, a) for e in self.epsilons for a in self.alphas]


@dataclass(frozen=True)
class ReplicateRecord:
    epsilon: float
    alpha: float
    convex_min: float
    replicate: int
    seed: int
    screened: Tuple[int, ...]
    selected_lambda: float
    flags: RecoveryFlags
    error: str = ""

    def row(self):
        f = self.flags
        return {
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "convex_min": self.convex_min,
            "replicate": self.replicate,
            "seed": self.seed,
            "screened": " ".join(str(j) for j in self.screened),
            "selected_lambda": self.selected_lambda,
            "interaction_found": int(f.interaction_found),
            "n_mains_found": f.n_mains_found,
            "both_mains_found": int(f.both_mains_found),
            "all_found": int(f.all_found),
            "no_extras": int(f.no_extras),
            "error": self.error,
        }


@dataclass(frozen=True)
class CellSummary:
    epsilon: float
    alpha: float
    convex_min: float
    interaction_rate: float
    mains_half_rate: float
    all_rate: float
    specificity_rate: float
    R: int

    def row(self):
        return asdict(self)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    cells: List[CellSummary]
    replicates: List[ReplicateRecord]

    def cell(self, epsilon, alpha):
        for c in self.cells:
            if c.epsilon == epsilon and c.alpha == alpha:
                return c
        raise KeyError((epsilon, alpha))

    def records(self, epsilon, alpha):
        return [r for r in self.replicates if r.epsilon == epsilon and r.alpha == alpha]


def screened_indices(cohort, top_m, mode):
    picked = screen(cohort, top_m)
    if mode == "chi2_with_causal":
        causal = list(cohort.causative)
        missing = [c for c in causal if c not in picked]
        if missing:
            keep = [j for j in picked if j in causal]
            others = [j for j in picked if j not in causal]
            others = others[: top_m - len(causal)]
            picked = sorted(keep + missing, key=causal.index) + others
    return picked


def run_replicate(config, r):
    """All grid cells for replicate ``r``; the cohort and split are shared across cells."""
    cohort_seed = derive_seed(config.seed, "cohort", r)
    records = []
    try:
        cohort = generate_cohort(config.cohort, cohort_seed)
        picked = screened_indices(cohort, config.top_m, config.screening)
        design = build_design(cohort, picked)
        train, valid = split_train_validation(
            design, config.train_fraction, derive_seed(config.seed, "split", r)
        )
    except DpermError as exc:
        for eps, alpha in config.cells():
            records.append(ReplicateRecord(eps, alpha, config.convex_min(eps), r, cohort_seed,
                                           (), math.nan, RecoveryFlags.failed(), repr(exc)))
        return records

    solver = SolverConfig(tol=config.solver_tol, max_iter=config.solver_max_iter)
    for eps, alpha in config.cells():
        cmin = config.convex_min(eps)
        fit_seed = derive_seed(config.seed, "fit", eps, alpha, r)
        try:
            cands = CandidateSet.from_multipliers(cmin, alpha, config.grid_multipliers)
            if config.private:
                res = select_private(
                    cands, train, valid, eps, config.epsilon_select,
                    family=config.noise, delta=config.delta, seed=fit_seed,
                    solver_config=solver,
                )
            else:
                res = select_nonprivate(cands, train, valid, solver)
            included = threshold_model(res.theta, design.terms, config.threshold_ratio)
            flags = evaluate_run(included, cohort.causative)
            records.append(ReplicateRecord(eps, alpha, cmin, r, fit_seed, tuple(picked),
                                           res.selected.lam, flags))
        except DpermError as exc:
            records.append(ReplicateRecord(eps, alpha, cmin, r, fit_seed, tuple(picked),
                                           math.nan, RecoveryFlags.failed(), repr(exc)))
    return records


def summarize(config, records):
    cells = []
    for eps, alpha in config.cells():
        rows = sorted((x for x in records if x.epsilon == eps and x.alpha == alpha),
                      key=lambda x: x.replicate)
        R = len(rows)
        flags = [x.flags for x in rows]
        cells.append(CellSummary(
            epsilon=eps,
            alpha=alpha,
            convex_min=config.convex_min(eps),
            interaction_rate=sum(f.interaction_found for f in flags) / R,
            mains_half_rate=sum(f.n_mains_found for f in flags) / (2 * R),
            all_rate=sum(f.all_found for f in flags) / R,
            specificity_rate=sum(f.no_extras for f in flags) / R,
            R=R,
        ))
    return cells


def worker_count():
    cap = os.environ.get("DPERM_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise SchemaError("DPERM_THREADS must be an integer") from None
    return n


def _run_one(args):
    config, r = args
    return run_replicate(config, r)


def run_experiment(config, workers=None):
    """Run every replicate and aggregate per-cell rates.

    Results are keyed by replicate index, so the report does not depend on
    worker count or completion order.
    """
    workers = worker_count() if workers is None else workers
    jobs = [(config, r) for r in range(config.replicates)]
    if workers <= 1 or config.replicates == 1:
        chunks = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_one, jobs))
    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=lambda x: (config.epsilons.index(x.epsilon),
                                config.alphas.index(x.alpha), x.replicate))
    return ExperimentReport(config, summarize(config, records), records)
