"""Synthetic case-control cohorts, chi-square screening and model recovery scoring."""

import csv
import itertools
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .errors import SchemaError
from .objective import LabeledDataset
from .seeding import make_rng


@dataclass(frozen=True)
class CohortConfig:
    """Multiplicative-effects disease model over two causative SNPs X, Y.

    ``P(case | X, Y) / P(control | X, Y) = odds_baseline * odds_x**X * odds_y**Y
    * odds_interaction**(X*Y)``. Background SNP frequencies are drawn
    uniformly from ``maf_background`` and are independent of each other.
    """

    n_cases: int = 400
    n_controls: int = 400
    p_snps: int = 10_000
    maf_causative: float = 0.25
    maf_background: Tuple[float, float] = (0.05, 0.5)
    odds_baseline: float = 0.64
    odds_x: float = 0.91
    odds_y: float = 0.91
    odds_interaction: float = 2.73
    max_draws: int = 10_000_000

    def __post_init__(self):
        for name in ("n_cases", "n_controls", "p_snps", "max_draws"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
                raise SchemaError(f"{name} must be a positive integer, got {val!r}")
        if self.p_snps < 2:
            raise SchemaError("p_snps must be at least 2 (two causative SNPs)")
        if not 0.0 < self.maf_causative <= 0.5:
            raise SchemaError("maf_causative must lie in (0, 0.5]")
        lo, hi = self.maf_background
        if not 0.0 < lo <= hi <= 0.5:
            raise SchemaError("maf_background must satisfy 0 < low <= high <= 0.5")
        object.__setattr__(self, "maf_background", (float(lo), float(hi)))
        for name in ("odds_baseline", "odds_x", "odds_y", "odds_interaction"):
            if not getattr(self, name) > 0:
                raise SchemaError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise SchemaError(f"unknown cohort field(s): {sorted(unknown)}")
        kwargs = dict(data)
        if "maf_background" in kwargs:
            mb = kwargs["maf_background"]
            if not isinstance(mb, (list, tuple)) or len(mb) != 2:
                raise SchemaError("maf_background must be a [low, high] pair")
            kwargs["maf_background"] = tuple(mb)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise SchemaError(str(exc)) from None

    def to_dict(self):
        d = asdict(self)
        d["maf_background"] = list(self.maf_background)
        return d

    @property
    def n(self):
        return self.n_cases + self.n_controls


def case_probability(config, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    odds = (
        config.odds_baseline
        * config.odds_x ** x
        * config.odds_y ** y
        * config.odds_interaction ** (x * y)
    )
    return odds / (1.0 + odds)


def sample_causal_pairs(config, size, rng):
    """Unconditioned draws of ``(X, Y, label)`` from the population model."""
    gen = make_rng(rng)
    x = gen.binomial(2, config.maf_causative, size)
    y = gen.binomial(2, config.maf_causative, size)
    case = gen.random(size) < case_probability(config, x, y)
    return x, y, np.where(case, 1, -1)


@dataclass(eq=False)
class Cohort:
    genotypes: np.ndarray
    phenotype: np.ndarray
    causative: Optional[Tuple[int, int]] = None
    draws: int = 0

    def __post_init__(self):
        g = np.asarray(self.genotypes)
        if g.ndim != 2 or g.shape[0] != len(self.phenotype):
            raise SchemaError("genotype matrix must have one row per individual")
        if not np.all((g == 0) | (g == 1) | (g == 2)):
            raise SchemaError("genotypes must be 0, 1 or 2")
        ph = np.asarray(self.phenotype)
        if not np.all((ph == 1) | (ph == -1)):
            raise SchemaError("phenotype must be -1 or +1")
        self.genotypes = g.astype(np.int8)
        self.phenotype = ph.astype(np.int8)
        if self.causative is not None:
            a, b = (int(i) for i in self.causative)
            if a == b or not (0 <= a < g.shape[1] and 0 <= b < g.shape[1]):
                raise SchemaError("causative SNP indices must be distinct and in range")
            self.causative = (a, b)

    @property
    def n(self):
        return self.genotypes.shape[0]

    @property
    def p(self):
        return self.genotypes.shape[1]


def generate_cohort(config, seed):
    """Draw a cohort with exactly ``n_cases`` cases and ``n_controls`` controls.

    Individuals are drawn from the population model in batches; each is kept
    only while its class quota is open. Background genotypes are independent
    of disease status, so they are drawn after the quotas are filled.
    """
    rng = make_rng(seed)
    p = config.p_snps
    causal = tuple(int(i) for i in rng.choice(p, size=2, replace=False))
    mafs = rng.uniform(*config.maf_background, size=p)
    mafs[list(causal)] = config.maf_causative

    need = {1: config.n_cases, -1: config.n_controls}
    xs, ys, labels = [], [], []
    draws = 0
    batch = config.n
    while need[1] > 0 or need[-1] > 0:
        if draws >= config.max_draws:
            raise SchemaError(
                f"could not fill case/control quotas within {config.max_draws} draws"
            )
        x, y, lab = sample_causal_pairs(config, batch, rng)
        draws += batch
        for xi, yi, li in zip(x, y, lab):
            if need[li] > 0:
                need[li] -= 1
                xs.append(xi)
                ys.append(yi)
                labels.append(li)
                if need[1] == 0 and need[-1] == 0:
                    break

    n = len(labels)
    geno = rng.binomial(2, mafs, size=(n, p)).astype(np.int8)
    geno[:, causal[0]] = xs
    geno[:, causal[1]] = ys
    return Cohort(geno, np.array(labels, dtype=np.int8), causal, draws)


def chi2_all(genotypes, phenotype):
    """Pearson statistic of the 2x3 (status x genotype) table for every column.

    Genotype categories absent from a column are left out of its sum.
    """
    g = np.asarray(genotypes)
    if g.ndim == 1:
        g = g[:, None]
    ph = np.asarray(phenotype)
    if g.shape[0] != ph.shape[0]:
        raise SchemaError("genotype column and phenotype differ in length")
    case = ph == 1
    n_case = int(case.sum())
    n = ph.shape[0]
    if n_case == 0 or n_case == n:
        raise SchemaError("phenotype must contain both cases and controls")
    frac = np.array([n_case / n, (n - n_case) / n])
    stat = np.zeros(g.shape[1])
    for level in (0, 1, 2):
        hit = g == level
        obs_case = hit[case].sum(axis=0).astype(float)
        total = hit.sum(axis=0).astype(float)
        obs = np.stack([obs_case, total - obs_case])
        exp = frac[:, None] * total[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            contrib = np.where(exp > 0, (obs - exp) ** 2 / exp, 0.0)
        stat += contrib.sum(axis=0)
    return stat


def chi2_stat(snp_column, phenotype):
    col = np.asarray(snp_column)
    if col.ndim != 1:
        raise SchemaError("expected a single SNP column")
    return float(chi2_all(col, phenotype)[0])


def screen(cohort, M):
    """Indices of the ``M`` highest chi-square SNPs, ties to the lower index."""
    if isinstance(M, bool) or int(M) != M or M < 1:
        raise SchemaError("M must be a positive integer")
    if M > cohort.p:
        raise SchemaError(f"M={M} exceeds the number of SNPs ({cohort.p})")
    stats = chi2_all(cohort.genotypes, cohort.phenotype)
    order = np.argsort(-stats, kind="stable")
    return [int(i) for i in order[: int(M)]]


class Term(NamedTuple):
    kind: str  # "intercept", "main" or "pair"
    snps: Tuple[int, ...]

    def label(self):
        if self.kind == "intercept":
            return "intercept"
        names = [f"SNP_{j + 1:04d}" for j in self.snps]
        return ":".join(names)


INTERCEPT = Term("intercept", ())


def design_terms(selected):
    sel = [int(j) for j in selected]
    terms = [INTERCEPT] + [Term("main", (j,)) for j in sel]
    terms += [Term("pair", tuple(sorted(pair))) for pair in itertools.combinations(sel, 2)]
    return tuple(terms)


def build_design(cohort, selected):
    """Intercept, mapped main effects ``g / 2`` and all pairwise products.

    Rows are scaled by the a-priori l1 bound ``1 + M + M(M-1)/2`` (each column
    lies in [0, 1]), so the certified ``kappa = 1`` does not depend on the data.
    """
    sel = [int(j) for j in selected]
    if len(set(sel)) != len(sel) or not sel:
        raise SchemaError("selected SNP indices must be non-empty and distinct")
    if min(sel) < 0 or max(sel) >= cohort.p:
        raise SchemaError("selected SNP index out of range")
    mains = cohort.genotypes[:, sel].astype(float) / 2.0
    cols = [np.ones(cohort.n), *mains.T]
    cols += [mains[:, a] * mains[:, b] for a, b in itertools.combinations(range(len(sel)), 2)]
    raw = np.column_stack(cols)
    bound = 1 + len(sel) + len(sel) * (len(sel) - 1) // 2
    return LabeledDataset.from_raw(raw, cohort.phenotype, bound=bound, terms=design_terms(sel))


def threshold_model(theta, terms, r=0.01):
    """Terms kept by the relative rule ``|theta_i| >= r * max_j |theta_j|``.

    The intercept takes part in neither the maximum nor the result.
    """
    if not 0.0 < r < 1.0:
        raise SchemaError("threshold ratio must lie in (0, 1)")
    theta = np.asarray(theta, dtype=float)
    if len(terms) != theta.shape[0]:
        raise SchemaError("one term per coefficient required")
    keep = [i for i, t in enumerate(terms) if t.kind != "intercept"]
    mags = np.abs(theta[keep])
    top = mags.max() if mags.size else 0.0
    if top == 0.0:
        return frozenset()
    return frozenset(terms[i] for i, m in zip(keep, mags) if m >= r * top)


@dataclass(frozen=True)
class RecoveryFlags:
    interaction_found: bool
    n_mains_found: int
    both_mains_found: bool
    all_found: bool
    no_extras: bool

    @classmethod
    def failed(cls):
        """Flags for a replicate whose pipeline errored: counts as recovering nothing."""
        return cls(False, 0, False, False, False)


def evaluate_run(included, causative):
    a, b = sorted(int(i) for i in causative)
    mains = {Term("main", (a,)), Term("main", (b,))}
    pair = Term("pair", (a, b))
    n_mains = len(mains & set(included))
    inter = pair in included
    return RecoveryFlags(
        interaction_found=inter,
        n_mains_found=n_mains,
        both_mains_found=n_mains == 2,
        all_found=inter and n_mains == 2,
        no_extras=set(included) <= mains | {pair},
    )


def snp_column_names(p):
    return [f"SNP_{j + 1:04d}" for j in range(p)]


def write_cohort_csv(cohort, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(snp_column_names(cohort.p) + ["phenotype"])
        for row, ph in zip(cohort.genotypes, cohort.phenotype):
            w.writerow([*(int(v) for v in row), int(ph)])


def read_cohort_csv(path, causative=None):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if not header or header[-1] != "phenotype":
            raise SchemaError(f"{path}: last header column must be 'phenotype'")
        p = len(header) - 1
        if p < 1 or header[:-1] != snp_column_names(p):
            raise SchemaError(f"{path}: SNP columns must be named SNP_0001..SNP_{p}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != p + 1:
                raise SchemaError(f"{path}:{lineno}: expected {p + 1} fields, got {len(row)}")
            try:
                rows.append([int(v) for v in row])
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: non-integer field") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    arr = np.array(rows)
    g, ph = arr[:, :-1], arr[:, -1]
    if not np.all(np.isin(g, (0, 1, 2))):
        raise SchemaError(f"{path}: genotypes must be 0, 1 or 2")
    if not np.all(np.isin(ph, (-1, 1))):
        raise SchemaError(f"{path}: phenotype must be -1 or 1")
    return Cohort(g, ph, causative)
