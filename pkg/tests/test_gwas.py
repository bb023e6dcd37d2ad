import math

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from dperm.errors import SchemaError
from dperm.gwas import (
    INTERCEPT,
    Cohort,
    CohortConfig,
    RecoveryFlags,
    Term,
    build_design,
    case_probability,
    chi2_all,
    chi2_stat,
    evaluate_run,
    generate_cohort,
    read_cohort_csv,
    sample_causal_pairs,
    screen,
    snp_column_names,
    threshold_model,
    write_cohort_csv,
)
from dperm.seeding import derive_seed

DEFAULT_MODEL = CohortConfig()


def table_column(cases, controls):
    g = np.concatenate([np.repeat([0, 1, 2], cases), np.repeat([0, 1, 2], controls)])
    ph = np.concatenate([np.ones(sum(cases)), -np.ones(sum(controls))]).astype(int)
    return g, ph


def test_case_probability_examples():
    assert case_probability(DEFAULT_MODEL, 0, 0) == pytest.approx(0.39024390243902439, rel=1e-15)
    assert case_probability(DEFAULT_MODEL, 2, 2) == pytest.approx(0.96059562243544887, rel=1e-14)
    odds = 0.64 * 0.91**4 * 2.73**4
    assert odds == pytest.approx(24.377891031569485, rel=1e-14)


def test_config_validation():
    with pytest.raises(SchemaError):
        CohortConfig(p_snps=0)
    with pytest.raises(SchemaError):
        CohortConfig(maf_causative=0.6)
    with pytest.raises(SchemaError):
        CohortConfig.from_dict({"bogus": 1})
    cfg = CohortConfig.from_dict({"p_snps": 50, "maf_background": [0.1, 0.2]})
    assert CohortConfig.from_dict(cfg.to_dict()) == cfg


def test_generate_cohort_shape_and_determinism():
    cfg = CohortConfig(p_snps=200)
    a = generate_cohort(cfg, 5)
    b = generate_cohort(cfg, 5)
    assert a.genotypes.shape == (800, 200)
    assert np.array_equal(a.genotypes, b.genotypes) and np.array_equal(a.phenotype, b.phenotype)
    assert (a.phenotype == 1).sum() == 400 and (a.phenotype == -1).sum() == 400
    assert set(np.unique(a.genotypes)) <= {0, 1, 2}
    i, j = a.causative
    assert i != j and 0 <= i < 200 and 0 <= j < 200


def test_unreachable_quota_aborts():
    cfg = CohortConfig(p_snps=5, odds_baseline=1e-12, odds_interaction=1.0, max_draws=5000)
    with pytest.raises(SchemaError):
        generate_cohort(cfg, 0)


def test_causal_marginal_maf():
    x, y, _ = sample_causal_pairs(DEFAULT_MODEL, 100_000, 1)
    for g in (x, y):
        maf = g.mean() / 2
        se = math.sqrt(0.25 * 0.75 / (2 * g.size))
        assert abs(maf - 0.25) < 3 * se


def test_chi2_examples():
    g, ph = table_column((100, 100, 100), (100, 100, 100))
    assert chi2_stat(g, ph) == pytest.approx(0.0, abs=1e-12)
    g, ph = table_column((150, 100, 50), (50, 100, 150))
    assert chi2_stat(g, ph) == pytest.approx(100.0, rel=1e-12)
    ref = chi2_contingency([[150, 100, 50], [50, 100, 150]], correction=False)[0]
    assert chi2_stat(g, ph) == pytest.approx(ref, rel=1e-12)
    assert chi2_stat(np.ones(10, dtype=int), np.array([1, -1] * 5)) == 0.0
    with pytest.raises(SchemaError):
        chi2_stat(np.ones(4), np.ones(4, dtype=int))


def test_chi2_drops_empty_category():
    g, ph = table_column((30, 0, 10), (10, 0, 30))
    ref = chi2_contingency([[30, 10], [10, 30]], correction=False)[0]
    assert chi2_stat(g, ph) == pytest.approx(ref, rel=1e-12)


def test_chi2_matches_oracle_on_random_columns():
    rng = np.random.default_rng(0)
    G = rng.integers(0, 3, size=(300, 20))
    ph = np.where(rng.random(300) < 0.5, 1, -1)
    stats = chi2_all(G, ph)
    for j in range(20):
        tab = [[np.sum((G[:, j] == v) & (ph == s)) for v in (0, 1, 2)] for s in (1, -1)]
        assert stats[j] == pytest.approx(chi2_contingency(tab, correction=False)[0], rel=1e-10)


def test_screen_examples():
    rng = np.random.default_rng(3)
    ph = np.array([1] * 50 + [-1] * 50)
    G = rng.integers(0, 3, size=(100, 30))
    G[:, 17] = np.where(ph == 1, 2, 0)
    cohort = Cohort(G, ph)
    assert screen(cohort, 3)[0] == 17
    order = screen(cohort, 30)
    stats = chi2_all(G, ph)
    assert sorted(order) == list(range(30))
    assert np.all(np.diff(stats[order]) <= 0)
    with pytest.raises(SchemaError):
        screen(cohort, 0)
    with pytest.raises(SchemaError):
        screen(cohort, 31)


def test_screen_ties_go_to_lower_index():
    G = np.tile(np.array([[0], [2]]), (10, 4))
    ph = np.array([1, -1] * 10)
    assert screen(Cohort(G, ph), 2) == [0, 1]


def test_null_model_screens_causal_at_chance():
    cfg = CohortConfig(p_snps=100, odds_x=1.0, odds_y=1.0, odds_interaction=1.0)
    hits = 0
    reps = 40
    for r in range(reps):
        c = generate_cohort(cfg, derive_seed(9, r))
        hits += sum(j in screen(c, 5) for j in c.causative)
    # expected 2 * 5 / 100 per replicate
    rate = hits / (2 * reps)
    assert abs(rate - 0.05) < 3 * math.sqrt(0.05 * 0.95 / (2 * reps)) + 0.01


def test_screen_finds_causal_pair_at_desk_scale():
    """Both causative SNPs in the chi-square top 5 of 1000, in >= 90% of 50 cohorts."""
    cfg = CohortConfig(p_snps=1000)
    hits = 0
    for r in range(50):
        c = generate_cohort(cfg, derive_seed(2014, "screen", r))
        top = screen(c, 5)
        hits += all(j in top for j in c.causative)
    print(f"causal pair inside top 5: {hits}/50")
    assert hits >= 45


def test_build_design():
    G = np.array([[0, 0, 0, 0, 0], [2, 2, 1, 0, 2]])
    c = Cohort(G, np.array([1, -1]))
    d = build_design(c, [0, 1, 2, 3, 4])
    assert d.s == 16 and d.kappa == 1.0 and d.scale == 16.0
    assert d.terms[0] == INTERCEPT and d.terms[1] == Term("main", (0,))
    assert d.terms[6] == Term("pair", (0, 1))
    raw = d.X * d.scale
    assert np.array_equal(raw[0], np.eye(16)[0])
    assert raw[1, 6] == 1.0 and raw[1, 3] == 0.5
    with pytest.raises(SchemaError):
        build_design(c, [0, 0])


def test_threshold_model():
    terms = (INTERCEPT, Term("main", (0,)), Term("main", (1,)), Term("pair", (0, 1)))
    got = threshold_model(np.array([9.0, 1.0, 0.005, 0.5]), terms, 0.01)
    assert got == {terms[1], terms[3]}
    assert threshold_model(np.array([5.0, 0.3, -0.3, 0.3]), terms) == set(terms[1:])
    assert threshold_model(np.zeros(4), terms) == frozenset()
    with pytest.raises(SchemaError):
        threshold_model(np.zeros(4), terms, 1.0)


def test_evaluate_run():
    mains = {Term("main", (3,)), Term("main", (8,))}
    pair = Term("pair", (3, 8))
    assert evaluate_run(mains | {pair}, (8, 3)) == RecoveryFlags(True, 2, True, True, True)
    extra = evaluate_run(mains | {pair, Term("main", (1,))}, (3, 8))
    assert extra.all_found and not extra.no_extras
    assert evaluate_run(set(), (3, 8)) == RecoveryFlags(False, 0, False, False, True)
    half = evaluate_run({Term("main", (3,))}, (3, 8))
    assert half.n_mains_found == 1 and not half.both_mains_found


def test_csv_round_trip(tmp_path):
    c = generate_cohort(CohortConfig(p_snps=12, n_cases=20, n_controls=30), 4)
    path = tmp_path / "c.csv"
    write_cohort_csv(c, path)
    back = read_cohort_csv(path, c.causative)
    assert np.array_equal(back.genotypes, c.genotypes)
    assert np.array_equal(back.phenotype, c.phenotype)
    header = path.read_text().splitlines()[0].split(",")
    assert header[0] == "SNP_0001" and header[-1] == "phenotype" and len(header) == 13
    assert snp_column_names(10_000)[-1] == "SNP_10000"


def test_csv_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("SNP_0001,phenotype\n0,1\n3,-1\n")
    with pytest.raises(SchemaError):
        read_cohort_csv(path)
    path.write_text("SNP_0001,phenotype\n0,1\n1\n")
    with pytest.raises(SchemaError, match=":3:"):
        read_cohort_csv(path)
    path.write_text("")
    with pytest.raises(SchemaError):
        read_cohort_csv(path)
