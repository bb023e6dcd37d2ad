import csv
import json
import math

import numpy as np
import pytest

from dperm.cli import (
    EXIT_CONVERGENCE,
    EXIT_IO,
    EXIT_OK,
    EXIT_PRIVACY,
    EXIT_SCHEMA,
    main,
)


def run(args, capsys=None):
    code = main([str(a) for a in args])
    out = capsys.readouterr().out if capsys is not None else None
    return code, out


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def cohort_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("cohort")
    cfg = d / "cfg.json"
    cfg.write_text(json.dumps({"p_snps": 60}))
    out = d / "cohort.csv"
    assert main(["generate", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == EXIT_OK
    return out


def test_generate_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"p_snps": 25}))
    out = tmp_path / "a.csv"
    assert run(["generate", "--config", cfg, "--seed", 1, "--out", out])[0] == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 801 and len(lines[0].split(",")) == 26
    manifest = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert manifest["command"] == "generate" and manifest["seed"] == 1
    assert manifest["config"]["odds_interaction"] == 2.73
    assert len(manifest["config"]["causative"]) == 2
    assert "a.csv" in manifest["outputs"]


def test_generate_is_byte_identical_and_replayable(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"p_snps": 10, "n_cases": 30, "n_controls": 20}))
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    for path in (a, b):
        assert main(["generate", "--config", str(cfg), "--seed", "9", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["generate", "--config", str(a) + ".manifest.json", "--out", str(c)]) == 0
    assert c.read_bytes() == a.read_bytes()


def test_generate_schema_errors(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"p_snps": 0}))
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == EXIT_SCHEMA
    cfg.write_text('{"p_snps": 10,\n "oops"}')
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == EXIT_SCHEMA
    assert main(["generate", "--config", str(tmp_path / "none.json"),
                 "--out", str(tmp_path / "x.csv")]) == EXIT_IO
    assert main(["generate", "--out", str(tmp_path / "no" / "dir.csv")]) == EXIT_IO


def test_screen(cohort_csv, capsys):
    code, out = run(["screen", "--cohort", cohort_csv, "--top-m", 5], capsys)
    rec = json.loads(out)
    assert code == 0 and len(rec["selected"]) == 5
    assert rec["chi2"] == sorted(rec["chi2"], reverse=True)


def fit_json(capsys, cohort, *extra):
    code, out = run(["fit", "--cohort", cohort, "--lambda", 0.01, "--alpha", 0.1, *extra], capsys)
    assert code == EXIT_OK, out
    return json.loads(out)


def test_fit_huge_epsilon_matches_no_noise(cohort_csv, capsys):
    a = fit_json(capsys, cohort_csv, "--epsilon", 1e6, "--seed", 4)
    b = fit_json(capsys, cohort_csv, "--epsilon", 1e6, "--no-noise")
    assert np.max(np.abs(np.subtract(a["theta"], b["theta"]))) <= 1e-3
    assert a["provenance"]["private"] and not b["provenance"]["private"]
    assert len(a["theta"]) == 16 and a["feature_scale"] == 16.0
    assert np.allclose(np.multiply(a["theta"], 16.0), a["theta_normalized"])
    assert "recovery" in a and len(a["causative"]) == 2


def test_fit_identical_reruns(cohort_csv, capsys):
    args = ["fit", "--cohort", cohort_csv, "--epsilon", 1, "--lambda", 0.01, "--seed", 2]
    assert run(args, capsys)[1] == run(args, capsys)[1]


def test_fit_rejects_weak_lambda(cohort_csv, capsys):
    code = main(["fit", "--cohort", str(cohort_csv), "--epsilon", "1", "--lambda", "1e-5",
                 "--no-augment"])
    err = capsys.readouterr().err
    assert code == EXIT_PRIVACY and "strong convexity requirement violated" in err
    # with augmentation allowed the same lambda is topped up
    rec = fit_json(capsys, cohort_csv, "--epsilon", 1)
    assert rec["provenance"]["augment"] == 0.0
    code = main(["fit", "--cohort", str(cohort_csv), "--epsilon", "1", "--lambda", "1e-5"])
    rec = json.loads(capsys.readouterr().out)
    assert code == 0 and rec["provenance"]["augment"] > 0


def test_fit_other_exit_codes(cohort_csv, capsys):
    assert main(["fit", "--cohort", str(cohort_csv), "--epsilon", "0", "--lambda", "1"]) == EXIT_PRIVACY
    assert main(["fit", "--cohort", str(cohort_csv), "--epsilon", "1", "--lambda", "0.01",
                 "--max-iter", "1"]) == EXIT_CONVERGENCE
    assert main(["fit", "--cohort", str(cohort_csv) + ".missing", "--epsilon", "1",
                 "--lambda", "1"]) == EXIT_IO
    with pytest.raises(SystemExit) as info:
        main(["fit", "--cohort", str(cohort_csv), "--epsilon", "1", "--lambda", "1",
              "--noise", "b3"])
    assert info.value.code == EXIT_SCHEMA
    capsys.readouterr()


def tune_json(capsys, cohort, *extra):
    code, out = run(["tune", "--cohort", cohort, "--epsilon-train", 2, *extra], capsys)
    assert code == EXIT_OK
    return json.loads(out)


def test_tune_single_candidate(cohort_csv, capsys):
    rec = tune_json(capsys, cohort_csv, "--grid-multipliers", "1")
    assert rec["selection_probabilities"] == [1.0] and rec["selected_index"] == 0
    assert rec["selected_lambda"] == pytest.approx(rec["convex_min"] / 0.9)


def test_tune_probabilities_consistent(cohort_csv, capsys):
    rec = tune_json(capsys, cohort_csv, "--alpha", 0.5, "--seed", 3)
    p = np.array(rec["selection_probabilities"])
    q = np.array(rec["scores"])
    w = np.exp(rec["selection_scale"] * (q - q.max()))
    assert abs(p.sum() - 1) <= 1e-12 and np.allclose(p, w / w.sum(), atol=1e-12)
    assert rec["epsilon_select"] == rec["epsilon_train"] == 2.0
    assert rec["split"]["n_train"] == 640 and rec["split"]["n_validation"] == 160


def test_tune_huge_selection_epsilon_is_argmax(cohort_csv, capsys):
    hits = 0
    for seed in range(100):
        rec = tune_json(capsys, cohort_csv, "--epsilon-select", 1e6, "--seed", seed)
        hits += rec["selected_index"] == int(np.argmax(rec["scores"]))
    assert hits >= 99


GRID = {"cohort": {"p_snps": 30, "n_cases": 100, "n_controls": 100},
        "epsilons": [0.5, 5.0], "alphas": [0.1, 0.9]}


def test_experiment_outputs_and_rerun(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps(GRID))
    out = tmp_path / "run"
    assert main(["experiment", "--grid", str(grid), "--replicates", "2", "--seed", "5",
                 "--out", str(out)]) == 0
    rates = read_rows(out / "rates.csv")
    assert list(rates[0]) == ["epsilon", "alpha", "convex_min", "interaction_rate",
                              "mains_half_rate", "all_rate", "specificity_rate", "R"]
    assert len(rates) == 4 and all(r["R"] == "2" for r in rates)
    reps = read_rows(out / "replicates.csv")
    assert len(reps) == 8
    for r in rates:
        cell = [x for x in reps if x["epsilon"] == r["epsilon"] and x["alpha"] == r["alpha"]]
        assert float(r["all_rate"]) == sum(int(x["all_found"]) for x in cell) / 2
    again = tmp_path / "again"
    assert main(["experiment", "--grid", str(out / "manifest.json"), "--out", str(again)]) == 0
    for name in ("rates.csv", "replicates.csv"):
        assert (again / name).read_bytes() == (out / name).read_bytes()


def test_experiment_single_replicate(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps(dict(GRID, epsilons=[2.0], alphas=[0.5])))
    assert main(["experiment", "--grid", str(grid), "--replicates", "1",
                 "--out", str(tmp_path / "o")]) == 0
    (row,) = read_rows(tmp_path / "o" / "rates.csv")
    for key in ("interaction_rate", "all_rate", "specificity_rate"):
        assert float(row[key]) in (0.0, 1.0)


def test_experiment_large_lambda_nonprivate(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps(dict(GRID, epsilons=[0.002], private=False,
                                    screening="chi2_with_causal")))
    assert main(["experiment", "--grid", str(grid), "--replicates", "3",
                 "--out", str(tmp_path / "o")]) == 0
    for row in read_rows(tmp_path / "o" / "rates.csv"):
        assert float(row["convex_min"]) >= 1.58
        assert float(row["all_rate"]) == 0.0 and float(row["specificity_rate"]) == 1.0


def test_experiment_bad_grid(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"epsilons": [-1]}))
    assert main(["experiment", "--grid", str(grid), "--out", str(tmp_path / "o")]) == EXIT_SCHEMA


def test_compare_noise(tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare-noise", "--epsilon", "1", "--replicates", "100", "--seed", "2",
                 "--out", str(out)]) == 0
    rows = read_rows(out / "excess.csv")
    assert len(rows) == 200 and all(float(r["excess"]) >= -1e-12 for r in rows)
    summary = {r["family"]: r for r in read_rows(out / "summary.csv")}
    b1, b2 = summary["B1"], summary["B2"]
    se = math.hypot(float(b1["std_error"]), float(b2["std_error"]))
    assert float(b1["mean"]) <= float(b2["mean"]) + 3 * se
    out2 = tmp_path / "cmp2"
    assert main(["compare-noise", "--epsilon", "2", "--replicates", "100", "--seed", "2",
                 "--out", str(out2)]) == 0
    s2 = {r["family"]: r for r in read_rows(out2 / "summary.csv")}
    assert float(s2["B1"]["mean"]) < float(b1["mean"])
    assert float(s2["B2"]["mean"]) < float(b2["mean"])
    out3 = tmp_path / "cmp3"
    main(["compare-noise", "--epsilon", "1", "--replicates", "100", "--seed", "2",
          "--out", str(out3)])
    assert (out3 / "excess.csv").read_bytes() == (out / "excess.csv").read_bytes()


def test_csv_floats_round_trip(tmp_path):
    out = tmp_path / "cmp"
    main(["compare-noise", "--replicates", "5", "--out", str(out)])
    for r in read_rows(out / "excess.csv"):
        v = float(r["excess"])
        assert format(v, ".17g") == r["excess"]
