"""Command-line entry point: ``dperm {generate,screen,fit,tune,experiment,compare-noise}``.

Exit codes: 0 success, 2 schema/usage error, 3 privacy requirement violated,
4 solver did not converge, 5 I/O error.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .errors import ConvergenceError, PrivacyRequirementError, SchemaError
from .experiment import RATE_COLUMNS, REPLICATE_COLUMNS, ExperimentConfig, run_experiment
from .gwas import (
    CohortConfig,
    Term,
    build_design,
    chi2_all,
    evaluate_run,
    generate_cohort,
    read_cohort_csv,
    screen,
    threshold_model,
    write_cohort_csv,
)
from .mechanism import (
    excess_objective,
    fit_nonprivate,
    fit_private,
    min_strong_convexity,
    validate,
)
from .noise import NoiseFamily
from .objective import ElasticNetSpec, LabeledDataset
from .solver import SolverConfig
from .tuning import CandidateSet, select_private, split_train_validation

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_PRIVACY = 3
EXIT_CONVERGENCE = 4
EXIT_IO = 5

COMPARE_LAMBDA = 0.05
COMPARE_ALPHA = 0.5


def fmt(x):
    """17 significant digits for CSV cells; ints and strings pass through."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return x


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])


def write_manifest(path, args, config, outputs):
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "outputs": {os.path.basename(p): sha256_file(p) for p in outputs},
    }
    write_json(path, manifest)


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def _unwrap_manifest(data, command, args):
    """Let a run manifest stand in for the config it recorded (seed included)."""
    if isinstance(data, dict) and data.get("command") == command and "config" in data:
        if args.seed is None:
            args.seed = data.get("seed")
        data = dict(data["config"])
        data.pop("causative", None)
    return data


def _causative_from_manifest(cohort_path):
    mpath = cohort_path + ".manifest.json"
    if os.path.exists(mpath):
        causal = load_json(mpath).get("config", {}).get("causative")
        if causal is not None:
            return tuple(causal)
    return None


def _design_for(cohort_path, top_m):
    cohort = read_cohort_csv(cohort_path, _causative_from_manifest(cohort_path))
    picked = screen(cohort, top_m)
    return cohort, picked, build_design(cohort, picked)


def cmd_generate(args):
    data = load_json(args.config) if args.config else {}
    data = _unwrap_manifest(data, "generate", args)
    if not isinstance(data, dict):
        raise SchemaError("cohort config must be a JSON object")
    config = CohortConfig.from_dict(data)
    if args.seed is None:
        args.seed = 0
    cohort = generate_cohort(config, args.seed)
    write_cohort_csv(cohort, args.out)
    cfg = config.to_dict()
    cfg["causative"] = list(cohort.causative)
    write_manifest(args.out + ".manifest.json", args, cfg, [args.out])
    return EXIT_OK


def cmd_screen(args):
    cohort = read_cohort_csv(args.cohort)
    picked = screen(cohort, args.top_m)
    stats = chi2_all(cohort.genotypes, cohort.phenotype)
    write_json(args.out, {
        "top_m": args.top_m,
        "selected": picked,
        "selected_snps": _names(picked),
        "chi2": [float(stats[j]) for j in picked],
    })
    return EXIT_OK


def _names(indices):
    """0-based SNP indices to their 1-based column names."""
    return [Term("main", (int(j),)).label() for j in indices]


def _fit_record(design, theta_scaled, terms_kept):
    theta = np.asarray(theta_scaled) / design.scale
    return {
        "terms": [t.label() for t in design.terms],
        "theta": theta.tolist(),
        "theta_normalized": np.asarray(theta_scaled).tolist(),
        "feature_scale": design.scale,
        "included_terms": sorted(t.label() for t in terms_kept),
    }


def cmd_fit(args):
    cohort, picked, design = _design_for(args.cohort, args.top_m)
    enet = ElasticNetSpec(args.lam, args.alpha)
    solver = SolverConfig(tol=args.tol, max_iter=args.max_iter)
    if args.no_noise:
        params = validate(design, enet, args.epsilon, allow_augment=not args.no_augment)
        result = fit_nonprivate(design, enet, solver, c_star=params.c_star)
        theta = result.theta
        provenance = {
            "private": False,
            "epsilon": args.epsilon,
            "lambda": enet.lam,
            "alpha": enet.alpha,
            "c_star": params.c_star,
            "augment": params.augment,
            "solver": result.as_dict(),
        }
    else:
        fit = fit_private(design, enet, args.epsilon, family=args.noise, seed=args.seed,
                          solver_config=solver, allow_augment=not args.no_augment)
        theta = fit.theta
        provenance = dict(fit.provenance(), private=True)
    kept = threshold_model(theta, design.terms, args.threshold_ratio)
    record = _fit_record(design, theta, kept)
    record.update(screened=picked, screened_snps=_names(picked), provenance=provenance,
                  n=design.n)
    if cohort.causative is not None:
        record["causative"] = list(cohort.causative)
        record["causative_snps"] = _names(cohort.causative)
        record["recovery"] = asdict(evaluate_run(kept, cohort.causative))
    write_json(args.out, record)
    return EXIT_OK


def cmd_tune(args):
    cohort, picked, design = _design_for(args.cohort, args.top_m)
    train, valid = split_train_validation(design, args.train_fraction, args.split_seed)
    convex_min = min_strong_convexity(1.0, train.n, args.epsilon_train)
    mults = [float(m) for m in args.grid_multipliers.split(",") if m.strip()]
    cands = CandidateSet.from_multipliers(convex_min, args.alpha, mults)
    solver = SolverConfig(tol=args.tol, max_iter=args.max_iter)
    res = select_private(cands, train, valid, args.epsilon_train, args.epsilon_select,
                         family=args.noise, delta=args.delta, seed=args.seed,
                         solver_config=solver)
    kept = threshold_model(res.theta, design.terms, args.threshold_ratio)
    record = _fit_record(design, res.theta, kept)
    record.update(
        screened=picked,
        screened_snps=_names(picked),
        candidates=[c.lam for c in cands],
        scores=res.scores.tolist(),
        selection_probabilities=res.selection_probabilities.tolist(),
        selection_scale=res.selection_scale,
        selected_index=res.index,
        selected_lambda=res.selected.lam,
        alpha=args.alpha,
        convex_min=convex_min,
        epsilon_train=res.epsilon_train,
        epsilon_select=res.epsilon_select,
        delta=args.delta,
        stability={"beta1": res.stability.beta1, "beta2": res.stability.beta2,
                   "xi": res.stability.xi},
        split={"seed": args.split_seed, "train_fraction": args.train_fraction,
               "n_train": train.n, "n_validation": valid.n},
        provenance=res.fit.provenance(),
    )
    write_json(args.out, record)
    return EXIT_OK


def cmd_experiment(args):
    data = _unwrap_manifest(load_json(args.grid), "experiment", args)
    if not isinstance(data, dict):
        raise SchemaError("grid must be a JSON object")
    data = dict(data)
    if args.replicates is not None:
        data["replicates"] = args.replicates
    if args.seed is not None:
        data["seed"] = args.seed
    config = ExperimentConfig.from_dict(data)
    os.makedirs(args.out, exist_ok=True)
    report = run_experiment(config)
    rates = os.path.join(args.out, "rates.csv")
    reps = os.path.join(args.out, "replicates.csv")
    write_csv(rates, RATE_COLUMNS, [c.row() for c in report.cells])
    write_csv(reps, REPLICATE_COLUMNS, [r.row() for r in report.replicates])
    args.seed = config.seed
    write_manifest(os.path.join(args.out, "manifest.json"), args, config.to_dict(), [rates, reps])
    return EXIT_OK


def builtin_instance(seed=20140601, n=200, s=5):
    """Fixed synthetic dataset for noise-family comparisons: intercept + 4 features."""
    rng = np.random.default_rng(seed)
    feats = rng.uniform(-1.0, 1.0, size=(n, s - 1))
    true = np.linspace(1.5, -1.5, s - 1)
    prob = 1.0 / (1.0 + np.exp(-(0.3 + feats @ true)))
    y = np.where(rng.random(n) < prob, 1, -1)
    raw = np.column_stack([np.ones(n), feats])
    return LabeledDataset.from_raw(raw, y, bound=float(s))


def cmd_compare_noise(args):
    data = builtin_instance()
    enet = ElasticNetSpec(COMPARE_LAMBDA, COMPARE_ALPHA)
    solver = SolverConfig(tol=args.tol, max_iter=args.max_iter)
    samples = {
        fam: excess_objective(data, enet, args.epsilon, fam, args.replicates, args.seed, solver)
        for fam in (NoiseFamily.B1, NoiseFamily.B2)
    }
    os.makedirs(args.out, exist_ok=True)
    rows = [
        {"family": fam.value, "replicate": r, "excess": float(v)}
        for fam, vals in samples.items() for r, v in enumerate(vals)
    ]
    excess_path = os.path.join(args.out, "excess.csv")
    write_csv(excess_path, ("family", "replicate", "excess"), rows)
    qs = (0.1, 0.25, 0.5, 0.75, 0.9)
    summary = []
    for fam, vals in samples.items():
        row = {"family": fam.value, "n": len(vals), "mean": float(vals.mean()),
               "std_error": float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0}
        row.update({f"q{int(q * 100):02d}": float(np.quantile(vals, q)) for q in qs})
        summary.append(row)
    summary_path = os.path.join(args.out, "summary.csv")
    write_csv(summary_path, list(summary[0].keys()), summary)
    cfg = {"epsilon": args.epsilon, "replicates": args.replicates, "lambda": COMPARE_LAMBDA,
           "alpha": COMPARE_ALPHA, "instance_digest": data.digest()}
    write_manifest(os.path.join(args.out, "manifest.json"), args, cfg,
                   [excess_path, summary_path])
    return EXIT_OK


def _positive_int(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {val}")
    return val


def _add_solver(p):
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=_positive_int, default=50_000)


def build_parser():
    parser = argparse.ArgumentParser(prog="dperm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a case-control cohort")
    p.add_argument("--config",
                   help="JSON object with cohort fields, or a generate manifest to replay")
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("screen", help="rank SNPs by chi-square statistic")
    p.add_argument("--cohort", required=True)
    p.add_argument("--top-m", type=_positive_int, default=5)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("fit", help="private elastic-net logistic fit on screened SNPs")
    p.add_argument("--cohort", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--noise", type=NoiseFamily.parse, default=NoiseFamily.B1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-m", type=_positive_int, default=5)
    p.add_argument("--threshold-ratio", type=float, default=0.01)
    p.add_argument("--no-noise", action="store_true", help="same objective, noise term zeroed")
    p.add_argument("--no-augment", action="store_true",
                   help="fail instead of topping up insufficient curvature")
    p.add_argument("--out", default="-")
    _add_solver(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tune", help="private lambda selection")
    p.add_argument("--cohort", required=True)
    p.add_argument("--epsilon-train", type=float, required=True)
    p.add_argument("--epsilon-select", type=float, default=None)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--grid-multipliers", default="1,2,4,8")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--noise", type=NoiseFamily.parse, default=NoiseFamily.B1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-m", type=_positive_int, default=5)
    p.add_argument("--threshold-ratio", type=float, default=0.01)
    p.add_argument("--out", default="-")
    _add_solver(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("experiment", help="replicated sensitivity/specificity study")
    p.add_argument("--grid", required=True)
    p.add_argument("--replicates", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("compare-noise", help="excess objective under B1 vs B2 noise")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--replicates", type=_positive_int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_solver(p)
    p.set_defaults(func=cmd_compare_noise)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except PrivacyRequirementError as exc:
        print(f"dperm: {exc.requirement}: {exc}", file=sys.stderr)
        return EXIT_PRIVACY
    except ConvergenceError as exc:
        print(f"dperm: solver non-convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except SchemaError as exc:
        print(f"dperm: schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"dperm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
