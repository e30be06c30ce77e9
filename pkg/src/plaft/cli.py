"""Command line interface: fit, tune, predict, evaluate, simulate.

Every run writes a manifest (resolved configuration, package version, wall
time) next to its outputs.  All outputs are plain CSV or the key-value
model document; exit code 0 means every requested output was written.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import __version__
from .data import ColumnSchema, load_csv
from .errors import PlaftError
from .gehan import PenaltySpec
from .metrics import evaluate_fit, repeated_split_c
from .model import FitResult, ModelSpec, fit
from .solver import SolverConfig
from .simgen import (ScenarioSpec, default_recipes, lasso_linear, lasso_pl,
                     oracle_pl, plain_aft, run_monte_carlo, spline_aft)
from .tuning import TuningGrid, cross_validate, fit_tuned, tune_gcv

RECIPES = {"lasso_pl": lasso_pl, "lasso_l": lasso_linear, "aft": plain_aft,
           "pl_aft": spline_aft, "oracle": oracle_pl}


def resolve_columns(text, header):
    """Expand a comma list of column names and a:b header ranges."""
    if not text:
        return []
    out = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if ":" in token:
            a, _, b = token.partition(":")
            a, b = a.strip(), b.strip()
            if a not in header or b not in header:
                raise PlaftError("range %r: column not in header" % token)
            i, j = header.index(a), header.index(b)
            if j < i:
                raise PlaftError("range %r is reversed" % token)
            out.extend(header[i:j + 1])
        else:
            out.append(token)
    return out


def read_header(path):
    with open(path, newline="") as fh:
        row = next(csv.reader(fh))
    return [c.strip() for c in row]


def load_dataset(args):
    header = read_header(args.data)
    schema = ColumnSchema(
        time_col=args.time_col,
        status_col=args.status_col,
        clinical_cols=tuple(resolve_columns(args.clinical_cols, header)),
        feature_cols=tuple(resolve_columns(args.feature_cols, header)),
        pre_logged=args.pre_logged,
        id_col=args.id_col,
    )
    return load_csv(args.data, schema), schema


def write_manifest(out_dir, command, args, extra=None, started=None):
    path = os.path.join(out_dir, "manifest.txt")
    with open(path, "w") as fh:
        fh.write("command = %s\n" % command)
        fh.write("plaft_version = %s\n" % __version__)
        for key, value in sorted(vars(args).items()):
            if key == "func":
                continue
            fh.write("%s = %r\n" % (key, value))
        for key, value in (extra or {}).items():
            fh.write("%s = %r\n" % (key, value))
        if started is not None:
            fh.write("wall_time_s = %.3f\n" % (time.time() - started))
    return path


def build_model_spec(args, ds):
    nonlinear = tuple(sorted(ds.clinical_names.index(c) if ds.clinical_names else int(c)
                             for c in (args.nonlinear.split(",") if args.nonlinear else [])
                             if c != ""))
    solver = SolverConfig(method="exact_l1" if args.solver == "exact" else "smoothed")
    return ModelSpec(nonlinear_covariates=nonlinear,
                     degree=args.degree, n_knots=args.knots,
                     penalty=PenaltySpec(args.gamma, args.lam,
                                         penalize_all_beta=args.penalize_all_beta),
                     penalize_clinical=args.penalize_clinical,
                     solver=solver)


def run_tuning(ds, spec, args):
    grid = TuningGrid.default(ds, n_gamma=args.grid_size, n_lambda=args.grid_size,
                              folds=args.folds, seed=args.seed,
                              tune_gamma=bool(spec.nonlinear_covariates))
    return fit_tuned(ds, spec, grid, criterion=args.tune, select=args.select)


def write_phi_curves(fr, ds, out_dir, points=200):
    path = os.path.join(out_dir, "phi_curve.csv")
    with open(path, "w") as fh:
        fh.write("covariate,x,phi\n")
        for b, c in enumerate(fr.spec.nonlinear_covariates):
            name = ds.clinical_names[c] if ds.clinical_names else str(c)
            xs = np.linspace(ds.clinical[:, c].min(), ds.clinical[:, c].max(), points)
            phis = fr.phi(xs, block=b)
            for x, p in zip(xs, phis):
                fh.write("%s,%r,%r\n" % (name, float(x), float(p)))
    return path


def write_selected(fr, ds, out_dir):
    path = os.path.join(out_dir, "selected_features.csv")
    coefs = fr.feature_coefficients()
    raw = fr.feature_coefficients(raw=True)
    with open(path, "w") as fh:
        fh.write("feature,coefficient_standardized,coefficient_raw\n")
        for j in fr.selected_features:
            name = ds.feature_names[j] if ds.feature_names else str(j)
            fh.write("%s,%r,%r\n" % (name, float(coefs[j]), float(raw[j])))
    return path


def cmd_fit(args):
    started = time.time()
    os.makedirs(args.out_dir, exist_ok=True)
    ds, _ = load_dataset(args)
    spec = build_model_spec(args, ds)
    extra = {}
    if args.tune:
        fr, report = run_tuning(ds, spec, args)
        report.to_csv(os.path.join(args.out_dir, "tuning_report.csv"))
        extra["chosen_gamma"], extra["chosen_lambda"] = fr.gamma, float(
            np.max(fr.lam_vector) if fr.lam_vector.size else 0.0)
    else:
        fr = fit(ds, spec)
    fr.save(os.path.join(args.out_dir, "model.plaft"))
    write_selected(fr, ds, args.out_dir)
    if fr.spec.nonlinear_covariates:
        write_phi_curves(fr, ds, args.out_dir)
    extra["objective"] = fr.objective
    extra["converged"] = fr.converged
    extra["n_selected"] = len(fr.selected_features)
    write_manifest(args.out_dir, "fit", args, extra, started)
    print("fit: %d features selected, objective %.6g, model written to %s"
          % (len(fr.selected_features), fr.objective,
             os.path.join(args.out_dir, "model.plaft")))
    return 0


def cmd_tune(args):
    started = time.time()
    os.makedirs(args.out_dir, exist_ok=True)
    ds, _ = load_dataset(args)
    spec = build_model_spec(args, ds)
    criterion = args.tune or "gcv"
    grid = TuningGrid.default(ds, n_gamma=args.grid_size, n_lambda=args.grid_size,
                              folds=args.folds, seed=args.seed,
                              tune_gamma=bool(spec.nonlinear_covariates))
    tuner = {"cv": cross_validate, "gcv": tune_gcv}[criterion]
    report = tuner(ds, spec, grid)
    report.to_csv(os.path.join(args.out_dir, "tuning_report.csv"))
    write_manifest(args.out_dir, "tune", args,
                   {"chosen_gamma": report.chosen[0], "chosen_lambda": report.chosen[1]},
                   started)
    print("tune: chosen gamma=%r lambda=%r (%s)" % (*report.chosen, criterion))
    return 0


def cmd_predict(args):
    started = time.time()
    os.makedirs(args.out_dir, exist_ok=True)
    fr = FitResult.load(args.model)
    header = read_header(args.data)
    clin_cols = resolve_columns(args.clinical_cols, header)
    feat_cols = resolve_columns(args.feature_cols, header)
    for c in clin_cols + feat_cols:
        if c not in header:
            raise PlaftError("column %r not found in header of %s" % (c, args.data))
    rows = []
    with open(args.data, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            clin = [float(row[c]) for c in clin_cols]
            feats = [float(row[c]) for c in feat_cols]
            rows.append((clin, feats))
    path = os.path.join(args.out_dir, "predictions.csv")
    with open(path, "w") as fh:
        fh.write("row,score\n")
        for i, (clin, feats) in enumerate(rows):
            fh.write("%d,%r\n" % (i, fr.predict(np.array(clin), np.array(feats))))
    write_manifest(args.out_dir, "predict", args, {"n_scored": len(rows)}, started)
    print("predict: %d scores written to %s" % (len(rows), path))
    return 0


def cmd_evaluate(args):
    started = time.time()
    os.makedirs(args.out_dir, exist_ok=True)
    fr = FitResult.load(args.model)
    ds, _ = load_dataset(args)
    report = evaluate_fit(fr, ds)
    extra = {"c_statistic": report.c_statistic,
             "comparable_pairs": report.comparable_pairs}
    lines = ["c_statistic = %r" % report.c_statistic,
             "comparable_pairs = %d" % report.comparable_pairs]
    for note in report.notes:
        lines.append("warning = %s" % note)
        extra["warning"] = note
    if args.repeats:
        mean_c, cs, undefined = repeated_split_c(ds, fr, args.repeats,
                                                 train_fraction=args.split,
                                                 seed=args.seed)
        lines += ["mean_c_over_splits = %r" % mean_c,
                  "defined_repeats = %d" % len(cs),
                  "undefined_repeats = %d" % undefined]
        extra.update(mean_c_over_splits=mean_c, undefined_repeats=undefined)
    with open(os.path.join(args.out_dir, "metrics.csv"), "w") as fh:
        fh.write("metric,value\n")
        for key, value in report.as_dict().items():
            fh.write("%s,%s\n" % (key, "" if value is None else repr(value)))
        if args.repeats:
            fh.write("mean_c_over_splits,%s\n" % ("" if mean_c is None else repr(mean_c)))
            fh.write("undefined_repeats,%d\n" % undefined)
    with open(os.path.join(args.out_dir, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    write_manifest(args.out_dir, "evaluate", args, extra, started)
    print("\n".join(lines))
    return 0


def cmd_simulate(args):
    started = time.time()
    os.makedirs(args.out_dir, exist_ok=True)
    spec = ScenarioSpec(design=args.design, n=args.n,
                        d=args.d, rho=args.rho, delta=args.delta,
                        phi_kind=args.phi, censor_width=args.censor_width,
                        seed=args.seed)
    if args.models:
        recipes = []
        for name in args.models.split(","):
            name = name.strip()
            if name not in RECIPES:
                raise PlaftError("unknown model %r (have %s)" % (name, sorted(RECIPES)))
            recipes.append(RECIPES[name]())
        recipes = tuple(recipes)
    else:
        recipes = default_recipes(spec.design)
    mc = run_monte_carlo(spec, recipes, replicates=args.replicates, n_jobs=args.threads)
    agg_path = os.path.join(args.out_dir, "aggregate.csv")
    mc.to_csv(agg_path)
    with open(os.path.join(args.out_dir, "per_replicate.csv"), "w") as fh:
        fh.write("replicate,seed,model," + ",".join(mc.METRICS) + ",error\n")
        for oc in mc.outcomes:
            for rec in recipes:
                vals = []
                rep = oc.reports.get(rec.name)
                for metric in mc.METRICS:
                    v = getattr(rep, metric) if rep is not None else None
                    vals.append("" if v is None else repr(v))
                fh.write("%d,%d,%s,%s,%s\n"
                         % (oc.replicate, oc.seed, rec.name, ",".join(vals),
                            oc.errors.get(rec.name, "")))
    flagged = mc.flagged()
    write_manifest(args.out_dir, "simulate", args,
                   {"flagged_replicates": len(flagged)}, started)
    print("simulate: %d replicates, %d flagged; aggregate written to %s"
          % (args.replicates, len(flagged), agg_path))
    return 0


def make_parser():
    parser = argparse.ArgumentParser(prog="plaft",
                                     description="Partly linear AFT models by rank "
                                                 "estimation with penalized splines and "
                                                 "lasso feature selection")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default="plaft_out")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes; 1 forces serial execution")
    common.add_argument("--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", required=True, help="CSV file with header row")
    data.add_argument("--time-col", default="time")
    data.add_argument("--status-col", default="status", help="1=event, 0=censored")
    data.add_argument("--clinical-cols", default="", help="names or a:b ranges")
    data.add_argument("--feature-cols", default="", help="names or a:b ranges")
    data.add_argument("--pre-logged", action="store_true",
                      help="time column already holds log times")
    data.add_argument("--id-col", default=None,
                      help="average replicate feature rows sharing this id")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--nonlinear", default="",
                       help="clinical columns modeled with splines (names)")
    model.add_argument("--degree", type=int, default=3)
    model.add_argument("--knots", type=int, default=10)
    model.add_argument("--gamma", type=float, default=0.0)
    model.add_argument("--lambda", dest="lam", type=float, default=0.0)
    model.add_argument("--penalize-clinical", action="store_true")
    model.add_argument("--penalize-all-beta", action="store_true")
    model.add_argument("--solver", choices=("smoothed", "exact"), default="smoothed")
    model.add_argument("--tune", choices=("cv", "gcv"), default=None)
    model.add_argument("--select", choices=("min", "1se"), default="min")
    model.add_argument("--folds", type=int, default=5)
    model.add_argument("--grid-size", type=int, default=10)

    p_fit = sub.add_parser("fit", parents=[common, data, model],
                           help="fit a model and write the artifact")
    p_fit.set_defaults(func=cmd_fit)

    p_tune = sub.add_parser("tune", parents=[common, data, model],
                            help="grid-search penalties, write the report")
    p_tune.set_defaults(func=cmd_tune)

    p_pred = sub.add_parser("predict", parents=[common],
                            help="score subjects with a fitted model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--clinical-cols", default="")
    p_pred.add_argument("--feature-cols", default="")
    p_pred.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("evaluate", parents=[common, data],
                            help="concordance of a model on a dataset")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--repeats", type=int, default=0,
                        help="repeated stratified-split validation")
    p_eval.add_argument("--split", type=float, default=0.6,
                        help="training fraction for --repeats")
    p_eval.add_argument("--stratify-status", action="store_true", default=True,
                        help="splits are always stratified on event status")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="Monte Carlo benchmark of the estimators")
    p_sim.add_argument("--design", choices=("estimation", "selection", "highdim"),
                       required=True)
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--d", type=int, default=None)
    p_sim.add_argument("--rho", type=float, default=0.0)
    p_sim.add_argument("--delta", type=float, default=1.0)
    p_sim.add_argument("--phi", default=None,
                       choices=("linear_2x", "quadratic_x2", "quadratic_2x2",
                                "cubic_hinge"))
    p_sim.add_argument("--censor-width", type=float, default=None)
    p_sim.add_argument("--replicates", type=int, default=10)
    p_sim.add_argument("--models", default="",
                       help="comma list of %s" % ",".join(sorted(RECIPES)))
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PlaftError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
