"""Command-line interface.

Subcommands: ``simulate``, ``estimate``, ``baseline``, ``eval``,
``export-plot`` and ``run-table``. Exit codes: 0 success, 2 configuration
error, 3 estimation failure, 4 missing or mismatched results.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import formats as fm
from .baselines import srvf_distance
from .errors import FsMeanError, GridMismatch
from .estimator import Hyperparams
from .harness import (PipelineOptions, estimate_population, estimate_spherical, options_dict,
                      parameter_errors, preprocess_curves, run_baselines, run_table)
from .metrics import d_norm, l2_sq_distance_on, repetition_stats
from .simgen import SCENARIOS, TRUTH_GRID, ScenarioConfig, generate

EXIT_CONFIG, EXIT_ESTIMATE, EXIT_RESULTS = 2, 3, 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- config handling

def read_config_file(path):
    """Flat ``key=value`` lines; ``#`` starts a comment. Keys use ``_`` or ``-``."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}", EXIT_CONFIG) from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{n}: expected key=value", EXIT_CONFIG)
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _apply_config(parser, cfg):
    known = {a.dest: a for a in parser._actions}
    defaults = {}
    for k, v in cfg.items():
        if k not in known:
            raise CliError(f"unknown config key: {k}", EXIT_CONFIG)
        a = known[k]
        if isinstance(a, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            if v.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise CliError(f"config key {k} expects a boolean", EXIT_CONFIG)
            defaults[k] = v.lower() in ("true", "1", "yes")
        else:
            try:
                defaults[k] = a.type(v) if a.type else v
            except (TypeError, ValueError) as exc:
                raise CliError(f"bad value for {k}: {v}", EXIT_CONFIG) from exc
    parser.set_defaults(**defaults)


def _floats(text):
    return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def read_cv_grid(path):
    """Hyperparameter grid file: ``h=...``, ``lambda=...`` (tied) or
    ``lambda_kappa=...`` and ``lambda_tau=...``, values comma separated."""
    cfg = read_config_file(path)
    try:
        hs = _floats(cfg.get("h", "0.016,0.03,0.05,0.1"))
        if "lambda" in cfg:
            lam = _floats(cfg["lambda"])
            return [Hyperparams(h, l, l) for h in hs for l in lam]
        lk = _floats(cfg.get("lambda_kappa", "1e-10,1e-9,1e-8,1e-7,1e-6"))
        lt = _floats(cfg.get("lambda_tau", "1e-10,1e-9,1e-8,1e-7,1e-6"))
        return [Hyperparams(h, a, b) for h in hs for a in lk for b in lt]
    except ValueError as exc:
        raise CliError(f"bad hyperparameter grid: {exc}", EXIT_CONFIG) from exc


@contextmanager
def _mapper(threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            yield ex.map
    else:
        yield map


def _options(args):
    try:
        opts = PipelineOptions(
            h=args.h, lambda_kappa=args.lambda_kappa if args.lambda_kappa is not None else args.lam,
            lambda_tau=args.lambda_tau if args.lambda_tau is not None else args.lam,
            phase=getattr(args, "phase", False), K=getattr(args, "K", 0), method=args.method,
            arc_bandwidth=args.arc_bandwidth, deriv_bandwidth=args.deriv_bandwidth,
            ext_bandwidth=args.ext_bandwidth, cv=getattr(args, "cv", False) or bool(getattr(args, "cv_grid", None)),
            cv_folds=getattr(args, "cv_folds", 10), seed=args.seed if args.seed is not None else 0)
        opts.hp  # validates
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    if getattr(args, "cv_grid", None):
        opts.cv_grid = read_cv_grid(args.cv_grid)
    return opts


# ---------------------------------------------------------------- inputs

def _load_input(path):
    """Returns ``(kind, data, manifest)`` with kind ``curves`` or ``frames``."""
    p = Path(path)
    man_path = fm.find_manifest(p)
    try:
        manifest = fm.read_manifest(man_path) if man_path else {}
    except fm.FormatError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    if p.is_dir():
        files = manifest.get("files", {})
        name = files.get("curves") or files.get("frames")
        if not name:
            raise CliError(f"{p}: no curves or frames listed in manifest", EXIT_CONFIG)
        p = p / name
    if not p.exists():
        raise CliError(f"input not found: {p}", EXIT_CONFIG)
    try:
        if p.suffix == ".csv":
            return "curves", fm.read_curves_csv(p), manifest
        if p.suffix == ".json":
            return "frames", fm.read_frames_json(p), manifest
    except (fm.FormatError, ValueError, KeyError) as exc:
        raise CliError(f"cannot parse {p}: {exc}", EXIT_CONFIG) from exc
    raise CliError(f"{p}: expected a .csv (curves) or .json (frames) file", EXIT_CONFIG)


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    if args.seed is None:
        raise CliError("--seed is required for simulate", EXIT_CONFIG)
    try:
        cfg = ScenarioConfig(args.scenario, n_curves=args.n_curves, n_points=args.n_points, alpha=args.alpha,
                             sigma_e=args.sigma_e, seed=args.seed, sigma_p2=args.sigma_p2,
                             kappa_policy=args.kappa_policy)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = generate(cfg)
    files = {"truth": "truth.csv"}
    if ds.curves is not None:
        fm.write_curves_csv(out / "curves.csv", ds.curves)
        files["curves"] = "curves.csv"
    if ds.paths is not None:
        fm.write_frames_json(out / "frames.json", ds.paths)
        files["frames"] = "frames.json"
    fm.write_truth_csv(out / "truth.csv", ds.truth_grid, ds.truth)
    conf = asdict(cfg)
    fm.write_manifest(out / "manifest.json", {
        "kind": "dataset", "scenario": cfg.scenario, "seed": cfg.seed, "config": conf,
        "config_hash": fm.config_hash(conf), "scale": ds.scale, "files": files,
        "spherical": cfg.scenario == "S4"})
    print(f"wrote {', '.join(files.values())} to {out}")
    return 0


def cmd_estimate(args):
    kind, data, manifest = _load_input(args.input)
    opts = _options(args)
    spherical = args.spherical or bool(manifest.get("spherical"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with _mapper(args.threads) as mapper:
        try:
            if spherical:
                if kind != "curves":
                    raise CliError("spherical estimation needs curve input", EXIT_CONFIG)
                est = estimate_spherical(data, opts, mapper)
            else:
                arc = None
                paths = data
                if kind == "curves":
                    arc, paths = preprocess_curves(data, opts, mapper)
                est = estimate_population(paths, opts, arc, mapper)
        except FsMeanError as exc:
            print(f"estimation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_ESTIMATE
    if spherical:
        fm.write_rows(out / "theta.csv", ["s", "kg"], zip(est.grid, est.values["kg"]))
    else:
        fm.write_rows(out / "theta.csv", ["s", "kappa", "tau"],
                      zip(est.grid, est.values["kappa"], est.values["tau"]))
        fm.write_frames_json(out / "mean_path.json", [est.mean_path])
    fm.write_mean_curve(out / "mean_curve.csv", est.mean_curve)
    if est.cv_table:
        fm.write_rows(out / "cv_table.csv", ["h", "lambda_kappa", "lambda_tau", "score"], est.cv_table)
    hp = est.hyperparams
    fm.write_manifest(out / "manifest.json", {
        "kind": "estimate", "method": "frenet-serret", "spherical": spherical,
        "input": str(args.input), "dataset": manifest.get("config_hash"),
        "criterion": None if not np.isfinite(est.criterion) else est.criterion,
        "hyperparams": {"h": hp.h, "lambda_kappa": hp.lambda_kappa, "lambda_tau": hp.lambda_tau},
        "options": options_dict(opts), "diagnostics": est.diagnostics})
    print(f"wrote estimate to {out}")
    return 0


def cmd_baseline(args):
    kind, data, manifest = _load_input(args.input)
    opts = _options(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with _mapper(args.threads) as mapper:
        try:
            curves = data if kind == "curves" else None
            arc, paths = (None, data)
            if kind == "curves" and not manifest.get("spherical"):
                arc, paths = preprocess_curves(data, opts, mapper)
            elif kind == "curves":
                paths = None
            res = run_baselines(curves, paths, arc, opts, mapper, srvf=not args.no_srvf,
                                spherical=bool(manifest.get("spherical")))
        except FsMeanError as exc:
            print(f"baseline failed: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_ESTIMATE
    grid = np.linspace(0.0, 1.0, TRUTH_GRID)
    written = []
    for name, r in res.items():
        fm.write_rows(out / f"{name}_theta.csv", ["s", "kappa", "tau"], zip(grid, r["kappa"], r["tau"]))
        written.append(name)
        if "curve" in r:
            fm.write_mean_curve(out / f"{name}_mean_curve.csv", r["curve"])
    fm.write_manifest(out / "manifest.json", {"kind": "baseline", "methods": written, "input": str(args.input),
                                               "dataset": manifest.get("config_hash"),
                                               "options": options_dict(opts)})
    print(f"wrote {', '.join(written)} to {out}")
    return 0


def _read_theta(path):
    header, arr = fm.read_table(path)
    return arr[:, 0], {h: arr[:, i] for i, h in enumerate(header) if i > 0}


def cmd_eval(args):
    est_dir = Path(args.estimate)
    theta_path = est_dir / "theta.csv"
    if not theta_path.exists():
        raise CliError(f"no theta.csv in {est_dir}", EXIT_RESULTS)
    truth_path = Path(args.truth)
    if truth_path.is_dir():
        truth_path = truth_path / "truth.csv"
    if not truth_path.exists():
        raise CliError(f"truth file not found: {truth_path}", EXIT_RESULTS)
    man = fm.find_manifest(truth_path)
    scale = float(fm.read_manifest(man).get("scale", 1.0)) if man else 1.0
    g_est, est = _read_theta(theta_path)
    g_tr, truth = _read_theta(truth_path)
    if len(g_est) != len(g_tr) or np.max(np.abs(g_est - g_tr)) > 1e-9:
        raise CliError("estimate and truth grids differ", EXIT_RESULTS)
    rows = []
    try:
        for k, v in parameter_errors(est, truth, g_tr, scale).items():
            rows.append(("frenet-serret", f"{k}_l2sq", v))
        for d in args.baseline or []:
            for f in sorted(Path(d).glob("*_theta.csv")):
                g, vals = _read_theta(f)
                if len(g) != len(g_tr):
                    raise GridMismatch(f"{f}: grid differs from truth")
                for k, v in parameter_errors(vals, truth, g_tr, scale).items():
                    rows.append((f.name[:-len("_theta.csv")], f"{k}_l2sq", v))
    except GridMismatch as exc:
        raise CliError(str(exc), EXIT_RESULTS) from exc
    mc = est_dir / "mean_curve.csv"
    if mc.exists() and "kg" in est:
        rows.append(("frenet-serret", "d_norm", d_norm(fm.read_mean_curve(mc))))
        for d in args.baseline or []:
            for f in sorted(Path(d).glob("*_mean_curve.csv")):
                rows.append((f.name[:-len("_mean_curve.csv")], "d_norm", d_norm(fm.read_mean_curve(f))))
    if args.data and mc.exists():
        kind, data, _ = _load_input(args.data)
        if kind == "curves":
            mean = fm.read_mean_curve(mc)
            sr = [srvf_distance(mean, c).distance for c in data]
            rows.append(("frenet-serret", "srvf_distance_mean", float(np.mean(sr))))
            l2 = []
            for c in data:
                u = np.linspace(0.0, 1.0, len(c.points))
                l2.append(l2_sq_distance_on(mean.grid, mean.points, u, c.points))
            rows.append(("frenet-serret", "l2_distance_mean", float(np.mean(l2))))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fm.write_rows(out, ["method", "metric", "value"], rows)
    for r in rows:
        print(f"{r[0]:>16s}  {r[1]:<22s} {r[2]:.6g}")
    return 0


def cmd_export_plot(args):
    params, curves = [], []
    for d in args.results:
        d = Path(d)
        for f in sorted(d.glob("*theta.csv")):
            method = "frenet-serret" if f.name == "theta.csv" else f.name[:-len("_theta.csv")]
            g, vals = _read_theta(f)
            k = vals.get("kappa", vals.get("kg"))
            t = vals.get("tau", np.full_like(g, np.nan))
            params += [(str(d.name), method, s, a, b) for s, a, b in zip(g, k, t)]
        for f in sorted(d.glob("*mean_curve.csv")):
            method = "frenet-serret" if f.name == "mean_curve.csv" else f.name[:-len("_mean_curve.csv")]
            c = fm.read_mean_curve(f)
            curves += [(str(d.name), method, s, *p) for s, p in zip(c.grid, c.points)]
    if not params and not curves:
        raise CliError("no result files found", EXIT_RESULTS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fm.write_rows(out / "parameters.csv", ["source", "method", "s", "kappa", "tau"], params)
    fm.write_rows(out / "curves.csv", ["source", "method", "s", "x", "y", "z"], curves)
    print(f"wrote parameters.csv and curves.csv to {out}")
    return 0


def cmd_run_table(args):
    opts = _options(args)
    extra = {k: v for k, v in (("n_curves", args.n_curves), ("n_points", args.n_points), ("alpha", args.alpha),
                                ("sigma_e", args.sigma_e)) if v is not None}
    try:
        ScenarioConfig(args.scenario, **extra)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    with _mapper(args.threads) as mapper:
        try:
            table = run_table(args.scenario, args.reps, opts, mapper, srvf=args.srvf, **extra)
        except FsMeanError as exc:
            print(f"estimation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_ESTIMATE
    rows = []
    for k, vals in table.items():
        m, s = repetition_stats(vals)
        rows.append((args.scenario, k, m, s, len(vals)))
        print(f"{args.scenario:>6s}  {k:<18s} {m:.4g} ({s:.2g})  n={len(vals)}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        fm.write_rows(out, ["scenario", "metric", "mean", "std", "reps"], rows)
    return 0


# ---------------------------------------------------------------- parser

def _estimation_flags(p):
    p.add_argument("--h", type=float, default=0.05, help="kernel half-width for pseudo-observations")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-8, help="roughness penalty for both components")
    p.add_argument("--lambda-kappa", type=float, default=None)
    p.add_argument("--lambda-tau", type=float, default=None)
    p.add_argument("--method", choices=("lp", "gs"), default="lp", help="frame estimator for curve input")
    p.add_argument("--arc-bandwidth", type=float, default=0.05, help="fraction of the time span")
    p.add_argument("--deriv-bandwidth", type=float, default=0.08, help="on normalized arclength")
    p.add_argument("--ext-bandwidth", type=float, default=0.08, help="for extrinsic formulas")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="fsmean", description="Frenet-Serret mean shapes of curve populations")
    parser.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a scenario dataset")
    p.add_argument("--scenario", required=True)
    p.add_argument("--n-curves", type=int, default=25)
    p.add_argument("--n-points", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.0, help="frame-noise concentration, 0 = none")
    p.add_argument("--sigma-e", type=float, default=0.0)
    p.add_argument("--sigma-p2", type=float, default=None)
    p.add_argument("--kappa-policy", choices=("reject", "abs"), default="reject")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="Frenet-Serret mean of a dataset")
    p.add_argument("--input", required=True, help="curves .csv, frames .json, or dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--phase", action="store_true", help="align parameters before the final fit")
    p.add_argument("--K", type=int, default=0, help="principal components used during alignment")
    p.add_argument("--cv", action="store_true", help="select hyperparameters by cross-validation")
    p.add_argument("--cv-grid", default=None, help="hyperparameter grid file")
    p.add_argument("--cv-folds", type=int, default=10)
    p.add_argument("--spherical", action="store_true")
    _estimation_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("baseline", help="arithmetic, SRVF and individual means")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-srvf", action="store_true")
    _estimation_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="errors against ground truth")
    p.add_argument("--estimate", required=True, help="estimate directory")
    p.add_argument("--truth", required=True, help="truth.csv or dataset directory")
    p.add_argument("--baseline", action="append", help="baseline directory (repeatable)")
    p.add_argument("--data", default=None, help="dataset curves for distance metrics")
    p.add_argument("--out", required=True, help="metrics CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-plot", help="tidy CSVs for plotting")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_plot)

    p = sub.add_parser("run-table", help="repeat simulate/estimate/eval over seeds")
    p.add_argument("--scenario", required=True)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--n-curves", type=int, default=None)
    p.add_argument("--n-points", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--sigma-e", type=float, default=None)
    p.add_argument("--phase", action="store_true")
    p.add_argument("--K", type=int, default=0)
    p.add_argument("--cv", action="store_true")
    p.add_argument("--cv-folds", type=int, default=10)
    p.add_argument("--srvf", action="store_true", help="include the SRVF mean (slow)")
    p.add_argument("--out", default=None)
    _estimation_flags(p)
    p.set_defaults(func=cmd_run_table)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        first = parser.parse_args(argv)
        if first.config:
            cfg = read_config_file(first.config)
            subparser = parser._subparsers._group_actions[0].choices[first.command]
            _apply_config(subparser, cfg)
            args = parser.parse_args(argv)
        else:
            args = first
        if args.command == "simulate" and args.scenario not in SCENARIOS:
            raise CliError(f"unknown scenario {args.scenario!r}; valid: {', '.join(SCENARIOS)}", EXIT_CONFIG)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
