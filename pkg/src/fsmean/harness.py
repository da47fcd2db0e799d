"""End-to-end pipelines shared by the command line and the acceptance suite.

Everything here is a pure function of its inputs; ``mapper`` lets the caller
supply an order-preserving parallel map.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .alignment import estimate_mean_theta_phase
from .baselines import arithmetic_mean, extrinsic_of_curve, individual_aggregates, srvf_karcher_mean
from .estimator import (Hyperparams, criterion_exact, cross_validate, default_grid, estimate_mean_theta,
                        mean_shape)
from .frenet import ArclengthCurve
from .metrics import d_norm, l2_sq_distance
from .preprocess import extrinsic_theta, frames_from_samples, local_poly_derivatives
from .simgen import TRUTH_GRID, ScenarioConfig, generate
from .spherical import estimate_mean_kg, mean_spherical_curve, spherical_frames_from_samples


@dataclass
class PipelineOptions:
    """Estimation settings.

    Bandwidths for arclength are fractions of each curve's time span;
    derivative bandwidths are on normalized arclength.
    """

    h: float = 0.05
    lambda_kappa: float = 1e-8
    lambda_tau: float = 1e-8
    phase: bool = False
    K: int = 0
    method: str = "lp"
    arc_bandwidth: float = 0.05
    deriv_bandwidth: float = 0.08
    ext_bandwidth: float = 0.08
    cv: bool = False
    cv_grid: list | None = None
    cv_folds: int = 10
    seed: int = 0
    boundary_trim: float = 0.0

    @property
    def hp(self):
        return Hyperparams(self.h, self.lambda_kappa, self.lambda_tau)


@dataclass
class EstimateOutput:
    grid: np.ndarray
    values: dict
    mean_path: object = None
    mean_curve: ArclengthCurve | None = None
    criterion: float = float("nan")
    hyperparams: Hyperparams | None = None
    cv_table: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def _span_bandwidth(curve, frac):
    return frac * (curve.times[-1] - curve.times[0])


def preprocess_curves(curves, opts, mapper=map):
    """Euclidean samples to ``(arclength curves, frame paths)``."""
    def one(c):
        return frames_from_samples(c, _span_bandwidth(c, opts.arc_bandwidth), opts.deriv_bandwidth,
                                   method=opts.method)
    out = list(mapper(one, curves))
    return [a for a, _ in out], [p for _, p in out]


def extrinsic_estimates(arc_curves, bandwidth):
    """Per-curve extrinsic ``(s, kappa, tau)`` on normalized arclength units."""
    res = []
    for c in arc_curves:
        k, t = extrinsic_theta(local_poly_derivatives(c, bandwidth))
        # the formulas give physical units; scale to the unit-length parameter
        res.append((c.grid, k * c.length, t * c.length))
    return res


def _select(paths, opts, mapper):
    if not opts.cv:
        return opts.hp, []
    cands = opts.cv_grid or default_grid()
    best, table = cross_validate(paths, cands, K=opts.cv_folds, rng=np.random.default_rng(opts.seed),
                                 boundary_trim=opts.boundary_trim, mapper=mapper)
    return best, table


def estimate_population(paths, opts, arc_curves=None, mapper=map, grid=None):
    """Frenet-Serret mean of frame paths (optionally with alignment and CV)."""
    grid = np.linspace(0.0, 1.0, TRUTH_GRID) if grid is None else grid
    hp, table = _select(paths, opts, mapper)
    diag = {}
    if opts.phase:
        theta, warps, res = estimate_mean_theta_phase(paths, hp, K=opts.K, boundary_trim=opts.boundary_trim,
                                                      mapper=mapper)
        diag.update(alignment_iterations=res.n_iter, alignment_converged=bool(res.converged),
                    alignment_aborted=bool(res.aborted))
    else:
        theta = estimate_mean_theta(paths, hp, boundary_trim=opts.boundary_trim)
    crit, dropped = criterion_exact(theta, paths, hp.h, return_dropped=True)
    diag["dropped_pairs"] = int(dropped)
    starts = [p.frames[0] for p in paths]
    x0 = [c.points[0] for c in arc_curves] if arc_curves else np.zeros((1, 3))
    ms = mean_shape(theta, starts, x0, grid)
    curve = ms.mean_curve
    if arc_curves:
        L = float(np.mean([c.length for c in arc_curves]))
        curve = ArclengthCurve(curve.grid, curve.points[0] + L * (curve.points - curve.points[0]), L)
    return EstimateOutput(grid, {"kappa": theta.kappa_at(grid), "tau": theta.tau_at(grid)}, ms.mean_path,
                          curve, float(crit), hp, table, diag)


def estimate_spherical(curves, opts, mapper=map, grid=None):
    grid = np.linspace(0.0, 1.0, TRUTH_GRID) if grid is None else grid

    def one(c):
        return spherical_frames_from_samples(c, _span_bandwidth(c, opts.arc_bandwidth), opts.deriv_bandwidth)
    out = list(mapper(one, curves))
    paths = [p for _, p in out]
    hp, table = _select(paths, opts, mapper)
    kg = estimate_mean_kg(paths, hp, boundary_trim=opts.boundary_trim)
    curve = mean_spherical_curve(kg, paths, np.linspace(0.0, 1.0, len(curves[0].points)))
    return EstimateOutput(grid, {"kg": kg(grid)}, None, curve, float("nan"), hp, table, dict(kg.diagnostics))


def run_baselines(curves, paths=None, arc_curves=None, opts=None, mapper=map, grid=None, srvf=True,
                  spherical=False):
    """Arithmetic and SRVF means with their extrinsic parameters, plus individual aggregates."""
    opts = opts or PipelineOptions()
    grid = np.linspace(0.0, 1.0, TRUTH_GRID) if grid is None else grid
    out = {}
    if curves:
        means = {"arithmetic": arithmetic_mean(curves, center=not spherical)}
        if srvf:
            means["srvf"] = srvf_karcher_mean(curves, mapper=mapper).curve
        for name, m in means.items():
            s, k, t = extrinsic_of_curve(m, opts.ext_bandwidth, n_grid=len(grid))
            out[name] = {"curve": m, "kappa": k, "tau": t}
    if paths:
        ext = extrinsic_estimates(arc_curves, opts.ext_bandwidth) if arc_curves else None
        ind, ind_ext = individual_aggregates(paths, opts.hp, grid, ext)
        out["individual"] = {"kappa": ind[:, 0], "tau": ind[:, 1]}
        if ind_ext is not None:
            out["individual_ext"] = {"kappa": ind_ext[:, 0], "tau": ind_ext[:, 1]}
    return out


def parameter_errors(values, truth, grid, scale=1.0):
    """Squared L2 errors of each shared key, on ``(f - g) / scale``."""
    return {k: l2_sq_distance(np.asarray(values[k]) / scale, np.asarray(truth[k]) / scale, grid)
            for k in ("kappa", "tau", "kg") if k in values and k in truth}


def run_repetition(config, opts=None, mapper=map, baselines=True, srvf=False):
    """Simulate, estimate and score one repetition; returns a flat metrics dict."""
    opts = opts or PipelineOptions()
    ds = generate(config)
    tg = ds.truth_grid
    m = {}
    if config.scenario == "S4":
        est = estimate_spherical(ds.curves, opts, mapper, tg)
        m["kg_pop"] = parameter_errors(est.values, ds.truth, tg)["kg"]
        m["dnorm_fs"] = d_norm(est.mean_curve)
        if baselines:
            am = arithmetic_mean(ds.curves, center=False)
            m["dnorm_arithmetic"] = d_norm(am)
            if srvf:
                m["dnorm_srvf"] = d_norm(srvf_karcher_mean(ds.curves, mapper=mapper).curve)
        return m
    arc = None
    paths = ds.paths
    if paths is None:
        arc, paths = preprocess_curves(ds.curves, opts, mapper)
    est = estimate_population(paths, opts, arc, mapper, tg)
    for k, v in parameter_errors(est.values, ds.truth, tg, ds.scale).items():
        m[f"{k}_pop"] = v
    if baselines:
        b = run_baselines(ds.curves if srvf else None, paths, arc, opts, mapper, tg, srvf)
        for name in ("individual", "individual_ext"):
            if name in b:
                for k, v in parameter_errors(b[name], ds.truth, tg, ds.scale).items():
                    m[f"{k}_{'ind' if name == 'individual' else 'ext'}"] = v
    return m


def run_table(scenario, reps=10, opts=None, mapper=map, baselines=True, srvf=False, **config):
    """Metrics for seeds ``0..reps-1``; returns ``{metric: [values]}``."""
    table = {}
    for seed in range(reps):
        cfg = ScenarioConfig(scenario, seed=seed, **config)
        for k, v in run_repetition(cfg, opts, mapper, baselines, srvf).items():
            table.setdefault(k, []).append(v)
    return table


def options_dict(opts):
    d = asdict(opts)
    d.pop("cv_grid", None)
    return d
