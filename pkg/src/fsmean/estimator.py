"""Population mean of curvature and torsion from Frenet paths.

Local log-increments of each path act as noisy readings of ``(kappa, tau)``
at the midpoint of each pair of nearby frames. Two weighted penalized cubic
smoothing splines are fitted to them, one per component.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import FoldTooSmall, RankDeficient
from .frenet import (
    DEFAULT_STEP,
    FrenetPath,
    ThetaFunction,
    fundamental_frames,
    reconstruct_curve,
    solve_frenet_path,
)
from .so3 import exp_so3, geodesic_dist_unchecked, hat, karcher_mean, log_so3_masked, vee

DEFAULT_KNOTS = 40


@dataclass(frozen=True)
class Hyperparams:
    h: float
    lambda_kappa: float
    lambda_tau: float

    def __post_init__(self):
        if not 0 < self.h <= 1:
            raise ValueError("h must lie in (0, 1]")
        if self.lambda_kappa < 0 or self.lambda_tau < 0:
            raise ValueError("penalties must be non-negative")


@dataclass
class PseudoObservationSet:
    """Records ``(curve, u, v, r1, r2, r3, w)`` with the frame indices they use.

    ``j`` and ``q`` are the grid indices of the frames at ``s`` and ``t``.
    """

    curve: np.ndarray
    j: np.ndarray
    q: np.ndarray
    u: np.ndarray
    v: np.ndarray
    r: np.ndarray
    w: np.ndarray
    n_dropped: int = 0

    def __len__(self):
        return len(self.u)

    def subset(self, mask):
        return PseudoObservationSet(
            self.curve[mask], self.j[mask], self.q[mask], self.u[mask],
            self.v[mask], self.r[mask], self.w[mask], self.n_dropped,
        )


@dataclass
class MeanShapeResult:
    theta: ThetaFunction
    mean_path: FrenetPath
    mean_curve: object
    criterion_value: float = float("nan")
    hyperparams: Hyperparams | None = None
    diagnostics: dict = field(default_factory=dict)


def epanechnikov_h(u, h):
    """``K_h(u) = K(u / h) / h`` with ``K(x) = 3/4 (1 - x^2)`` on ``[-1, 1]``."""
    x = np.asarray(u, dtype=float) / h
    return np.where(np.abs(x) <= 1.0, 0.75 * (1.0 - x * x), 0.0) / h


def _pairs(grid, h):
    """Index pairs ``(j, q)`` with ``0 < grid[q] - grid[j] <= h`` (forward only)."""
    js, qs = [], []
    for d in range(1, len(grid)):
        gap = grid[d:] - grid[:-d]
        ok = gap <= h * (1 + 1e-12)
        if not np.any(ok):
            break
        j = np.flatnonzero(ok)
        js.append(j)
        qs.append(j + d)
    if not js:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    return np.concatenate(js), np.concatenate(qs)


def raw_log_increments(paths, h, boundary_trim=0.0):
    """Pseudo-observations from every ordered pair of frames at most ``h`` apart.

    ``R = -(1/(t - s)) log(Q(t)^T Q(s))`` with weight
    ``2 / (n_i^2) K_h(t - s) (t - s)^2``. Both orders of a pair give the same
    ``R``, ``v`` and weight, so each pair produces two identical records apart
    from the sign of ``u``. Pairs whose relative rotation is close to pi are
    dropped and counted. ``boundary_trim`` zeroes the weight of records
    touching the first or last fraction of a path's frames.
    """
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    parts = []
    dropped = 0
    for i, path in enumerate(paths):
        g, Q = path.grid, path.frames
        n = len(g)
        if n < 3:
            raise ValueError("each path needs at least 3 frames")
        j, q = _pairs(g, h)
        u = g[q] - g[j]
        S, near_pi = log_so3_masked(np.swapaxes(Q[q], -1, -2) @ Q[j])
        keep = ~near_pi
        dropped += 2 * int(near_pi.sum())
        j, q, u, S = j[keep], q[keep], u[keep], S[keep]
        r = -vee(S) / u[:, None]
        w = 2.0 / (n * n) * epanechnikov_h(u, h) * u * u
        if boundary_trim > 0:
            m = int(np.ceil(boundary_trim * n))
            edge = (j < m) | (q < m) | (j >= n - m) | (q >= n - m)
            w = np.where(edge, 0.0, w)
        v = 0.5 * (g[q] + g[j])
        parts.append((np.full(2 * len(u), i), np.concatenate([j, q]), np.concatenate([q, j]),
                      np.concatenate([u, -u]), np.concatenate([v, v]),
                      np.concatenate([r, r]), np.concatenate([w, w])))
    cols = [np.concatenate(c) for c in zip(*parts)]
    return PseudoObservationSet(*cols, n_dropped=dropped)


def spline_knots(n_knots=DEFAULT_KNOTS, domain=(0.0, 1.0)):
    lo, hi = domain
    inner = np.linspace(lo, hi, n_knots + 2)[1:-1]
    return np.concatenate([[lo] * 4, inner, [hi] * 4])


def roughness_matrix(knots):
    """Gram matrix of second derivatives, ``int B_i'' B_j''``.

    Second derivatives of cubic B-splines are piecewise linear, so two-point
    Gauss quadrature per knot interval is exact.
    """
    br = np.unique(knots)
    a, b = br[:-1], br[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    g = 1.0 / np.sqrt(3.0)
    x = np.concatenate([mid - half * g, mid + half * g])
    wq = np.concatenate([half, half])
    nb = len(knots) - 4
    D2 = np.stack([BSpline(knots, np.eye(nb)[k], 3).derivative(2)(x) for k in range(nb)], axis=1)
    return D2.T @ (wq[:, None] * D2)


def _design(v, knots):
    lo, hi = knots[0], knots[-1]
    return BSpline.design_matrix(np.clip(v, lo, hi), knots, 3).toarray()


def _penalized_fit(B, w, y, lam, Omega):
    A = B.T @ (w[:, None] * B) + lam * Omega
    scale = np.max(np.abs(np.diag(A)))
    if not np.isfinite(scale) or scale <= 0 or np.linalg.cond(A / scale) > 1e13:
        raise RankDeficient("penalized normal system is singular; too few weighted records")
    return np.linalg.solve(A, B.T @ (w * y))


def fit_theta_splines(obs, hp, n_knots=DEFAULT_KNOTS, domain=(0.0, 1.0)):
    """Two independent penalized weighted spline fits (r1 -> kappa, r2 -> tau)."""
    w = obs.w
    if int(np.sum(w > 0)) < n_knots + 4:
        raise RankDeficient("not enough records with positive weight")
    knots = spline_knots(n_knots, domain)
    B = _design(obs.v, knots)
    Om = roughness_matrix(knots)
    ck = _penalized_fit(B, w, obs.r[:, 0], hp.lambda_kappa, Om)
    ct = _penalized_fit(B, w, obs.r[:, 1], hp.lambda_tau, Om)
    return ThetaFunction(BSpline(knots, ck, 3), BSpline(knots, ct, 3), tuple(domain))


def estimate_mean_theta(paths, hp, n_knots=DEFAULT_KNOTS, boundary_trim=0.0):
    obs = raw_log_increments(paths, hp.h, boundary_trim)
    return fit_theta_splines(obs, hp, n_knots)


def _criterion(theta, paths, h, exact, max_step):
    total = 0.0
    dropped = 0
    for path in paths:
        g, Q = path.grid, path.frames
        n = len(g)
        j, q = _pairs(g, h)
        if len(j) == 0:
            continue
        u = g[q] - g[j]
        if exact:
            P = fundamental_frames(theta, g, max_step)
            E = np.swapaxes(P[j], -1, -2) @ P[q]
        else:
            E = exp_so3(u[:, None, None] * hat(theta.generator(0.5 * (g[j] + g[q]))))
        S, near_pi = log_so3_masked(np.swapaxes(Q[q], -1, -2) @ Q[j] @ E)
        val = epanechnikov_h(u, h) * np.sum(S * S, axis=(1, 2))
        # each unordered pair stands for two ordered pairs with equal terms
        total += 2.0 * np.sum(val[~near_pi]) / (n * n)
        dropped += 2 * int(near_pi.sum())
    return total, dropped


def criterion_exact(theta, paths, h, max_step=DEFAULT_STEP, return_dropped=False):
    """Self-prediction criterion with the flow computed by the ODE solver."""
    val, dropped = _criterion(theta, paths, h, True, max_step)
    return (val, dropped) if return_dropped else val


def criterion_approx(theta, paths, h, return_dropped=False):
    """Same criterion with the flow replaced by one midpoint exponential."""
    val, dropped = _criterion(theta, paths, h, False, DEFAULT_STEP)
    return (val, dropped) if return_dropped else val


def penalty(theta, hp):
    """Roughness penalty ``lk int kappa''^2 + lt int tau''^2`` of a spline theta."""
    out = 0.0
    for spl, lam in ((theta.kappa, hp.lambda_kappa), (theta.tau, hp.lambda_tau)):
        Om = roughness_matrix(spl.t)
        out += lam * float(spl.c @ Om @ spl.c)
    return out


def mean_shape(theta, initial_frames, initial_points, grid, max_step=DEFAULT_STEP):
    """Mean frame path and curve from the Karcher-mean initial frame."""
    Q0 = karcher_mean(np.asarray(initial_frames, dtype=float))
    X0 = np.mean(np.asarray(initial_points, dtype=float).reshape(-1, 3), axis=0)
    path = solve_frenet_path(theta, Q0, grid, max_step)
    curve = reconstruct_curve(theta, X0, Q0, grid, max_step)
    return MeanShapeResult(theta, path, curve)


def default_grid(hs=None, lambdas=None, tied=True):
    """Candidate hyperparameters on log-spaced defaults.

    With ``tied`` the two penalties share one value; otherwise the full
    product of ``lambdas`` for each component is used.
    """
    hs = np.geomspace(0.016, 0.1, 4) if hs is None else hs
    lambdas = np.geomspace(1e-10, 1e-6, 5) if lambdas is None else lambdas
    if tied:
        return [Hyperparams(float(h), float(l), float(l)) for h in hs for l in lambdas]
    return [Hyperparams(float(h), float(a), float(b))
            for h in hs for a in lambdas for b in lambdas]


def make_folds(paths, K, rng):
    """Random partition of all ``(curve, frame)`` indices into ``K`` folds."""
    idx = np.array([(i, j) for i, p in enumerate(paths) for j in range(len(p))])
    perm = rng.permutation(len(idx))
    folds = [idx[np.sort(f)] for f in np.array_split(perm, K)]
    for f in folds:
        for i, p in enumerate(paths):
            if np.sum(f[:, 0] == i) >= len(p):
                raise FoldTooSmall(f"a fold holds out every frame of curve {i}")
    return folds


def _predict_frames(theta, paths, held, init, max_step):
    """Predicted frames of each curve from its earliest retained frame."""
    preds = []
    for i, p in enumerate(paths):
        keep = np.ones(len(p), dtype=bool)
        keep[held[i]] = False
        j0 = int(np.flatnonzero(keep)[0])
        P = fundamental_frames(theta, p.grid, max_step)
        preds.append((p.frames[j0] @ P[j0].T, P))
    if init == "population":
        Q0 = karcher_mean(np.stack([q for q, _ in preds]))
        preds = [(Q0, P) for _, P in preds]
    elif init != "curve":
        raise ValueError("init must be 'curve' or 'population'")
    return [Q0 @ P for Q0, P in preds]


def _cv_score(args):
    paths, obs, fold, hp, n_knots, init, max_step = args
    held = [fold[fold[:, 0] == i, 1] for i in range(len(paths))]
    out_mask = np.zeros(len(obs), dtype=bool)
    for i, js in enumerate(held):
        if len(js):
            sel = obs.curve == i
            out_mask[sel] = np.isin(obs.j[sel], js) | np.isin(obs.q[sel], js)
    try:
        theta = fit_theta_splines(obs.subset(~out_mask), hp, n_knots)
    except RankDeficient:
        return np.inf
    preds = _predict_frames(theta, paths, held, init, max_step)
    score = 0.0
    for i, js in enumerate(held):
        if len(js):
            d = geodesic_dist_unchecked(paths[i].frames[js], preds[i][js])
            score += float(np.sum(d * d))
    return score


def cross_validate(paths, candidates, K=10, rng=None, n_knots=DEFAULT_KNOTS,
                   boundary_trim=0.0, init="curve", max_step=DEFAULT_STEP, mapper=map):
    """K-fold selection of hyperparameters by held-out frame prediction.

    Returns ``(best, table)`` where ``table`` is a list of
    ``(h, lambda_kappa, lambda_tau, score)`` rows in candidate order. Ties go
    to the larger penalties, then the larger ``h``. ``mapper`` may be any
    order-preserving map (e.g. ``ThreadPoolExecutor.map``).
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("empty candidate grid")
    if any(len(p) < K for p in paths):
        raise FoldTooSmall("every path needs at least K frames")
    rng = np.random.default_rng(0) if rng is None else rng
    folds = make_folds(paths, K, rng)
    obs_by_h = {}
    for hp in candidates:
        if hp.h not in obs_by_h:
            obs_by_h[hp.h] = raw_log_increments(paths, hp.h, boundary_trim)
    jobs = [(paths, obs_by_h[hp.h], f, hp, n_knots, init, max_step)
            for hp, f in itertools.product(candidates, folds)]
    scores = np.array(list(mapper(_cv_score, jobs)), dtype=float).reshape(len(candidates), K)
    totals = scores.sum(axis=1)
    table = [(hp.h, hp.lambda_kappa, hp.lambda_tau, float(s)) for hp, s in zip(candidates, totals)]
    best = min(range(len(candidates)),
               key=lambda k: (totals[k], -candidates[k].lambda_kappa,
                              -candidates[k].lambda_tau, -candidates[k].h))
    return candidates[best], table
