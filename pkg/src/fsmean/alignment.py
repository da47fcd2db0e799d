"""Phase variation: space warps acting on curvature and torsion.

A warp ``gamma`` acts on sampled parameters by ``theta -> theta(gamma) gamma'``.
Optimal warps are found by dynamic programming over monotone lattice paths
with a fixed set of rational slopes, then refined over smooth warps so that
``gamma'`` is accurate (the action multiplies by it). The same engine serves the square-root-velocity action
(factor ``sqrt(gamma')``) through the ``power`` argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline, CubicSpline, PchipInterpolator
from scipy.optimize import minimize

from .estimator import DEFAULT_KNOTS, PseudoObservationSet, fit_theta_splines, raw_log_increments

SLOPES = ((1, 3), (1, 2), (2, 3), (1, 1), (3, 2), (2, 1), (3, 1))


@dataclass
class Warping:
    """Increasing map of ``[0, 1]`` onto itself, sampled on a uniform grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if abs(self.values[0]) > 1e-12 or abs(self.values[-1] - 1.0) > 1e-12:
            raise ValueError("a warping must fix 0 and 1")
        if np.any(np.diff(self.values) < 1e-9):
            raise ValueError("a warping must be strictly increasing")

    @classmethod
    def identity(cls, grid):
        grid = np.asarray(grid, dtype=float)
        return cls(grid, grid.copy())

    @classmethod
    def from_function(cls, fn, grid):
        return cls(grid, fn(np.asarray(grid, dtype=float)))

    # Evaluation, inversion and composition use monotone cubic (PCHIP)
    # interpolation, so results stay increasing; the derivative uses an
    # interpolating cubic spline, which is fourth-order accurate on smooth
    # warps. Linear interpolation here broke the group law at the 1e-3 level.

    def __call__(self, s):
        return _fixed_ends(PchipInterpolator(self.grid, self.values)(s), s)

    def derivative(self):
        return CubicSpline(self.grid, self.values)(self.grid, 1)

    def inverse(self):
        return Warping(self.grid, _fixed_ends(PchipInterpolator(self.values, self.grid)(self.grid), self.grid))

    def compose(self, other):
        """``self o other``."""
        return Warping(self.grid, _fixed_ends(self(other.values), other.values))


def _fixed_ends(vals, at):
    """Snap values at the endpoints 0 and 1 exactly (interpolants may round)."""
    vals = np.array(vals, dtype=float)
    at = np.asarray(at, dtype=float)
    if vals.ndim:
        vals[at <= 0.0] = 0.0
        vals[at >= 1.0] = 1.0
    return vals


@dataclass
class FpcaModel:
    """Mean and principal components of sampled (possibly multi-channel) functions.

    ``components`` has shape ``(K, M, C)`` and is orthonormal for the inner
    product ``sum f g / (M - 1)``.
    """

    grid: np.ndarray
    mean: np.ndarray
    components: np.ndarray
    scores: np.ndarray
    eigenvalues: np.ndarray

    def reconstruct(self):
        return self.mean + np.einsum("nk,kmc->nmc", self.scores, self.components)


@dataclass
class AlignmentResult:
    aligned: np.ndarray
    warpings: list
    template: np.ndarray
    converged: bool
    n_iter: int
    objective: list = field(default_factory=list)
    aborted: bool = False


def _as3d(y):
    y = np.asarray(y, dtype=float)
    return y[..., None] if y.ndim == 2 else y


def warp_action(theta_values, gamma):
    """``theta(gamma(s)) gamma'(s)`` on the warp's grid.

    ``theta_values`` is ``(M,)`` or ``(M, C)`` sampled on ``gamma.grid``.
    """
    y = np.asarray(theta_values, dtype=float)
    f = CubicSpline(gamma.grid, y, axis=0)(gamma.values)
    d = gamma.derivative()
    return f * (d if y.ndim == 1 else d[:, None])


def fpca(functions, K=None, var_frac=0.9, max_K=5, grid=None):
    """Principal components of ``(N, M)`` or ``(N, M, C)`` sampled functions.

    With ``K=None`` the smallest number of components explaining ``var_frac``
    of the variance is used, capped at ``max_K`` and ``N - 1``.
    """
    Y = _as3d(functions)
    N, M, C = Y.shape
    grid = np.linspace(0.0, 1.0, M) if grid is None else np.asarray(grid, dtype=float)
    delta = 1.0 / (M - 1)
    mean = Y.mean(axis=0)
    Z = (Y - mean).reshape(N, M * C) * np.sqrt(delta)
    _, sv, Vt = np.linalg.svd(Z, full_matrices=False)
    ev = sv ** 2 / max(N - 1, 1)
    total = ev.sum()
    if K is None:
        if total <= 1e-300:
            K = 0
        else:
            K = int(np.searchsorted(np.cumsum(ev) / total, var_frac - 1e-12) + 1)
            K = min(K, max_K)
    K = int(min(K, max(N - 1, 0), len(sv)))
    comps = (Vt[:K] / np.sqrt(delta)).reshape(K, M, C)
    scores = (Y - mean).reshape(N, M * C) @ comps.reshape(K, M * C).T * delta
    return FpcaModel(grid, mean, comps, scores, ev[:K])


def _interp_rows(y, x):
    """Linear interpolation of ``y`` (``(M, C)``, uniform on [0, M-1]) at index positions ``x``."""
    M = len(y)
    x = np.clip(x, 0.0, M - 1.0)
    i0 = np.minimum(np.floor(x).astype(int), M - 2)
    f = (x - i0)[..., None]
    return y[i0] * (1.0 - f) + y[i0 + 1] * f


def _segment_cost(target, source, i_mid, j_mid, slope, power, delta):
    diff = _interp_rows(target, i_mid) - _interp_rows(source, j_mid) * (slope ** power)[..., None]
    return np.sum(diff * diff, axis=-1) * delta


def warp_objective(target, source, gamma, power=1.0):
    """Discrete ``||target - (source o gamma) (gamma')^power||^2`` used by the DP.

    ``gamma`` is taken piecewise linear on its grid; the integrand is evaluated
    at the midpoint of every grid interval.
    """
    tgt, src = _as3d(target[None])[0], _as3d(source[None])[0]
    M = len(tgt)
    delta = 1.0 / (M - 1)
    g = np.asarray(gamma.values if isinstance(gamma, Warping) else gamma) * (M - 1)
    slope = np.diff(g)
    cost = _segment_cost(tgt, src, np.arange(M - 1) + 0.5, 0.5 * (g[:-1] + g[1:]), slope, power, delta)
    return float(cost.sum())


def _dp_path(tgt, src, power, slopes):
    M = len(tgt)
    delta = 1.0 / (M - 1)
    idx = np.arange(M, dtype=float)
    costs = []
    for di, dj in slopes:
        # target positions depend on i only, source positions on j only
        f = (dj / di) ** power
        c = np.zeros((M, M))
        for u in range(di):
            T = _interp_rows(tgt, idx - di + u + 0.5)
            S = _interp_rows(src, idx - dj + (u + 0.5) * dj / di) * f
            c += (np.sum(T * T, axis=1)[:, None] + np.sum(S * S, axis=1)[None, :] - 2.0 * T @ S.T) * delta
        costs.append(c)
    E = np.full((M, M), np.inf)
    E[0, 0] = 0.0
    back = np.full((M, M), -1, dtype=int)
    for i in range(1, M):
        for k, (di, dj) in enumerate(slopes):
            if di > i:
                continue
            cand = np.full(M, np.inf)
            cand[dj:] = E[i - di, :-dj] + costs[k][i, dj:]
            better = cand < E[i]
            E[i, better] = cand[better]
            back[i, better] = k
    path = [(M - 1, M - 1)]
    i, j = M - 1, M - 1
    while (i, j) != (0, 0):
        di, dj = slopes[back[i, j]]
        i, j = i - di, j - dj
        path.append((i, j))
    path = np.array(path[::-1], dtype=float)
    return np.interp(np.arange(M), path[:, 0], path[:, 1])


def _refine(tgt, src, g, power, n_cand=11):
    """One red-black pass of local search for each interior node."""
    M = len(g)
    delta = 1.0 / (M - 1)
    for parity in (1, 2):
        k = np.arange(parity, M - 1, 2)
        lo, hi = g[k - 1], g[k + 1]
        frac = np.linspace(0.0, 1.0, n_cand + 2)[1:-1]
        cand = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
        cand = np.concatenate([g[k, None], cand], axis=1)

        def local(pos):
            a = _segment_cost(tgt, src, (k - 0.5)[:, None] + 0 * pos, 0.5 * (lo[:, None] + pos),
                              pos - lo[:, None], power, delta)
            b = _segment_cost(tgt, src, (k + 0.5)[:, None] + 0 * pos, 0.5 * (pos + hi[:, None]),
                              hi[:, None] - pos, power, delta)
            return a + b

        best = np.argmin(local(cand), axis=1)
        g[k] = cand[np.arange(len(k)), best]
    return g


def _smooth_refine(tgt, src, g, power, n_basis=16):
    """Continuous refinement over smooth warps.

    Node increments are a softmax of a cubic spline evaluated at interval
    midpoints, so every candidate is strictly increasing and fixes 0 and 1.
    Starts from the spline closest to the log-slopes of ``g``.
    """
    M = len(g)
    delta = 1.0 / (M - 1)
    mids = (np.arange(M - 1) + 0.5) / (M - 1)
    knots = np.concatenate([[0.0] * 4, np.linspace(0, 1, n_basis - 2)[1:-1], [1.0] * 4])
    B = BSpline.design_matrix(mids, knots, 3).toarray()
    slopes = np.maximum(np.diff(g), 1e-6)
    c0 = np.linalg.lstsq(B, np.log(slopes), rcond=None)[0]
    i_mid = np.arange(M - 1) + 0.5
    t_mid = _interp_rows(tgt, i_mid)

    def obj(c):
        f = B @ c
        e = np.exp(f - f.max())
        p = e / e.sum()
        inc = (M - 1) * p
        G = np.concatenate([[0.0], np.cumsum(inc)[:-1]])
        jm = np.clip(G + 0.5 * inc, 0.0, M - 1.0)
        i0 = np.minimum(np.floor(jm).astype(int), M - 2)
        fr = (jm - i0)[:, None]
        S = src[i0] * (1.0 - fr) + src[i0 + 1] * fr
        dS = src[i0 + 1] - src[i0]
        sp = inc ** power
        r = t_mid - S * sp[:, None]
        J = float(np.sum(r * r) * delta)
        # gradient through midpoints (cumulative) and slopes, then softmax
        a = -2.0 * delta * np.einsum("kc,kc->k", r, dS) * sp
        b = -2.0 * delta * np.einsum("kc,kc->k", r, S) * power * inc ** (power - 1.0)
        after = np.concatenate([np.cumsum(a[::-1])[::-1][1:], [0.0]])
        gi = after + 0.5 * a + b
        gf = (M - 1) * p * (gi - np.dot(gi, p))
        return J, B.T @ gf

    def nodes(c):
        f = B @ c
        e = np.exp(f - f.max())
        inc = e / e.sum() * (M - 1)
        return np.concatenate([[0.0], np.cumsum(inc)]), inc

    res = minimize(obj, c0, jac=True, method="L-BFGS-B", options={"maxiter": 200})
    gg = nodes(res.x)[0]
    gg[-1] = M - 1.0
    return gg


def optimal_warp(target, source, power=1.0, slopes=SLOPES, refine="smooth"):
    """Warp minimizing ``||target - (source o gamma) (gamma')^power||^2``.

    Both inputs are ``(M,)`` or ``(M, C)`` samples on the same uniform grid of
    ``[0, 1]``. ``power=1`` is the parameter action, ``power=0.5`` the
    square-root-velocity action. The dynamic-programming path is refined by
    ``"smooth"`` (continuous optimization over smooth warps), ``"local"``
    (one red-black pass of per-node search) or not at all (``None``). A
    refinement is kept only if it does not increase the objective.
    """
    tgt = _as3d(np.asarray(target, dtype=float)[None])[0]
    src = _as3d(np.asarray(source, dtype=float)[None])[0]
    M = len(tgt)
    g = _dp_path(tgt, src, power, slopes)
    if refine == "local":
        g = _refine(tgt, src, g, power)
    elif refine == "smooth":
        g2 = _smooth_refine(tgt, src, g, power)
        if np.all(np.diff(g2) > 1e-9 * (M - 1)) and \
                warp_objective(tgt, src, g2 / (M - 1), power) <= warp_objective(tgt, src, g / (M - 1), power):
            g = g2
    elif refine is not None:
        raise ValueError("refine must be 'smooth', 'local' or None")
    grid = np.linspace(0.0, 1.0, M)
    vals = g / (M - 1)
    vals[0], vals[-1] = 0.0, 1.0
    return Warping(grid, vals)


def mean_warping(warps, weights=None):
    """Warp whose interval slopes are the weighted geometric mean of the inputs' slopes."""
    w = np.full(len(warps), 1.0 / len(warps)) if weights is None else np.asarray(weights, dtype=float)
    grid = warps[0].grid
    logs = np.log(np.stack([np.diff(g.values) for g in warps]))
    inc = np.exp(np.einsum("n,nm->m", w, logs))
    vals = np.concatenate([[0.0], np.cumsum(inc)])
    vals /= vals[-1]
    return Warping(grid, vals)


def center_warpings(warps, weights=None):
    """Compose every warp with the inverse of :func:`mean_warping`.

    This fixes the common reparametrization that alignment alone cannot
    identify: afterwards the mean log-slope is zero.
    """
    inv = mean_warping(warps, weights).inverse()
    return [g.compose(inv) for g in warps]


def align_raw_estimates(raw, K=0, weights=None, max_iter=20, tol=1e-3, mapper=map,
                        var_frac=0.9, max_K=5, center=True):
    """Iterative template alignment of sampled parameter curves.

    ``K`` is the number of principal components kept in the smoothing step;
    ``None`` picks the smallest number explaining ``var_frac`` of the variance.
    With large phase variation the leading components absorb it, so the
    default is ``K=0`` (align to the template itself).

    Each iteration: (1) smooth each curve by projecting on the top
    principal components around the template, (2) warp each curve onto its
    smoothed version, (3) apply the warps, (4) update the weighted template.
    Channels are divided by their population median absolute value first.
    With ``center`` the cumulative warps are recentred on their mean after
    every iteration and the curves re-warped from the input. Stops when the
    cumulative warps move less than ``tol`` in sup norm. If
    the residual objective rises by more than ``1e-8`` the previous iterate
    is returned with ``aborted=True``.
    """
    R = _as3d(raw)
    N, M, C = R.shape
    w = np.full(N, 1.0 / N) if weights is None else np.asarray(weights, dtype=float)
    scale = np.median(np.abs(R), axis=(0, 1))
    scale = np.where(scale > 0, scale, 1.0)
    grid = np.linspace(0.0, 1.0, M)
    y0 = y = R / scale
    warps = [Warping.identity(grid) for _ in range(N)]
    nu = np.einsum("n,nmc->mc", w, y)
    history = []
    converged = aborted = False
    it = 0
    for it in range(1, max_iter + 1):
        model = fpca(y, K, var_frac, max_K, grid)
        smooth = model.reconstruct() - model.mean + nu
        gammas = list(mapper(lambda a: optimal_warp(*a), [(smooth[i], y[i]) for i in range(N)]))
        y_new = np.stack([warp_action(y[i], gammas[i]) for i in range(N)])
        obj = float(sum(warp_objective(smooth[i], y[i], gammas[i]) for i in range(N)))
        if history and obj > history[-1] + 1e-8:
            aborted = True
            break
        history.append(obj)
        new_warps = [warps[i].compose(gammas[i]) for i in range(N)]
        if center:
            new_warps = center_warpings(new_warps, w)
            y_new = np.stack([warp_action(y0[i], new_warps[i]) for i in range(N)])
        change = max(np.max(np.abs(a.values - b.values)) for a, b in zip(new_warps, warps))
        y, warps = y_new, new_warps
        nu = np.einsum("n,nmc->mc", w, y)
        if change < tol:
            converged = True
            break
    aligned = y * scale
    template = nu * scale
    if np.ndim(raw) == 2:
        aligned, template = aligned[..., 0], template[..., 0]
    return AlignmentResult(aligned, warps, template, converged, it, history, aborted)


def transform_records(obs, warps):
    """Move pseudo-observations through per-curve warps.

    A record at ``v`` with value ``r`` on curve ``i`` goes to
    ``s = Gamma_i^{-1}(v)`` with value ``r Gamma_i'(s)``.
    """
    v = obs.v.copy()
    r = obs.r.copy()
    for i, g in enumerate(warps):
        sel = obs.curve == i
        s = g.inverse()(v[sel])
        r[sel] = r[sel] * np.interp(s, g.grid, g.derivative())[:, None]
        v[sel] = s
    return PseudoObservationSet(obs.curve, obs.j, obs.q, obs.u, v, r, obs.w, obs.n_dropped)


def per_curve_profiles(obs, hp, n_curves, grid, n_knots=DEFAULT_KNOTS):
    """Spline pre-smoothing of each curve's own records, sampled on ``grid``."""
    out = []
    for i in range(n_curves):
        th = fit_theta_splines(obs.subset(obs.curve == i), hp, n_knots)
        out.append(th.sample(grid))
    return np.stack(out)


def estimate_mean_theta_phase(paths, hp, K=0, n_knots=DEFAULT_KNOTS, n_grid=200,
                              boundary_trim=0.0, max_iter=20, tol=1e-3, mapper=map):
    """Mean parameter after removing space-warping variation.

    Returns ``(theta, warpings, alignment_result)``.
    """
    obs = raw_log_increments(paths, hp.h, boundary_trim)
    grid = np.linspace(0.0, 1.0, n_grid)
    raw = per_curve_profiles(obs, hp, len(paths), grid, n_knots)
    res = align_raw_estimates(raw, K=K, max_iter=max_iter, tol=tol, mapper=mapper)
    theta = fit_theta_splines(transform_records(obs, res.warpings), hp, n_knots)
    return theta, res.warpings, res
