"""Comparison methods: arithmetic mean, SRVF elastic mean, individual aggregates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from .alignment import Warping, mean_warping, optimal_warp
from .estimator import estimate_mean_theta
from .frenet import ArclengthCurve
from .preprocess import _kabsch, extrinsic_theta, local_poly_coefficients, local_poly_derivatives

SRVF_BANDWIDTH = 0.05


@dataclass
class SrvfFunction:
    """Square-root velocity ``q = x' / sqrt(|x'|)`` sampled on ``grid``."""

    grid: np.ndarray
    q: np.ndarray


@dataclass
class SrvfMatch:
    distance: float
    gamma: Warping
    rotation: np.ndarray
    aligned: np.ndarray
    converged: bool = True


@dataclass
class SrvfMeanResult:
    curve: ArclengthCurve
    q: np.ndarray
    n_iter: int
    converged: bool
    distances: np.ndarray


def _grid_points(curve):
    grid = getattr(curve, "grid", None)
    if grid is None:
        grid = curve.times
    return np.asarray(grid, dtype=float), np.asarray(curve.points, dtype=float)


def _center(P):
    return P - P.mean(axis=0)


def procrustes_rotation(P, ref):
    """Rotation ``R`` minimizing ``sum |ref_j - R P_j|^2`` for centred point sets."""
    return _kabsch(ref.T @ P)


def arithmetic_mean(curves, center=True):
    """Pointwise mean after centring and Procrustes rotation onto the first curve.

    All curves must share one grid (normalized arclength or common times).
    Pass ``center=False`` for spherical data, where only rotations about the
    origin are admissible.
    """
    grid, ref = _grid_points(curves[0])
    ref = _center(ref) if center else ref
    acc = np.zeros_like(ref)
    for c in curves:
        g, P = _grid_points(c)
        if len(g) != len(grid) or np.max(np.abs(g - grid)) > 1e-12:
            raise ValueError("curves must share a common grid")
        P = _center(P) if center else P
        acc += P @ procrustes_rotation(P, ref).T
    mean = acc / len(curves)
    seg = np.linalg.norm(np.diff(mean, axis=0), axis=1).sum()
    return ArclengthCurve(grid, mean, float(seg))


def extrinsic_of_curve(curve, bandwidth=0.05, n_grid=None):
    """Extrinsic ``(kappa, tau)`` of a sampled curve, on normalized arclength units.

    Values are multiplied by the curve length so they are comparable with
    parameters estimated on ``[0, 1]``. Returns ``(grid, kappa, tau)``.
    """
    grid, P = _grid_points(curve)
    t = (grid - grid[0]) / (grid[-1] - grid[0])
    jet = local_poly_derivatives(ArclengthCurve(t, P), bandwidth)
    L = np.linalg.norm(np.diff(P, axis=0), axis=1).sum()
    k, tau = extrinsic_theta(jet)
    sp = np.linalg.norm(jet.d1, axis=1)
    s = cumulative_trapezoid(sp, t, initial=0.0)
    s /= s[-1]
    if n_grid is not None:
        out = np.linspace(0.0, 1.0, n_grid)
        return out, np.interp(out, s, k) * L, np.interp(out, s, tau) * L
    return s, k * L, tau * L


def srvf_transform(curve, bandwidth=SRVF_BANDWIDTH, unit_length=True):
    """SRVF on the curve's parameter rescaled to ``[0, 1]``.

    The velocity is a local cubic estimate. With ``unit_length`` the curve is
    scaled to length 1 first, so that ``int |q|^2 = 1``. The bandwidth is
    widened to five sample spacings on coarse grids, since a one-sided cubic
    window needs that many points.
    """
    grid, P = _grid_points(curve)
    t = (grid - grid[0]) / (grid[-1] - grid[0])
    bandwidth = max(bandwidth, 5.0 / (len(t) - 1))
    v = local_poly_coefficients(t, P, t, bandwidth, 3)[:, 1]
    sp = np.linalg.norm(v, axis=1)
    if unit_length:
        L = np.trapezoid(sp, t)
        v, sp = v / L, sp / L
    q = np.zeros_like(v)
    ok = sp > 0
    q[ok] = v[ok] / np.sqrt(sp[ok])[:, None]
    return SrvfFunction(t, q)


def srvf_action(q, gamma):
    """``q(gamma) sqrt(gamma')`` on the warp's grid."""
    f = CubicSpline(gamma.grid, q, axis=0)(gamma.values)
    return f * np.sqrt(np.maximum(gamma.derivative(), 0.0))[:, None]


def _l2(q, grid):
    return float(np.sqrt(max(np.trapezoid(np.sum(q * q, axis=1), grid), 0.0)))


def srvf_match(q0, q1, tol=1e-6, max_iter=20):
    """Align SRVF ``q1`` onto ``q0`` (same uniform grid) over rotations and warps."""
    grid = np.linspace(0.0, 1.0, len(q0))
    gamma = Warping.identity(grid)
    R = np.eye(3)
    d_prev = np.inf
    converged = False
    for _ in range(max_iter):
        cur = srvf_action(q1, gamma)
        R = _kabsch(np.trapezoid(q0[:, :, None] * cur[:, None, :], grid, axis=0))
        gamma = optimal_warp(q0, q1 @ R.T, power=0.5)
        aligned = srvf_action(q1 @ R.T, gamma)
        d = _l2(q0 - aligned, grid)
        if abs(d_prev - d) < tol:
            converged = True
            break
        d_prev = d
    return SrvfMatch(d, gamma, R, aligned, converged)


def _resample(curve, m):
    grid, P = _grid_points(curve)
    t = (grid - grid[0]) / (grid[-1] - grid[0])
    if m is None or m == len(t):
        return ArclengthCurve(t, P)
    u = np.linspace(0.0, 1.0, m)
    return ArclengthCurve(u, CubicSpline(t, P, axis=0)(u))


def srvf_distance(x0, x1, tol=1e-6, max_iter=20, bandwidth=SRVF_BANDWIDTH):
    """Elastic distance between two curves scaled to unit length.

    Alternates a Procrustes rotation and a dynamic-programming warp with the
    ``sqrt(gamma')`` action. Returns an :class:`SrvfMatch` whose ``rotation``
    and ``gamma`` map ``x1`` onto ``x0``.
    """
    m = len(_grid_points(x0)[0])
    q0 = srvf_transform(x0, bandwidth).q
    q1 = srvf_transform(_resample(x1, m), bandwidth).q
    return srvf_match(q0, q1, tol, max_iter)


def srvf_to_curve(q, grid, start=None, length=1.0):
    """Integrate ``x' = q |q|`` and resample on normalized arclength."""
    v = q * np.linalg.norm(q, axis=1)[:, None]
    x = cumulative_trapezoid(v, grid, axis=0, initial=0.0)
    s = cumulative_trapezoid(np.sum(q * q, axis=1), grid, initial=0.0)
    total = s[-1]
    x = x * (length / total)
    s = s / total
    keep = np.concatenate([[True], np.diff(s) > 1e-12])
    pts = CubicSpline(s[keep], x[keep], axis=0)(grid)
    if start is not None:
        pts = pts - pts[0] + start
    return ArclengthCurve(grid, pts, float(length))


def srvf_karcher_mean(curves, tol=1e-4, max_iter=30, mapper=map, bandwidth=SRVF_BANDWIDTH):
    """Elastic mean: align every SRVF to the template, average, repeat.

    The template starts at the first curve and is recentred after each
    iteration by the inverse of the mean warp. The returned curve is scaled to
    the mean input length and starts at the mean starting point.
    """
    m = len(_grid_points(curves[0])[0])
    rs = [_resample(c, m) for c in curves]
    grid = rs[0].grid
    qs = [srvf_transform(c, bandwidth).q for c in rs]
    lengths = np.array([np.linalg.norm(np.diff(c.points, axis=0), axis=1).sum() for c in rs])
    mu = qs[0].copy()
    converged = False
    dist = np.zeros(len(qs))
    it = 0
    for it in range(1, max_iter + 1):
        matches = list(mapper(lambda q: srvf_match(mu, q), qs))
        new = np.mean([mt.aligned for mt in matches], axis=0)
        # undo the common reparametrization so the template does not drift
        new = srvf_action(new, mean_warping([mt.gamma for mt in matches]).inverse())
        dist = np.array([mt.distance for mt in matches])
        change = _l2(new - mu, grid)
        mu = new
        if change < tol:
            converged = True
            break
    start = np.mean([c.points[0] for c in rs], axis=0)
    curve = srvf_to_curve(mu, grid, start, float(lengths.mean()))
    return SrvfMeanResult(curve, mu, it, converged, dist)


def individual_aggregates(paths, hp, grid, extrinsic=None, n_knots=None):
    """Pointwise aggregates of per-curve estimates on ``grid``.

    Returns ``(theta_ind, theta_ind_ext)`` as ``(M, 2)`` arrays. The first is
    the mean of per-curve Frenet-Serret fits. The second is the pointwise
    median of per-curve extrinsic estimates, given in ``extrinsic`` as a
    list of ``(s, kappa, tau)``; it is ``None`` when ``extrinsic`` is.
    """
    grid = np.asarray(grid, dtype=float)
    kw = {} if n_knots is None else {"n_knots": n_knots}
    fits = np.stack([estimate_mean_theta([p], hp, **kw).sample(grid) for p in paths])
    ind = fits.mean(axis=0)
    ext = None
    if extrinsic is not None:
        vals = np.stack([np.stack([np.interp(grid, s, k), np.interp(grid, s, t)], axis=-1)
                         for s, k, t in extrinsic])
        ext = np.nanmedian(vals, axis=0)
    return ind, ext
