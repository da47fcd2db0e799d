"""From noisy time-stamped samples to arclength curves and raw Frenet frames.

Derivatives are estimated with kernel-weighted local polynomials. Windows are
simply truncated at the ends of the data (no reflection), so the fits are
asymmetric near the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateSpeed, FrameDegenerate, IllConditioned
from .frenet import ArclengthCurve, FrenetPath
from .so3 import project_so3

DEFAULT_KERNEL = "epanechnikov"


@dataclass
class EuclideanCurve:
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if len(self.times) < 5:
            raise ValueError("a curve needs at least 5 samples")
        if self.points.shape != (len(self.times), 3):
            raise ValueError("points must have shape (n, 3)")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


@dataclass
class DerivativeJet:
    """First three arclength derivatives at each grid point."""

    grid: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray


@dataclass
class LPFrameFit:
    """Output of the constrained local-polynomial frame fit.

    ``ktau`` is the fitted product kappa * tau, i.e. the coefficient of the
    ``h^3 / 6`` binormal term.
    """

    path: FrenetPath
    kappa: np.ndarray
    dkappa: np.ndarray
    ktau: np.ndarray
    iterations: np.ndarray
    flagged: np.ndarray


def kernel_weights(u, kernel=DEFAULT_KERNEL):
    """Kernel on ``[-1, 1]``.

    ``"epanechnikov"`` is ``3/4 (1 - u^2)``; ``"literal"`` is ``3/4 (1 - u)^2``.
    """
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= 1.0
    if kernel == "epanechnikov":
        k = 0.75 * (1.0 - u * u)
    elif kernel == "literal":
        k = 0.75 * (1.0 - u) ** 2
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    return np.where(inside, k, 0.0)


def local_poly_coefficients(x, Y, at, bandwidth, degree, kernel=DEFAULT_KERNEL, cond_max=1e10):
    """Weighted local polynomial coefficients.

    Returns ``beta`` of shape ``(len(at), degree + 1, Y.shape[1])`` with
    ``Y(x) ~ sum_k beta[:, k] (x - at)^k`` near each evaluation point.
    """
    x = np.asarray(x, dtype=float)
    Y = np.asarray(Y, dtype=float)
    at = np.asarray(at, dtype=float)
    # work in units of the bandwidth to keep the moment matrices well scaled
    D = (x[None, :] - at[:, None]) / bandwidth
    W = kernel_weights(D, kernel)
    P = D[..., None] ** np.arange(2 * degree + 1)
    mom = np.einsum("ij,ijk->ik", W, P)
    idx = np.arange(degree + 1)
    G = mom[:, idx[:, None] + idx[None, :]]
    rhs = np.einsum("ij,ijk,jc->ikc", W, P[..., : degree + 1], Y)
    cond = np.linalg.cond(G)
    bad = ~np.isfinite(cond) | (cond > cond_max)
    if np.any(bad):
        raise IllConditioned(
            f"local design singular at {int(bad.sum())} point(s); increase the bandwidth"
        )
    beta = np.linalg.solve(G, rhs)
    return beta / (bandwidth ** idx)[None, :, None]


def _speed(curve, bandwidth, degree=1, kernel=DEFAULT_KERNEL):
    beta = local_poly_coefficients(curve.times, curve.points, curve.times, bandwidth, degree, kernel)
    return np.linalg.norm(beta[:, 1, :], axis=1)


def arclength(curve, bandwidth, degree=1, kernel=DEFAULT_KERNEL):
    """Cumulative arclength ``s(t)`` and total length ``L``.

    The velocity is a local linear (``degree=1``) estimate per coordinate and
    the speed is integrated with the trapezoid rule.
    """
    T = curve.times[-1] - curve.times[0]
    if not 0 < bandwidth <= T / 2:
        raise ValueError("bandwidth must lie in (0, T/2]")
    speed = _speed(curve, bandwidth, degree, kernel)
    if np.any(speed[1:-1] < 1e-10):
        raise DegenerateSpeed("estimated speed vanishes; the curve is not regular")
    dt = np.diff(curve.times)
    s = np.concatenate([[0.0], np.cumsum(0.5 * dt * (speed[1:] + speed[:-1]))])
    return s, float(s[-1])


def normalize_to_unit_length(curve, s_of_t, L, n_grid=None):
    """Resample ``X(s L) / L`` on a uniform grid of ``[0, 1]``."""
    if L <= 0:
        raise ValueError("L must be positive")
    s = np.asarray(s_of_t, dtype=float) / L
    if np.any(np.diff(s) <= 0):
        raise DegenerateSpeed("arclength is not strictly increasing")
    n = len(s) if n_grid is None else int(n_grid)
    grid = np.linspace(0.0, 1.0, n)
    Z = CubicSpline(s, curve.points / L, axis=0)(grid)
    return ArclengthCurve(grid, Z, float(L))


def local_poly_derivatives(curve, bandwidth, degree=4, kernel=DEFAULT_KERNEL):
    """Derivatives up to order 3 from a degree-4 local polynomial."""
    if not 0 < bandwidth <= 0.5:
        raise ValueError("bandwidth must lie in (0, 0.5]")
    beta = local_poly_coefficients(curve.grid, curve.points, curve.grid, bandwidth, degree, kernel)
    return DerivativeJet(curve.grid, beta[:, 1], 2.0 * beta[:, 2], 6.0 * beta[:, 3])


def extrinsic_theta(jet, eps=1e-12):
    """Curvature and torsion from the classical cross-product formulas.

    Torsion is NaN where ``|d1 x d2| <= eps`` (undefined there).
    """
    c = np.cross(jet.d1, jet.d2)
    nc = np.linalg.norm(c, axis=1)
    kappa = nc / np.linalg.norm(jet.d1, axis=1) ** 3
    ok = nc > eps
    tau = np.full(len(nc), np.nan)
    tau[ok] = np.einsum("ij,ij->i", c[ok], jet.d3[ok]) / nc[ok] ** 2
    return kappa, tau


def _gs(d1, d2, rel=1e-10):
    n1 = np.linalg.norm(d1, axis=1)
    T = d1 / np.where(n1 > 0, n1, 1.0)[:, None]
    Nraw = d2 - np.einsum("ij,ij->i", d2, T)[:, None] * T
    nn = np.linalg.norm(Nraw, axis=1)
    bad = (n1 <= 1e-12) | (nn <= rel * np.maximum(np.linalg.norm(d2, axis=1), 1e-300))
    N = Nraw / np.where(bad, 1.0, nn)[:, None]
    B = np.cross(T, N)
    return np.stack([T, N, B], axis=-1), bad


def gram_schmidt_frames(jet, on_degenerate="raise"):
    """Frames from Gram-Schmidt on ``[d1 | d2]`` with ``B = T x N``.

    Only the first two derivatives determine the frame: taking the third
    column as a cross product enforces a positive determinant and keeps planar
    curves (where ``d3`` lies in the osculating plane) well defined.
    """
    Q, bad = _gs(jet.d1, jet.d2)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        if on_degenerate == "raise":
            raise FrameDegenerate(f"degenerate jet at {len(idx)} point(s)", idx)
        if on_degenerate != "drop":
            raise ValueError("on_degenerate must be 'raise' or 'drop'")
    keep = ~bad
    return FrenetPath(jet.grid[keep], project_so3(Q[keep]), np.zeros(int(keep.sum()), dtype=bool))


def _kabsch(M):
    """Rotation maximizing ``tr(Q^T M)``; valid for rank-2 ``M`` too."""
    U, _, Vt = np.linalg.svd(M)
    d = np.sign(np.linalg.det(U @ Vt))
    U[..., :, 2] *= np.where(d == 0, 1.0, d)[..., None]
    return U @ Vt


def constrained_lp_fit(curve, bandwidth, kernel=DEFAULT_KERNEL, tol=1e-8, max_iter=50):
    """Frames fitted to the third-order Frenet expansion of the curve.

    At each grid point the model is
    ``X(s + h) = c + Q (h - h^3 k^2/6, h^2 k/2 + h^3 k'/6, h^3 k tau/6)``.
    The anchor ``c`` is the intercept of a degree-4 local polynomial (with a
    free intercept the one-sided windows at the ends cannot separate the
    linear term from the others). The fit then alternates a linear solve for
    ``(k, k', k tau)`` in frame coordinates, with the ``k^2`` term frozen at
    the previous value, and a Procrustes update of ``Q``. Points that do not
    converge fall back to Gram-Schmidt frames and are flagged.
    """
    if not 0 < bandwidth <= 0.5:
        raise ValueError("bandwidth must lie in (0, 0.5]")
    s, X = curve.grid, curve.points
    n = len(s)
    H = s[None, :] - s[:, None]
    W = kernel_weights(H / bandwidth, kernel)
    Hs = H / bandwidth

    # normal matrices of the N and B sub-problems do not change between iterations
    bN = np.stack([Hs ** 2 / 2, Hs ** 3 / 6], axis=-1)
    GN = np.einsum("ij,ijk,ijl->ikl", W, bN, bN)
    GB = np.einsum("ij,ij->i", W, Hs ** 6 / 36)
    if np.any(np.linalg.cond(GN) > 1e10) or np.any(GB <= 0):
        raise IllConditioned("local design singular; increase the bandwidth")

    beta = local_poly_coefficients(s, X, s, bandwidth, 4, kernel)
    c0 = beta[:, 0]
    d1, d2 = beta[:, 1], 2.0 * beta[:, 2]
    R = X[None, :, :] - c0[:, None, :]
    Q0, bad0 = _gs(d1, d2)
    Q0[bad0] = np.eye(3)
    Q = Q0.copy()
    kappa = np.linalg.norm(np.cross(d1, d2), axis=1) / np.linalg.norm(d1, axis=1) ** 3
    dk = np.zeros(n)
    p = np.zeros(n)
    iters = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    converged = np.zeros(n, dtype=bool)

    for it in range(max_iter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        Qa = Q[idx]
        Wa, Ha, Ra = W[idx], H[idx], R[idx]
        Y = np.einsum("aji,abj->abi", Qa, Ra)  # frame coordinates
        cN = np.linalg.solve(GN[idx], np.einsum("ab,abk,ab->ak", Wa, bN[idx], Y[..., 1])[..., None])[..., 0]
        cB = np.einsum("ab,ab,ab->a", Wa, Hs[idx] ** 3 / 6, Y[..., 2]) / GB[idx]
        k_new = cN[:, 0] / bandwidth ** 2
        dk_new = cN[:, 1] / bandwidth ** 3
        p_new = cB / bandwidth ** 3
        k2 = kappa[idx] ** 2

        m = np.stack(
            [
                Ha - Ha ** 3 * k2[:, None] / 6,
                Ha ** 2 * k_new[:, None] / 2 + Ha ** 3 * dk_new[:, None] / 6,
                Ha ** 3 * p_new[:, None] / 6,
            ],
            axis=-1,
        )
        Q_new = _kabsch(np.einsum("ab,abi,abj->aij", Wa, Ra, m))
        flip = k_new < 0
        Q_new[flip] = Q_new[flip] * np.array([1.0, -1.0, -1.0])
        k_new = np.abs(k_new)
        dk_new = np.where(flip, -dk_new, dk_new)
        p_new = np.where(flip, -p_new, p_new)

        change = np.linalg.norm(Q_new - Qa, axis=(1, 2))
        Q[idx] = Q_new
        kappa[idx], dk[idx], p[idx] = k_new, dk_new, p_new
        iters[idx] = it + 1
        done = change < tol
        converged[idx[done]] = True
        active[idx[done]] = False

    flagged = ~converged
    Q[flagged] = Q0[flagged]
    path = FrenetPath(s, project_so3(Q), flagged)
    return LPFrameFit(path, kappa, dk, p, iters, flagged)


def constrained_lp_frames(curve, bandwidth, kernel=DEFAULT_KERNEL, tol=1e-8, max_iter=50):
    """Frenet path from :func:`constrained_lp_fit`."""
    return constrained_lp_fit(curve, bandwidth, kernel, tol, max_iter).path


def frames_from_samples(
    curve,
    arc_bandwidth,
    deriv_bandwidth,
    method="lp",
    n_grid=None,
    kernel=DEFAULT_KERNEL,
):
    """Arclength normalization followed by frame estimation.

    Returns ``(ArclengthCurve, FrenetPath)``. ``method`` is ``"lp"`` or ``"gs"``.
    Degenerate Gram-Schmidt frames are dropped.
    """
    s, L = arclength(curve, arc_bandwidth, kernel=kernel)
    z = normalize_to_unit_length(curve, s, L, n_grid)
    if method == "lp":
        path = constrained_lp_frames(z, deriv_bandwidth, kernel)
    elif method == "gs":
        path = gram_schmidt_frames(local_poly_derivatives(z, deriv_bandwidth, kernel=kernel), "drop")
    else:
        raise ValueError("method must be 'lp' or 'gs'")
    return z, path
