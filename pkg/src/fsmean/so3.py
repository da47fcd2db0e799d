"""Closed-form primitives on the rotation group SO(3).

Skew-symmetric matrices are coordinatised as ``(a, b, c)`` with

    hat((a, b, c)) = [[0, -a, -c],
                      [a,  0, -b],
                      [c,  b,  0]]

so that ``hat((kappa, tau, 0))`` is the Frenet-Serret generator. The first
coordinate couples the first two frame columns (curvature), the second couples
the last two (torsion). All functions broadcast over leading axes.
"""

from __future__ import annotations

import numpy as np

from .errors import AngleNearPi, NoConvergence, SingularInput

NEAR_PI = 1e-6
_SMALL = 1e-4


def hat(v):
    """Map vee-coordinates ``(..., 3)`` to skew matrices ``(..., 3, 3)``."""
    v = np.asarray(v, dtype=float)
    a, b, c = v[..., 0], v[..., 1], v[..., 2]
    z = np.zeros_like(a)
    return np.stack(
        [
            np.stack([z, -a, -c], axis=-1),
            np.stack([a, z, -b], axis=-1),
            np.stack([c, b, z], axis=-1),
        ],
        axis=-2,
    )


def vee(S):
    """Inverse of :func:`hat`; reads the lower triangle."""
    S = np.asarray(S, dtype=float)
    return np.stack([S[..., 1, 0], S[..., 2, 1], S[..., 2, 0]], axis=-1)


def exp_so3(S):
    """Rodrigues formula ``I + sin(t)/t S + (1 - cos t)/t^2 S^2``.

    ``t`` is the rotation angle, i.e. the Euclidean norm of ``vee(S)``.
    """
    S = np.asarray(S, dtype=float)
    t = np.linalg.norm(vee(S), axis=-1)
    t2 = t * t
    small = t < _SMALL
    ts = np.where(small, 1.0, t)
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(ts) / ts)
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(ts)) / (ts * ts))
    S2 = S @ S
    return np.eye(3) + a[..., None, None] * S + b[..., None, None] * S2


def rotation_angle(Q):
    """Angle in ``[0, pi]`` of rotation(s) ``Q``, computed with atan2 for accuracy."""
    Q = np.asarray(Q, dtype=float)
    K = 0.5 * (Q - np.swapaxes(Q, -1, -2))
    s = np.linalg.norm(vee(K), axis=-1)
    c = 0.5 * (np.trace(Q, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(s, c)


def log_so3_masked(Q):
    """Principal logarithm that never raises.

    Returns ``(S, near_pi)``; entries of ``S`` flagged in ``near_pi`` are zero.
    """
    Q = np.asarray(Q, dtype=float)
    K = 0.5 * (Q - np.swapaxes(Q, -1, -2))
    s = np.linalg.norm(vee(K), axis=-1)
    c = 0.5 * (np.trace(Q, axis1=-2, axis2=-1) - 1.0)
    t = np.arctan2(s, c)
    near_pi = t > np.pi - NEAR_PI
    small = t < _SMALL
    t2 = t * t
    safe_s = np.where(small | near_pi, 1.0, s)
    f = np.where(small, 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0, t / safe_s)
    f = np.where(near_pi, 0.0, f)
    return f[..., None, None] * K, near_pi


def log_so3(Q):
    """Principal matrix logarithm of rotation(s) ``Q``.

    Raises
    ------
    AngleNearPi
        If any rotation angle is within ``1e-6`` of pi, where the branch is
        ambiguous.
    """
    S, near_pi = log_so3_masked(Q)
    if np.any(near_pi):
        raise AngleNearPi(f"{int(np.sum(near_pi))} rotation(s) at angle ~pi")
    return S


def geodesic_dist(M, N):
    """``||log(M^T N)||_F``, which equals sqrt(2) times the relative angle."""
    R = np.swapaxes(np.asarray(M, dtype=float), -1, -2) @ np.asarray(N, dtype=float)
    t = rotation_angle(R)
    if np.any(t > np.pi - NEAR_PI):
        raise AngleNearPi("relative rotation at angle ~pi")
    return np.sqrt(2.0) * t


def geodesic_dist_unchecked(M, N):
    """Same as :func:`geodesic_dist` but saturates at ``sqrt(2) pi`` instead of raising."""
    R = np.swapaxes(np.asarray(M, dtype=float), -1, -2) @ np.asarray(N, dtype=float)
    return np.sqrt(2.0) * rotation_angle(R)


def project_so3(M):
    """Nearest rotation in Frobenius norm (polar factor with determinant fix)."""
    M = np.asarray(M, dtype=float)
    U, sv, Vt = np.linalg.svd(M)
    if np.any(sv[..., -1] < 1e-12):
        raise SingularInput("matrix is (numerically) singular")
    d = np.sign(np.linalg.det(U @ Vt))
    d = np.where(d == 0, 1.0, d)
    U = U.copy()
    U[..., :, 2] *= d[..., None]
    return U @ Vt


def karcher_mean(rotations, tol=1e-12, max_iter=100):
    """Intrinsic (Karcher) mean by the fixed-point iteration on the log-mean.

    Starts from the first rotation, so the result is exactly left-equivariant.
    """
    Rs = np.asarray(rotations, dtype=float).reshape(-1, 3, 3)
    if len(Rs) == 0:
        raise ValueError("need at least one rotation")
    mean = Rs[0].copy()
    for _ in range(max_iter):
        step = log_so3(mean.T @ Rs).mean(axis=0)
        if np.linalg.norm(vee(step)) <= tol:
            return mean
        mean = mean @ exp_so3(step)
    step = log_so3(mean.T @ Rs).mean(axis=0)
    if np.linalg.norm(vee(step)) <= tol:
        return mean
    raise NoConvergence(f"karcher mean did not reach tol={tol} in {max_iter} iterations")


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


def _unit_quaternions(rng, n):
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def uniform_rotation(rng, size=None):
    """Haar-distributed rotation(s)."""
    n = 1 if size is None else int(size)
    R = quat_to_matrix(_unit_quaternions(rng, n))
    return R[0] if size is None else R


def sample_fisher_langevin(mean, concentration, rng, size=None):
    """Draw from the matrix Langevin law with density ``exp(c tr(mean^T Q))``.

    Rejection from Haar measure with envelope ``exp(c (tr - 3))``. For a unit
    quaternion with scalar part ``w`` the trace is ``4 w^2 - 1``, so only ``w``
    is needed to decide acceptance.
    """
    if concentration < 0:
        raise ValueError("concentration must be non-negative")
    mean = np.asarray(mean, dtype=float)
    n = 1 if size is None else int(size)
    c = float(concentration)
    if c == 0.0:
        out = mean @ quat_to_matrix(_unit_quaternions(rng, n))
        return out[0] if size is None else out

    # acceptance ~ 0.0705 c^-1.5 for large c
    rate = min(1.0, 0.0705 * c ** -1.5 + 1e-4)
    accepted = []
    count = 0
    while count < n:
        batch = int(min(4_000_000, max(256, 1.3 * (n - count) / rate)))
        q = _unit_quaternions(rng, batch)
        u = rng.random(batch)
        keep = np.log(u) <= 4.0 * c * (q[:, 0] ** 2 - 1.0)
        q = q[keep]
        accepted.append(q)
        count += len(q)
    q = np.concatenate(accepted)[:n]
    out = mean @ quat_to_matrix(q)
    return out[0] if size is None else out
