"""Curves on the unit sphere.

A unit-speed curve ``alpha`` on S^2 carries the frame ``(alpha, beta, gamma)``
with ``beta = alpha'`` and ``gamma = alpha x beta``. It solves
``F' = F A`` where ``A`` couples ``alpha, beta`` with a fixed unit entry and
``beta, gamma`` with the geodesic curvature ``k_g``. In the ``hat`` layout of
:mod:`fsmean.so3` this is ``a_theta`` with ``kappa = 1`` and ``tau = k_g``, so
the Euclidean machinery (pseudo-observations, spline fit, Lie-group solver)
is reused unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import DegenerateSpeed, RankDeficient
from .estimator import (DEFAULT_KNOTS, _design, _penalized_fit, raw_log_increments,
                        roughness_matrix, spline_knots)
from .frenet import DEFAULT_STEP, ArclengthCurve, FrenetPath, ThetaFunction, solve_frenet_path
from .preprocess import (DEFAULT_KERNEL, EuclideanCurve, arclength, local_poly_derivatives,
                         normalize_to_unit_length)
from .so3 import hat, karcher_mean, project_so3


@dataclass
class SphericalFramePath(FrenetPath):
    """Spherical frames on normalized arclength; ``length`` is the original arclength."""

    length: float = 1.0


@dataclass
class GeodesicCurvature:
    """Geodesic curvature ``k_g`` on normalized arclength ``[0, 1]``.

    ``length`` is the arclength the curve is reconstructed with; on the
    normalized parameter the generator is ``length * (1, k_g, 0)``.
    """

    kg: BSpline
    length: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, s):
        return self.kg(np.asarray(s, dtype=float))

    def as_theta(self, length=None):
        L = self.length if length is None else float(length)
        t, c, k = self.kg.t, self.kg.c, self.kg.k
        one = BSpline(t, np.full_like(c, L), k)
        return ThetaFunction(one, BSpline(t, c * L, k), (0.0, 1.0), floor=False)

    @classmethod
    def constant(cls, value, length=1.0):
        t = np.array([0.0] * 4 + [1.0] * 4)
        return cls(BSpline(t, np.full(4, float(value)), 3), length)


def spherical_a(kg):
    """Generator ``[[0,-1,0],[1,0,-k_g],[0,k_g,0]]``; vectorized over ``kg``."""
    kg = np.asarray(kg, dtype=float)
    return hat(np.stack([np.ones_like(kg), kg, np.zeros_like(kg)], axis=-1))


def spherical_frames(curve, bandwidth, kernel=DEFAULT_KERNEL, tol=1e-3):
    """Frames ``(alpha, beta, alpha x beta)`` of a curve on the unit sphere.

    ``curve`` is an :class:`ArclengthCurve` whose points lie within ``tol`` of
    the unit sphere. ``beta`` is the local-polynomial derivative with its
    component along ``alpha`` removed, then normalized.
    """
    P = np.asarray(curve.points, dtype=float)
    nrm = np.linalg.norm(P, axis=1)
    if np.any(np.abs(nrm - 1.0) > tol):
        raise ValueError("points must lie on the unit sphere")
    alpha = P / nrm[:, None]
    jet = local_poly_derivatives(ArclengthCurve(curve.grid, alpha, curve.length), bandwidth, degree=4, kernel=kernel)
    d = jet.d1 - np.einsum("ij,ij->i", jet.d1, alpha)[:, None] * alpha
    sp = np.linalg.norm(d, axis=1)
    if np.any(sp < 1e-10):
        raise DegenerateSpeed("vanishing tangential derivative on the sphere")
    beta = d / sp[:, None]
    F = np.stack([alpha, beta, np.cross(alpha, beta)], axis=-1)
    return SphericalFramePath(curve.grid, project_so3(F), length=curve.length)


def spherical_frames_from_samples(curve, arc_bandwidth, deriv_bandwidth, n_grid=None,
                                  kernel=DEFAULT_KERNEL):
    """Raw samples on (or near) the sphere to normalized-arclength frames.

    Points are projected radially onto the sphere, reparametrized by
    estimated arclength, resampled and projected again.
    """
    P = np.asarray(curve.points, dtype=float)
    P = P / np.linalg.norm(P, axis=1, keepdims=True)
    sph = EuclideanCurve(curve.times, P)
    s, L = arclength(sph, arc_bandwidth, kernel=kernel)
    ac = normalize_to_unit_length(sph, s, L, n_grid)
    ac = ArclengthCurve(ac.grid, ac.points / np.linalg.norm(ac.points, axis=1, keepdims=True), ac.length)
    return ac, spherical_frames(ac, deriv_bandwidth, kernel)


def estimate_mean_kg(paths, hp, n_knots=DEFAULT_KNOTS, boundary_trim=0.0):
    """Mean geodesic curvature of a population of spherical frame paths.

    Records are divided by each curve's length so they read ``(1, k_g)``.
    Only the second slot is fitted (with ``hp.lambda_tau``); the weighted
    mean absolute deviation of the first slot from 1 is reported in
    ``diagnostics["unit_slot_deviation"]``. The returned length is the mean
    of the input lengths.
    """
    obs = raw_log_increments(paths, hp.h, boundary_trim)
    lengths = np.array([getattr(p, "length", 1.0) for p in paths], dtype=float)
    r = obs.r / lengths[obs.curve][:, None]
    if int(np.sum(obs.w > 0)) < n_knots + 4:
        raise RankDeficient("not enough records with positive weight")
    knots = spline_knots(n_knots)
    c = _penalized_fit(_design(obs.v, knots), obs.w, r[:, 1], hp.lambda_tau, roughness_matrix(knots))
    wsum = obs.w.sum()
    dev = float(np.sum(obs.w * np.abs(r[:, 0] - 1.0)) / wsum) if wsum > 0 else float("nan")
    return GeodesicCurvature(BSpline(knots, c, 3), float(lengths.mean()),
                             {"unit_slot_deviation": dev, "n_dropped": obs.n_dropped})


def reconstruct_spherical_curve(kg, frame0, grid, length=None, max_step=DEFAULT_STEP):
    """Curve on the sphere from ``k_g`` and an initial frame.

    The frame ODE is integrated in SO(3), so every point has unit norm up to
    rounding. ``length`` defaults to ``kg.length``.
    """
    frame0 = np.asarray(frame0, dtype=float)
    if abs(np.linalg.norm(frame0[:, 0]) - 1.0) > 1e-8:
        raise ValueError("first column of the initial frame must be a unit vector")
    theta = kg.as_theta(length)
    frames = solve_frenet_path(theta, frame0, grid, max_step)
    L = kg.length if length is None else float(length)
    return ArclengthCurve(np.asarray(grid, dtype=float), frames.frames[:, :, 0].copy(), L)


def mean_spherical_curve(kg, paths, grid, max_step=DEFAULT_STEP):
    """Reconstruction started from the Karcher mean of the first frames."""
    F0 = karcher_mean([p.frames[0] for p in paths])
    return reconstruct_spherical_curve(kg, F0, grid, max_step=max_step)
