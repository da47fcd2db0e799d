"""Frenet-Serret ODE ``Q' = Q A(s)`` on SO(3).

Frames are stored column-wise as ``Q = [T | N | B]``. Integration uses the
midpoint Lie-Euler step ``Q(s + h) = Q(s) exp(h A(s + h/2))`` on a node set
made of the requested grid merged with a global lattice of spacing
``max_step`` anchored at the start of the parameter domain. Because every
solve on the same lattice splits the domain at the same places, flows
computed from different starting points agree with paths computed in one
sweep up to the (tiny) effect of the extra split points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline, make_interp_spline

from .so3 import exp_so3, hat

KAPPA_MIN = 1e-6
DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class ThetaFunction:
    """Curvature and torsion as cubic B-splines on ``domain``.

    Curvature is floored at ``KAPPA_MIN`` when evaluated unless ``floor`` is
    False (used only by generators that deliberately allow signed curvature).
    """

    kappa: BSpline
    tau: BSpline
    domain: tuple = (0.0, 1.0)
    floor: bool = True

    def kappa_at(self, s):
        k = self.kappa(np.asarray(s, dtype=float))
        return np.maximum(k, KAPPA_MIN) if self.floor else k

    def tau_at(self, s):
        return self.tau(np.asarray(s, dtype=float))

    def sample(self, s):
        """``(len(s), 2)`` array of ``(kappa, tau)`` values."""
        return np.stack([self.kappa_at(s), self.tau_at(s)], axis=-1)

    def generator(self, s):
        """Vee-coordinates of ``A_theta(s)``."""
        k = self.kappa_at(s)
        return np.stack([k, self.tau_at(s), np.zeros_like(k)], axis=-1)

    @classmethod
    def constant(cls, kappa, tau, domain=(0.0, 1.0), floor=True):
        lo, hi = domain
        t = np.array([lo] * 4 + [hi] * 4, dtype=float)
        return cls(BSpline(t, np.full(4, float(kappa)), 3),
                   BSpline(t, np.full(4, float(tau)), 3), (lo, hi), floor)

    @classmethod
    def from_samples(cls, s, kappa, tau, floor=True):
        """Cubic interpolating splines through sampled values."""
        s = np.asarray(s, dtype=float)
        return cls(make_interp_spline(s, np.asarray(kappa, dtype=float), k=3),
                   make_interp_spline(s, np.asarray(tau, dtype=float), k=3),
                   (float(s[0]), float(s[-1])), floor)

    @classmethod
    def from_functions(cls, kappa_fn, tau_fn, domain=(0.0, 1.0), n=401, floor=True):
        s = np.linspace(domain[0], domain[1], n)
        return cls.from_samples(s, kappa_fn(s), tau_fn(s), floor=floor)


@dataclass
class FrenetPath:
    """Frames ``Q(s)`` (shape ``(n, 3, 3)``) on an increasing grid.

    ``flagged`` marks frames that came from a fallback estimator.
    """

    grid: np.ndarray
    frames: np.ndarray
    flagged: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.shape != (len(self.grid), 3, 3):
            raise ValueError("frames must have shape (len(grid), 3, 3)")
        if len(self.grid) > 1 and np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")

    def __len__(self):
        return len(self.grid)

    def subset(self, mask):
        mask = np.asarray(mask)
        flagged = None if self.flagged is None else self.flagged[mask]
        return FrenetPath(self.grid[mask], self.frames[mask], flagged)


@dataclass
class ArclengthCurve:
    """Points sampled on normalised arclength; ``length`` is the physical length."""

    grid: np.ndarray
    points: np.ndarray
    length: float = 1.0

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.points = np.asarray(self.points, dtype=float)


def a_theta(theta, s):
    """Skew generator ``A_theta(s)``."""
    return hat(theta.generator(s))


def lie_euler_midpoint_step(Q, theta, s, h):
    if h == 0:
        return np.array(Q, dtype=float)
    return np.asarray(Q, dtype=float) @ exp_so3(h * hat(theta.generator(s + 0.5 * h)))


def _nodes(grid, max_step, origin):
    grid = np.asarray(grid, dtype=float)
    lo, hi = grid[0], grid[-1]
    k0 = int(np.ceil((lo - origin) / max_step - 1e-9))
    k1 = int(np.floor((hi - origin) / max_step + 1e-9))
    lattice = origin + max_step * np.arange(k0, k1 + 1)
    if len(lattice):
        pos = np.searchsorted(grid, lattice)
        left = np.abs(lattice - grid[np.clip(pos - 1, 0, len(grid) - 1)])
        right = np.abs(grid[np.clip(pos, 0, len(grid) - 1)] - lattice)
        lattice = lattice[(np.minimum(left, right) > 1e-12) & (lattice > lo) & (lattice < hi)]
    nodes = np.concatenate([grid, lattice])
    order = np.argsort(nodes, kind="stable")
    nodes = nodes[order]
    idx = np.empty(len(grid), dtype=int)
    idx[order[order < len(grid)]] = np.flatnonzero(order < len(grid))
    return nodes, idx


def cumulative_product(E):
    """Inclusive prefix products ``E[0] @ ... @ E[k]`` by a doubling scan."""
    P = np.array(E, dtype=float)
    d = 1
    while d < len(P):
        P[d:] = P[:-d] @ P[d:]
        d *= 2
    return P


def _node_frames(theta, nodes):
    """Frames at ``nodes`` starting from the identity at ``nodes[0]``."""
    h = np.diff(nodes)
    if len(h) == 0:
        return np.eye(3)[None]
    mids = nodes[:-1] + 0.5 * h
    E = exp_so3(h[:, None, None] * hat(theta.generator(mids)))
    return np.concatenate([np.eye(3)[None], cumulative_product(E)])


def fundamental_frames(theta, grid, max_step=DEFAULT_STEP):
    """Solution at ``grid`` of ``P' = P A`` with ``P(grid[0]) = I``."""
    grid = np.asarray(grid, dtype=float)
    nodes, idx = _nodes(grid, max_step, theta.domain[0])
    return _node_frames(theta, nodes)[idx]


def solve_frenet_path(theta, Q0, grid, max_step=DEFAULT_STEP):
    """Integrate the Frenet-Serret ODE from ``Q0`` at ``grid[0]``."""
    grid = np.asarray(grid, dtype=float)
    if len(grid) > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    P = fundamental_frames(theta, grid, max_step)
    return FrenetPath(grid, np.asarray(Q0, dtype=float) @ P)


def flow(theta, t, s, Q, max_step=DEFAULT_STEP):
    """Flow map: the frame at ``s + t`` of the solution through ``Q`` at ``s``."""
    Q = np.asarray(Q, dtype=float)
    if t == 0:
        return Q.copy()
    lo, hi = sorted((s, s + t))
    P = fundamental_frames(theta, np.array([lo, hi]), max_step)[-1]
    return Q @ P if t > 0 else Q @ P.T


def reconstruct_curve(theta, X0, Q0, grid, max_step=DEFAULT_STEP):
    """``X(s) = X0 + int_0^s T(u) du`` with the tangent taken from the frames.

    The tangent is integrated by the trapezoid rule on the integration nodes.
    """
    grid = np.asarray(grid, dtype=float)
    nodes, idx = _nodes(grid, max_step, theta.domain[0])
    T = (np.asarray(Q0, dtype=float) @ _node_frames(theta, nodes))[:, :, 0]
    steps = 0.5 * np.diff(nodes)[:, None] * (T[:-1] + T[1:])
    X = np.concatenate([np.zeros((1, 3)), np.cumsum(steps, axis=0)]) + np.asarray(X0, dtype=float)
    return ArclengthCurve(grid, X[idx], float(grid[-1] - grid[0]))


def rescale_theta(theta, L):
    """Parameters of the curve shrunk by ``1/L``: ``s -> L theta(s L)``.

    The parameter domain is divided by ``L``; with a domain ``[0, L]`` the
    result lives on ``[0, 1]``.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    lo, hi = theta.domain

    def scaled(spl):
        return BSpline(spl.t / L, spl.c * L, spl.k, extrapolate=spl.extrapolate)

    return ThetaFunction(scaled(theta.kappa), scaled(theta.tau), (lo / L, hi / L), theta.floor)
