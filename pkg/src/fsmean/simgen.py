"""Seeded generators for the simulation scenarios.

Every generator is a pure function of its config. Per-curve randomness comes
from independent child streams spawned from the master seed, so curve ``i``
does not depend on how many curves follow it.

Scenario tags:

* ``S1.1`` / ``S1.2``: random Matern perturbations of a reference
  ``(kappa, tau)``; observed as noisy frames / noisy points.
* ``S2.1`` / ``S2.2`` / ``S2.3``: space-warped copies of a reference
  ``(kappa, tau)``; frames / points / points with extra time warping.
* ``S3.1`` / ``S3.2``: random helix-like parametric curves.
* ``S4``: curves on the unit sphere around a spiral mean.
* ``D1`` / ``D2``: the torsion-varying and curvature-varying demonstration
  families (constant curvature 5, resp. zero torsion).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import legendre

from .frenet import ThetaFunction, reconstruct_curve, rescale_theta, solve_frenet_path
from .preprocess import EuclideanCurve
from .so3 import exp_so3, hat, sample_fisher_langevin

SCENARIOS = ("S1.1", "S1.2", "S2.1", "S2.2", "S2.3", "S3.1", "S3.2", "S4", "D1", "D2")
TRUTH_GRID = 200
ALPHA0 = 10.0
DEMO_LENGTH = 2.0


@dataclass(frozen=True)
class ScenarioConfig:
    """``alpha`` is the concentration of frame noise (0 = none); ``sigma_e``
    the standard deviation of additive point noise."""

    scenario: str
    n_curves: int = 25
    n_points: int = 100
    alpha: float = 0.0
    sigma_e: float = 0.0
    seed: int = 0
    sigma_p2: float | None = None
    kappa_policy: str = "reject"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; valid: {', '.join(SCENARIOS)}")
        if self.n_curves < 1 or self.n_points < 5:
            raise ValueError("need n_curves >= 1 and n_points >= 5")
        if self.alpha < 0 or self.sigma_e < 0:
            raise ValueError("noise levels must be non-negative")
        if self.kappa_policy not in ("reject", "abs"):
            raise ValueError("kappa_policy must be 'reject' or 'abs'")


@dataclass
class Dataset:
    """Simulated population with its ground truth.

    ``truth`` maps names (``kappa``, ``tau`` or ``kg``) to values on
    ``truth_grid``. ``scale`` is the factor by which parameter errors are
    divided before integration (the length of the original domain for S1).
    """

    config: ScenarioConfig
    paths: list | None = None
    curves: list | None = None
    thetas: list | None = None
    truth_grid: np.ndarray = field(default_factory=lambda: np.linspace(0, 1, TRUTH_GRID))
    truth: dict = field(default_factory=dict)
    scale: float = 1.0
    extra: dict = field(default_factory=dict)


def _streams(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def matern52(d, lengthscale=1.0):
    r = np.sqrt(5.0) * np.abs(d) / lengthscale
    return (1.0 + r + r * r / 3.0) * np.exp(-r)


def matern52_gp_sample(grid, lengthscale, rng, size=None):
    """Zero-mean Matern-5/2 draw(s) on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    if len(grid) > 2000:
        raise ValueError("grid too large for a dense factorization")
    K = matern52(grid[:, None] - grid[None, :], lengthscale)
    L = np.linalg.cholesky(K + 1e-10 * np.eye(len(grid)))
    n = 1 if size is None else int(size)
    out = (L @ rng.standard_normal((len(grid), n))).T
    return out[0] if size is None else out


def _observe_frames(path, alpha, rng):
    if alpha <= 0:
        return path
    M = sample_fisher_langevin(np.eye(3), alpha, rng, size=len(path))
    return replace(path, frames=path.frames @ M)


def _noisy_points(points, sigma, rng):
    if sigma <= 0:
        return points
    return points + sigma * rng.standard_normal(points.shape)


# ---------------------------------------------------------------- S1

def s1_mean(s):
    """Reference curvature and torsion on the original domain ``[0, 5]``."""
    return np.exp(np.sin(s)), 0.2 * s - 0.5


def gen_s1(config):
    cfg = config
    raw = np.linspace(0.0, 5.0, 251)
    kbar, tbar = s1_mean(raw)
    grid = np.linspace(0.0, 1.0, cfg.n_points)
    rngs = _streams(cfg.seed, cfg.n_curves)
    paths, curves, thetas = [], [], []
    rejected = 0
    for rng in rngs:
        for _ in range(100):
            z1, z2 = matern52_gp_sample(raw, 1.0, rng, size=2)
            k = kbar + 0.3 * z1
            if cfg.kappa_policy == "abs" or np.all(k > 0):
                break
            rejected += 1
        theta = rescale_theta(ThetaFunction.from_samples(raw, np.abs(k), tbar + 0.3 * z2), 5.0)
        Q0 = sample_fisher_langevin(np.eye(3), ALPHA0, rng)
        thetas.append(theta)
        if cfg.scenario == "S1.1":
            paths.append(_observe_frames(solve_frenet_path(theta, Q0, grid), cfg.alpha, rng))
        else:
            X = reconstruct_curve(theta, np.zeros(3), Q0, grid).points
            curves.append(EuclideanCurve(grid, _noisy_points(X, cfg.sigma_e, rng)))
    tg = np.linspace(0.0, 1.0, TRUTH_GRID)
    k, t = s1_mean(5.0 * tg)
    return Dataset(cfg, paths or None, curves or None, thetas, tg,
                   {"kappa": 5.0 * k, "tau": 5.0 * t}, 5.0, {"rejected_draws": rejected})


# ---------------------------------------------------------------- S2

def s2_mean(s):
    return 10.0 * (np.sin(3.0 * s) + 1.0), -10.0 * np.sin(2.0 * np.pi * s)


# below this |a| the closed forms lose all precision (or underflow), and the
# second-order Taylor expansion in a is exact to ~1e-12
_A_SERIES = 1e-6


def omega(s, a):
    """Inverse of the space warp ``gamma_a``."""
    s = np.asarray(s, dtype=float)
    if abs(a) < _A_SERIES:
        return s + 0.5 * a * s * (1.0 - s)
    return np.log1p(s * np.expm1(a)) / a


def omega_prime(s, a):
    s = np.asarray(s, dtype=float)
    if abs(a) < _A_SERIES:
        return 1.0 + a * (0.5 - s)
    return np.expm1(a) / (a * (s * np.expm1(a) + 1.0))


def gamma_warp(s, a):
    """``(e^{a s} - 1) / (e^a - 1)``."""
    s = np.asarray(s, dtype=float)
    if abs(a) < _A_SERIES:
        return s - 0.5 * a * s * (1.0 - s)
    return np.expm1(a * s) / np.expm1(a)


def time_warp(t, b):
    return t + b * np.sin(2.0 * np.pi * t)


def gen_s2(config):
    cfg = config
    N = cfg.n_curves
    a = np.linspace(-1.0, 1.0, N) if N > 1 else np.zeros(1)
    b = np.linspace(-0.1, 0.1, N) if N > 1 else np.zeros(1)
    fine = np.linspace(0.0, 1.0, 401)
    grid = np.linspace(0.0, 1.0, cfg.n_points)
    rngs = _streams(cfg.seed, N)
    paths, curves, thetas = [], [], []
    for i, rng in enumerate(rngs):
        w, dw = omega(fine, a[i]), omega_prime(fine, a[i])
        kb, tb = s2_mean(w)
        theta = ThetaFunction.from_samples(fine, dw * kb, dw * tb)
        Q0 = sample_fisher_langevin(np.eye(3), ALPHA0, rng)
        thetas.append(theta)
        if cfg.scenario == "S2.1":
            paths.append(_observe_frames(solve_frenet_path(theta, Q0, grid), cfg.alpha, rng))
            continue
        s = grid if cfg.scenario == "S2.2" else gamma_warp(time_warp(grid, b[i]), a[i])
        X = reconstruct_curve(theta, np.zeros(3), Q0, s).points
        curves.append(EuclideanCurve(grid, _noisy_points(X, cfg.sigma_e, rng)))
    tg = np.linspace(0.0, 1.0, TRUTH_GRID)
    k, t = s2_mean(tg)
    return Dataset(cfg, paths or None, curves or None, thetas, tg, {"kappa": k, "tau": t}, 1.0,
                   {"a": a, "b": b})


# ---------------------------------------------------------------- S3

def s3_curve(t, phi):
    a, b, c = phi
    return np.stack([np.cos(a * t), np.sin(b * t), c * t], axis=-1)


def s3_derivatives(t, phi):
    a, b, c = phi
    z = np.zeros_like(t)
    d1 = np.stack([-a * np.sin(a * t), b * np.cos(b * t), c + z], axis=-1)
    d2 = np.stack([-a * a * np.cos(a * t), -b * b * np.sin(b * t), z], axis=-1)
    d3 = np.stack([a ** 3 * np.sin(a * t), -b ** 3 * np.cos(b * t), z], axis=-1)
    return d1, d2, d3


def s3_theta(phi, s_grid, T=5.0, n_fine=4001):
    """Curvature and torsion of the S3 curve on normalized arclength.

    Returns ``(kappa, tau, L)`` with parameters multiplied by ``L`` so they
    describe the unit-length rescaled curve.
    """
    t = np.linspace(0.0, T, n_fine)
    d1, d2, d3 = s3_derivatives(t, phi)
    speed = np.linalg.norm(d1, axis=1)
    s = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (speed[1:] + speed[:-1]))])
    L = s[-1]
    tt = np.interp(s_grid * L, s, t)
    d1, d2, d3 = s3_derivatives(tt, phi)
    c = np.cross(d1, d2)
    nc = np.linalg.norm(c, axis=1)
    kappa = nc / np.linalg.norm(d1, axis=1) ** 3
    with np.errstate(invalid="ignore", divide="ignore"):
        tau = np.where(nc > 1e-12, np.einsum("ij,ij->i", c, d3) / np.where(nc > 0, nc, 1) ** 2, 0.0)
    return L * kappa, L * tau, L


PHI_REF = (1.0, 0.9, 0.8)


def gen_s3(config):
    cfg = config
    sp2 = cfg.sigma_p2 if cfg.sigma_p2 is not None else (0.02 if cfg.scenario == "S3.1" else 0.05)
    times = np.linspace(0.0, 5.0, cfg.n_points)
    tg = np.linspace(0.0, 1.0, TRUTH_GRID)
    rngs = _streams(cfg.seed, cfg.n_curves)
    curves, phis, ks, ts, Ls = [], [], [], [], []
    for rng in rngs:
        phi = np.asarray(PHI_REF) + np.sqrt(sp2) * rng.standard_normal(3)
        k, t, L = s3_theta(phi, tg)
        phis.append(phi)
        ks.append(k)
        ts.append(t)
        Ls.append(L)
        curves.append(EuclideanCurve(times, _noisy_points(s3_curve(times, phi), cfg.sigma_e, rng)))
    kr, tr, _ = s3_theta(PHI_REF, tg)
    truth = {"kappa": np.mean(ks, axis=0), "tau": np.mean(ts, axis=0)}
    extra = {"phi": np.array(phis), "lengths": np.array(Ls), "kappa_ref": kr, "tau_ref": tr}
    return Dataset(cfg, None, curves, None, tg, truth, 1.0, extra)


# ---------------------------------------------------------------- S4

def legendre_basis(x, K):
    """Orthonormal Legendre polynomials of degree ``0..K-1`` on ``[0, 1]``."""
    x = np.asarray(x, dtype=float)
    return np.stack([np.sqrt(2 * k + 1) * legendre.legval(2 * x - 1, np.eye(K)[k])
                     for k in range(K)], axis=-1)


def s4_angles(t):
    return 4.0 * t + 0.5, 5.0 * (t + 1.0)


def s4_mean(t):
    th, ph = s4_angles(t)
    return np.stack([np.sin(ph) * np.cos(th), np.sin(ph) * np.sin(th), np.cos(ph)], axis=-1)


def s4_rotation(t):
    """Rotation taking the north pole to ``mu(t)``: turn by ``phi`` about
    the horizontal axis orthogonal to ``(cos theta, sin theta, 0)``."""
    th, ph = s4_angles(np.asarray(t, dtype=float))
    x, y = -np.sin(th) * ph, np.cos(th) * ph
    # the cross-product matrix of (x, y, z) has vee-coordinates (z, x, -y)
    return exp_so3(hat(np.stack([np.zeros_like(x), x, -y], axis=-1)))


def sphere_exp(p, w):
    nw = np.linalg.norm(w, axis=-1, keepdims=True)
    safe = np.where(nw > 0, nw, 1.0)
    return np.cos(nw) * p + np.sin(nw) * w / safe


def s4_geodesic_curvature(s_grid, n_fine=20001):
    """Geodesic curvature of the mean curve on its normalized arclength."""
    t = np.linspace(0.0, 1.0, n_fine)
    th, ph = s4_angles(t)
    mu = s4_mean(t)
    mu_p = np.stack([np.cos(ph) * np.cos(th), np.cos(ph) * np.sin(th), -np.sin(ph)], -1)
    mu_t = np.stack([-np.sin(ph) * np.sin(th), np.sin(ph) * np.cos(th), 0 * t], -1)
    mu_pt = np.stack([-np.cos(ph) * np.sin(th), np.cos(ph) * np.cos(th), 0 * t], -1)
    mu_tt = np.stack([-np.sin(ph) * np.cos(th), -np.sin(ph) * np.sin(th), 0 * t], -1)
    d1 = 5.0 * mu_p + 4.0 * mu_t
    d2 = -25.0 * mu + 40.0 * mu_pt + 16.0 * mu_tt
    speed = np.linalg.norm(d1, axis=1)
    kg = np.einsum("ij,ij->i", mu, np.cross(d1, d2)) / speed ** 3
    s = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (speed[1:] + speed[:-1]))])
    return np.interp(np.asarray(s_grid) * s[-1], s, kg), float(s[-1])


def gen_s4(config):
    cfg = config
    t = np.linspace(0.0, 1.0, cfg.n_points)
    mu = s4_mean(t)
    R = s4_rotation(t)
    basis = np.stack([legendre_basis(t / 2, 20), legendre_basis((t + 1) / 2, 20)], axis=-1)
    # tangent fields phi_k(t) = R_t [Phi_k(t/2), Phi_k((t+1)/2), 0] / sqrt(2)
    fields = np.einsum("nij,nkj->nki", R[:, :, :2], basis) / np.sqrt(2.0)
    sd = np.sqrt(0.07 ** (np.arange(1, 21) / 2.0))
    rngs = _streams(cfg.seed, cfg.n_curves)
    curves, xs = [], []
    for rng in rngs:
        xi = sd * rng.standard_normal(20)
        x = sphere_exp(mu, np.einsum("k,nki->ni", xi, fields))
        xs.append(x)
        curves.append(EuclideanCurve(t, _noisy_points(x, cfg.sigma_e, rng)))
    tg = np.linspace(0.0, 1.0, TRUTH_GRID)
    kg, L = s4_geodesic_curvature(tg)
    return Dataset(cfg, None, curves, None, tg, {"kg": kg}, 1.0,
                   {"mean_length": L, "clean": np.array(xs)})


# ---------------------------------------------------------------- demonstration families

def gen_demo(config, length=DEMO_LENGTH):
    """Demonstration families on normalized arclength of a curve of physical ``length``.

    ``D1``: curvature 5, torsion ``-3 a_i sin(2 pi s)``. ``D2``: signed
    curvature ``-a_i |3 sin(pi s)|``, torsion 0. Parameters are physical
    (per unit length); paths carry ``length`` times them on ``[0, 1]``.
    """
    cfg = config
    N = cfg.n_curves
    a = np.linspace(-1.0, 1.0, N) if N > 1 else np.zeros(1)
    grid = np.linspace(0.0, 1.0, cfg.n_points)
    fine = np.linspace(0.0, 1.0, 401)
    L = float(length)
    paths, curves, thetas = [], [], []
    for ai in a:
        if cfg.scenario == "D1":
            theta = ThetaFunction.from_samples(fine, np.full_like(fine, 5.0 * L),
                                               -3.0 * L * ai * np.sin(2 * np.pi * fine))
        else:
            theta = ThetaFunction.from_samples(fine, -L * ai * np.abs(3.0 * np.sin(np.pi * fine)),
                                               np.zeros_like(fine), floor=False)
        thetas.append(theta)
        paths.append(solve_frenet_path(theta, np.eye(3), grid))
        pts = reconstruct_curve(theta, np.zeros(3), np.eye(3), grid).points * L
        curves.append(EuclideanCurve(grid, pts))
    tg = np.linspace(0.0, 1.0, TRUTH_GRID)
    k = 5.0 * L if cfg.scenario == "D1" else 0.0
    truth = {"kappa": np.full(TRUTH_GRID, k), "tau": np.zeros(TRUTH_GRID)}
    return Dataset(cfg, paths, curves, thetas, tg, truth, L, {"a": a, "length": L})


def generate(config):
    """Dispatch on the scenario tag."""
    tag = config.scenario
    if tag.startswith("S1"):
        return gen_s1(config)
    if tag.startswith("S2"):
        return gen_s2(config)
    if tag.startswith("S3"):
        return gen_s3(config)
    if tag == "S4":
        return gen_s4(config)
    return gen_demo(config)
