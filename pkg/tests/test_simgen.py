import numpy as np
import pytest
from hypothesis import given, strategies as st

from fsmean.alignment import Warping, warp_action
from fsmean.baselines import arithmetic_mean, extrinsic_of_curve
from fsmean.metrics import d_norm
from fsmean.preprocess import DerivativeJet, extrinsic_theta
from fsmean.simgen import (SCENARIOS, ScenarioConfig, gamma_warp, generate, matern52, matern52_gp_sample,
                           omega, omega_prime, s1_mean, s2_mean, s3_curve, s3_derivatives, s3_theta,
                           s4_geodesic_curvature, s4_mean, s4_rotation, time_warp)


@pytest.mark.parametrize("tag", SCENARIOS)
def test_shapes_and_determinism(tag):
    cfg = ScenarioConfig(tag, n_curves=4, n_points=30, seed=11)
    a, b = generate(cfg), generate(cfg)
    items = a.paths if a.paths is not None else a.curves
    assert len(items) == 4
    for x, y in zip(items, b.paths if b.paths is not None else b.curves):
        arr = getattr(x, "frames", None)
        arr = x.points if arr is None else arr
        arr2 = getattr(y, "frames", None)
        arr2 = y.points if arr2 is None else arr2
        assert np.array_equal(arr, arr2)
        assert len(arr) == 30
    assert len(a.truth_grid) == 200
    assert set(a.truth) in ({"kappa", "tau"}, {"kg"})


def test_child_streams_do_not_depend_on_population_size():
    a = generate(ScenarioConfig("S1.2", n_curves=3, seed=4))
    b = generate(ScenarioConfig("S1.2", n_curves=6, seed=4))
    for x, y in zip(a.curves, b.curves):
        assert np.array_equal(x.points, y.points)


def test_config_validation():
    with pytest.raises(ValueError, match="valid"):
        ScenarioConfig("S9")
    with pytest.raises(ValueError):
        ScenarioConfig("S1.1", n_points=3)
    with pytest.raises(ValueError):
        ScenarioConfig("S1.1", sigma_e=-1)
    with pytest.raises(ValueError):
        ScenarioConfig("S1.1", kappa_policy="clip")


def test_matern_covariance_matches_empirical():
    grid = np.array([0.0, 0.3, 1.0])
    draws = matern52_gp_sample(grid, 1.0, np.random.default_rng(0), size=40000)
    emp = np.cov(draws.T)
    K = matern52(grid[:, None] - grid[None, :])
    assert np.max(np.abs(emp - K)) < 0.03
    assert matern52(0.0) == 1.0
    # closed form at d = 1: (1 + sqrt5 + 5/3) exp(-sqrt5)
    assert matern52(1.0) == pytest.approx((1 + np.sqrt(5) + 5 / 3) * np.exp(-np.sqrt(5)), rel=1e-15)


@given(st.floats(-2, 2))
def test_warp_family_inverse(a):
    s = np.linspace(0, 1, 101)
    assert np.all(np.diff(omega(s, a)) > 0) and np.all(np.diff(gamma_warp(s, a)) > 0)
    assert np.max(np.abs(gamma_warp(omega(s, a), a) - s)) < 1e-12
    h = 1e-6
    fd = (omega(np.clip(s + h, 0, 1), a) - omega(np.clip(s - h, 0, 1), a)) / (np.clip(s + h, 0, 1) - np.clip(s - h, 0, 1))
    assert np.max(np.abs(fd - omega_prime(s, a))) < 1e-5 * max(1, np.exp(abs(a)))


def test_time_warp_monotone():
    t = np.linspace(0, 1, 500)
    for b in (-0.1, 0.1):
        assert np.all(np.diff(time_warp(t, b)) > 0)


def test_s1_truth_scaled_to_original_units():
    ds = generate(ScenarioConfig("S1.1", n_curves=3))
    k, t = s1_mean(5.0 * ds.truth_grid)
    assert np.allclose(ds.truth["kappa"], 5 * k) and ds.scale == 5.0
    # each path's parameters live on [0, 1] with length-5 scaling
    assert ds.thetas[0].domain == (0.0, 1.0)
    assert np.all(ds.thetas[0].kappa_at(ds.truth_grid) > 0)


def test_s1_kappa_policy_abs():
    ds = generate(ScenarioConfig("S1.2", n_curves=5, kappa_policy="abs"))
    assert ds.extra["rejected_draws"] == 0


def test_s2_curves_are_warped_copies():
    ds = generate(ScenarioConfig("S2.1", n_curves=5))
    g = np.linspace(0, 1, 401)
    truth = np.stack(s2_mean(g), -1)
    for a, th in zip(ds.extra["a"], ds.thetas):
        expect = warp_action(truth, Warping(g, omega(g, a)))
        assert np.max(np.abs(th.sample(g)[5:-5] - expect[5:-5])) < 1e-2 * np.max(np.abs(truth))
    # the symmetric warp family has identity geometric mean, so the truth is s2_mean itself
    assert np.allclose(ds.truth["kappa"], s2_mean(ds.truth_grid)[0])


def test_s2_3_time_warp_keeps_curves_in_shape():
    a = generate(ScenarioConfig("S2.2", n_curves=3))
    b = generate(ScenarioConfig("S2.3", n_curves=3))
    for x, y in zip(a.curves, b.curves):
        assert np.allclose(x.points[[0, -1]], y.points[[0, -1]], atol=1e-8)


def test_s3_theta_against_extrinsic_formula():
    phi = (1.0, 0.9, 0.8)
    t = np.linspace(0, 5, 4001)
    k_ext, tau_ext = extrinsic_theta(DerivativeJet(t, *s3_derivatives(t, phi)))
    kf, tf, L = s3_theta(phi, np.linspace(0, 1, 4001))
    # normalized-arclength parameters are L times the physical ones
    assert kf.max() / L == pytest.approx(k_ext.max(), rel=1e-4)
    assert tf.min() / L == pytest.approx(tau_ext.min(), rel=1e-4)
    assert kf[0] / L == pytest.approx(k_ext[0], rel=1e-10)
    assert L > 5 * 0.8
    t = np.linspace(0, 5, 11)
    fd = (s3_curve(t + 1e-6, phi) - s3_curve(t - 1e-6, phi)) / 2e-6
    assert np.allclose(fd, s3_derivatives(t, phi)[0], atol=1e-6)


def test_s4_mean_and_rotation():
    t = np.linspace(0, 1, 50)
    R = s4_rotation(t)
    assert np.allclose(R[:, :, 2], s4_mean(t), atol=1e-12)
    assert np.allclose(np.swapaxes(R, 1, 2) @ R, np.eye(3), atol=1e-12)
    ds = generate(ScenarioConfig("S4", n_curves=3))
    for c in ds.curves:
        assert d_norm(c.points) < 1e-10
    kg, L = s4_geodesic_curvature(np.linspace(0, 1, 5))
    assert L > 0 and np.all(np.isfinite(kg))


def test_s4_noise_moves_points_off_sphere():
    ds = generate(ScenarioConfig("S4", n_curves=2, sigma_e=0.01))
    assert d_norm(ds.curves[0].points) > 1e-3


def test_demo_family_arithmetic_spike():
    ds = generate(ScenarioConfig("D1"))
    assert ds.extra["length"] == 2.0 and ds.scale == 2.0
    m = arithmetic_mean(ds.curves)
    _, k, _ = extrinsic_of_curve(m, 0.08, 200)
    assert np.max(k / m.length) > 10.0
    for c in ds.curves:
        _, kc, _ = extrinsic_of_curve(c, 0.08, 200)
        assert np.max(np.abs(kc[20:-20] / 2.0 - 5.0)) < 0.05


def test_demo_family_d2_planar():
    ds = generate(ScenarioConfig("D2", n_curves=3))
    for c in ds.curves:
        assert np.allclose(c.points[:, 2], 0.0, atol=1e-12)
