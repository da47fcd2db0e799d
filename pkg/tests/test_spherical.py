import numpy as np
import pytest

from fsmean.errors import DegenerateSpeed
from fsmean.estimator import Hyperparams
from fsmean.frenet import ArclengthCurve
from fsmean.metrics import d_norm
from fsmean.preprocess import EuclideanCurve
from fsmean.simgen import ScenarioConfig, generate
from fsmean.spherical import (GeodesicCurvature, estimate_mean_kg, mean_spherical_curve,
                              reconstruct_spherical_curve, spherical_a, spherical_frames,
                              spherical_frames_from_samples)
from oracles import skew


def small_circle(phi0, n=200):
    """Circle at polar angle ``phi0``; its geodesic curvature is ``cot(phi0)``."""
    s = np.linspace(0.0, 1.0, n)
    t = 2 * np.pi * s * 0.8
    P = np.stack([np.sin(phi0) * np.cos(t), np.sin(phi0) * np.sin(t), np.cos(phi0) * np.ones_like(t)], -1)
    return ArclengthCurve(s, P, 2 * np.pi * 0.8 * np.sin(phi0))


def test_spherical_generator_layout():
    assert np.array_equal(spherical_a(0.7), skew(1.0, 0.7, 0.0))
    assert spherical_a(np.zeros(4)).shape == (4, 3, 3)


def test_geodesic_curvature_of_small_circle():
    c = small_circle(np.pi / 4)
    path = spherical_frames(c, 0.08)
    assert np.max(np.abs(np.swapaxes(path.frames, 1, 2) @ path.frames - np.eye(3))) < 1e-12
    assert np.allclose(path.frames[:, :, 0], c.points, atol=1e-12)
    kg = estimate_mean_kg([path], Hyperparams(0.05, 1e-8, 1e-8))
    s = np.linspace(0.1, 0.9, 50)
    # cot(pi/4) = 1
    assert np.max(np.abs(kg(s) - 1.0)) < 1e-5
    assert kg.length == pytest.approx(c.length)
    assert kg.diagnostics["unit_slot_deviation"] < 1e-5


def test_great_circle_has_zero_kg():
    c = small_circle(np.pi / 2)
    kg = estimate_mean_kg([spherical_frames(c, 0.08)], Hyperparams(0.05, 1e-8, 1e-8))
    assert np.max(np.abs(kg(np.linspace(0, 1, 50)))) < 1e-6


def test_reconstruction_stays_on_sphere():
    kg = GeodesicCurvature.constant(1.0, length=2 * np.pi * 0.8 * np.sin(np.pi / 4))
    c = small_circle(np.pi / 4, 100)
    F0 = spherical_frames(c, 0.08).frames[0]
    rec = reconstruct_spherical_curve(kg, F0, c.grid)
    assert d_norm(rec) < 1e-10
    assert np.max(np.abs(rec.points - c.points)) < 1e-5
    with pytest.raises(ValueError):
        reconstruct_spherical_curve(kg, 2 * np.eye(3), c.grid)


def test_off_sphere_and_degenerate_inputs():
    c = small_circle(np.pi / 3)
    with pytest.raises(ValueError):
        spherical_frames(ArclengthCurve(c.grid, 1.1 * c.points), 0.08)
    still = ArclengthCurve(c.grid, np.tile([0.0, 0.0, 1.0], (len(c.grid), 1)))
    with pytest.raises(DegenerateSpeed):
        spherical_frames(still, 0.08)


def test_s4_noiseless_pipeline():
    ds = generate(ScenarioConfig("S4", n_curves=10, seed=2))
    paths = [spherical_frames_from_samples(c, 0.05, 0.08)[1] for c in ds.curves]
    kg = estimate_mean_kg(paths, Hyperparams(0.05, 1e-8, 1e-8))
    tg = ds.truth_grid
    err = np.trapezoid((kg(tg) - ds.truth["kg"]) ** 2, tg)
    assert err < 0.15
    mean = mean_spherical_curve(kg, paths, np.linspace(0, 1, 100))
    assert d_norm(mean) < 1e-5
    assert mean.length == pytest.approx(np.mean([p.length for p in paths]))


def test_frames_from_raw_samples_project_to_sphere():
    c = small_circle(np.pi / 4)
    noisy = EuclideanCurve(np.linspace(0, 3, len(c.grid)), 1.001 * c.points)
    ac, path = spherical_frames_from_samples(noisy, 0.05, 0.08)
    assert d_norm(ac) < 1e-12
    assert path.length == pytest.approx(c.length, rel=1e-3)
