import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fsmean.errors import AngleNearPi, NoConvergence, SingularInput
from fsmean.so3 import (exp_so3, geodesic_dist, hat, karcher_mean, log_so3, log_so3_masked,
                        project_so3, rotation_angle, sample_fisher_langevin, uniform_rotation, vee)
from oracles import expm_series, skew

vec = arrays(np.float64, 3, elements=st.floats(-3.0, 3.0))
small_angle_vec = arrays(np.float64, 3, elements=st.floats(-1.7, 1.7))


def test_hat_layout():
    assert np.array_equal(hat([1.0, 2.0, 3.0]), skew(1.0, 2.0, 3.0))
    assert np.array_equal(vee(skew(1.0, 2.0, 3.0)), [1.0, 2.0, 3.0])


@given(vec)
def test_hat_vee_roundtrip(v):
    S = hat(v)
    assert np.allclose(S, -S.T)
    assert np.array_equal(vee(S), v)


@given(vec)
def test_exp_matches_series(v):
    assert np.max(np.abs(exp_so3(hat(v)) - expm_series(hat(v)))) < 1e-12


def test_exp_frozen_value():
    # checked against expm_series; frozen here
    R = exp_so3(hat([0.3, -0.2, 0.5]))
    assert R[0, 0] == pytest.approx(0.8353156052067083, abs=1e-14)
    assert R[2, 1] == pytest.approx(-0.2602267140480945, abs=1e-14)
    assert np.max(np.abs(R - expm_series(hat([0.3, -0.2, 0.5])))) < 1e-14


@given(vec)
def test_exp_is_rotation(v):
    R = exp_so3(hat(v))
    assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-13
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-13)


@given(small_angle_vec)
def test_log_exp_roundtrip(v):
    if np.linalg.norm(v) > np.pi - 1e-3:
        v = v * (np.pi - 1e-3) / np.linalg.norm(v)
    assert np.max(np.abs(log_so3(exp_so3(hat(v))) - hat(v))) <= 1e-12


@given(arrays(np.float64, 3, elements=st.floats(-1e-5, 1e-5)))
def test_log_exp_roundtrip_tiny_angles(v):
    assert np.max(np.abs(log_so3(exp_so3(hat(v))) - hat(v))) <= 1e-15


def test_log_near_pi_raises():
    R = exp_so3(hat([np.pi, 0.0, 0.0]))
    with pytest.raises(AngleNearPi):
        log_so3(R)
    S, mask = log_so3_masked(np.stack([R, np.eye(3)]))
    assert mask.tolist() == [True, False]
    assert np.all(S[0] == 0)


def test_rotation_angle_and_distance():
    v = np.array([0.2, 0.4, -0.4])
    R = exp_so3(hat(v))
    assert rotation_angle(R) == pytest.approx(0.6, abs=1e-14)
    assert geodesic_dist(np.eye(3), R) == pytest.approx(np.sqrt(2) * 0.6, abs=1e-14)


@given(vec, vec)
def test_geodesic_distance_left_invariant(a, b):
    rng = np.random.default_rng(0)
    G = uniform_rotation(rng)
    M, N = exp_so3(hat(a * 0.5)), exp_so3(hat(b * 0.5))
    try:
        d = geodesic_dist(M, N)
    except AngleNearPi:
        return
    assert geodesic_dist(G @ M, G @ N) == pytest.approx(d, abs=1e-10)


def test_project_so3():
    rng = np.random.default_rng(1)
    R = uniform_rotation(rng)
    assert np.max(np.abs(project_so3(R) - R)) < 1e-14
    P = project_so3(R + 1e-3 * rng.standard_normal((3, 3)))
    assert np.max(np.abs(P.T @ P - np.eye(3))) < 1e-14
    assert np.max(np.abs(P - R)) < 1e-2
    with pytest.raises(SingularInput):
        project_so3(np.zeros((3, 3)))


def test_karcher_mean_of_symmetric_pair():
    v = np.array([0.0, 0.3, 0.0])
    M = karcher_mean([exp_so3(hat(v)), exp_so3(hat(-v))])
    assert np.max(np.abs(M - np.eye(3))) < 1e-12


@given(small_angle_vec)
def test_karcher_mean_left_equivariant(v):
    rng = np.random.default_rng(2)
    Rs = sample_fisher_langevin(np.eye(3), 20.0, rng, size=6)
    G = exp_so3(hat(v))
    assert np.max(np.abs(karcher_mean(G @ Rs) - G @ karcher_mean(Rs))) < 1e-10


def test_karcher_no_convergence():
    rng = np.random.default_rng(3)
    Rs = uniform_rotation(rng, size=20)
    with pytest.raises((NoConvergence, AngleNearPi)):
        karcher_mean(Rs, tol=1e-300, max_iter=2)


def test_fisher_langevin_concentration():
    rng = np.random.default_rng(4)
    mean = exp_so3(hat([0.5, 0.1, -0.2]))
    draws = sample_fisher_langevin(mean, 50.0, rng, size=2000)
    assert np.max(np.abs(np.swapaxes(draws, 1, 2) @ draws - np.eye(3))) < 1e-12
    ang = rotation_angle(np.swapaxes(draws, 1, 2) @ mean)
    # small-angle limit: angle^2 ~ chi^2_3 / (2 c) -> E = 3 / 100
    assert np.mean(ang ** 2) == pytest.approx(0.03, rel=0.1)
    assert np.max(np.abs(karcher_mean(draws) - mean)) < 0.02


def test_fisher_langevin_seed_determinism():
    a = sample_fisher_langevin(np.eye(3), 10.0, np.random.default_rng(5), size=10)
    b = sample_fisher_langevin(np.eye(3), 10.0, np.random.default_rng(5), size=10)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        sample_fisher_langevin(np.eye(3), -1.0, np.random.default_rng(0))
