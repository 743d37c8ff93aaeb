import math

import numpy as np
import pytest

from raaloc.geometry import (SPEED_OF_LIGHT, ArrayGeometry, FieldOfViewError,
                             Pose, RfParams, bearing, path_loss,
                             planar_steering_vector, ray_angle_from_x,
                             steering_vector)

LAM = 0.01  # arbitrary test wavelength


def test_steering_zero_angle_all_equal():
    v = steering_vector(ArrayGeometry.linear(4), 0.0, LAM)
    assert np.allclose(v, 0.5 * np.ones(4), atol=1e-15)


def test_steering_thirty_degrees_quarter_turns():
    # sin 30 deg = 1/2 with half-wavelength spacing forces a pi/2 phase step
    v = steering_vector(ArrayGeometry.linear(4), math.radians(30), LAM)
    expected = 0.5 * np.array([1, 1j, -1, -1j])
    assert np.allclose(v, expected, atol=1e-12)


def test_steering_matches_scalar_loop_oracle():
    n = 100
    angle = math.radians(17.3)
    v = steering_vector(ArrayGeometry.linear(n), angle, LAM)
    delta = LAM / 2
    for k in range(n):
        phase = 2 * math.pi / LAM * k * delta * math.sin(angle)
        expected = complex(math.cos(phase), math.sin(phase)) / math.sqrt(n)
        assert abs(v[k] - expected) < 1e-12


def test_steering_unit_norm_and_rejections():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 200))
        angle = rng.uniform(-math.pi / 2, math.pi / 2)
        v = steering_vector(ArrayGeometry.linear(n), angle, LAM)
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        steering_vector(ArrayGeometry.planar(2, 2), 0.0, LAM)
    with pytest.raises(ValueError):
        steering_vector(ArrayGeometry.linear(4), 1.8, LAM)


def test_dft_grid_orthogonality():
    for n in (8, 16, 100):
        v0 = steering_vector(ArrayGeometry.linear(n), 0.0, LAM)
        v1 = steering_vector(ArrayGeometry.linear(n), math.asin(2.0 / n), LAM)
        assert abs(np.vdot(v0, v1)) < 1e-12
        assert abs(abs(np.vdot(v0, v0)) - 1.0) < 1e-12


def test_planar_trivial_cases():
    v = planar_steering_vector(ArrayGeometry.planar(2, 2), 0.0, LAM)
    assert np.allclose(v, 0.5 * np.ones(4), atol=1e-15)
    v10 = planar_steering_vector(ArrayGeometry.planar(10, 10), 0.0, LAM)
    assert np.allclose(v10, np.full(100, 0.1), atol=1e-15)


def test_planar_matches_kron_scalar_oracle():
    nx, ny = 4, 2
    azimuth = math.radians(30)
    v = planar_steering_vector(ArrayGeometry.planar(nx, ny), azimuth, LAM)
    assert v.size == nx * ny
    delta = LAM / 2
    for ix in range(nx):
        for iy in range(ny):
            phase = 2 * math.pi / LAM * ix * delta * math.sin(azimuth)
            expected = complex(math.cos(phase), math.sin(phase)) / math.sqrt(nx * ny)
            assert abs(v[ix * ny + iy] - expected) < 1e-12


def test_planar_reduces_to_linear():
    geom = ArrayGeometry.planar(8, 1)
    v = planar_steering_vector(geom, 0.4, LAM)
    u = steering_vector(ArrayGeometry.linear(8), 0.4, LAM)
    assert np.allclose(v, u, atol=1e-15)


def test_path_loss_root_and_square_law():
    assert abs(path_loss(LAM / (4 * math.pi), LAM) - 1.0) < 1e-12
    assert abs(path_loss(2.0, LAM) / path_loss(1.0, LAM) - 4.0) < 1e-12


def test_path_loss_golden_28ghz_10m():
    lam = SPEED_OF_LIGHT / 28e9
    value = path_loss(10.0, lam)
    oracle = (4 * math.pi * 10.0 * 28e9 / SPEED_OF_LIGHT) ** 2
    assert abs(value - oracle) < 1e-3 * oracle
    assert abs(value - 1.378e8) < 1e-3 * 1.378e8  # ~81.4 dB
    with pytest.raises(ValueError):
        path_loss(0.0, lam)


def test_bearing_axis_cases():
    pose = Pose(0.0, 0.0, 0.0)
    assert abs(bearing(pose, (0.0, 5.0))) < 1e-15
    assert abs(bearing(pose, (5.0, 5.0)) - math.pi / 4) < 1e-12
    assert abs(bearing(pose, (-5.0, 5.0)) + math.pi / 4) < 1e-12


def test_bearing_rotation_matrix_oracle():
    rng = np.random.default_rng(7)
    for _ in range(100):
        pose = Pose(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-math.pi, math.pi))
        point = (pose.x + rng.uniform(-10, 10), pose.z + rng.uniform(-10, 10))
        d = np.array([point[0] - pose.x, point[1] - pose.z])
        # rotate the world so the boresight becomes +z, then read the angle
        c, s = math.cos(pose.orientation), math.sin(pose.orientation)
        local = np.array([[c, -s], [s, c]]) @ d
        if local[1] <= 0:
            with pytest.raises((FieldOfViewError, ValueError)):
                bearing(pose, point)
            continue
        assert abs(bearing(pose, point) - math.atan2(local[0], local[1])) < 1e-12


def test_bearing_errors():
    pose = Pose(1.0, 2.0, 0.0)
    with pytest.raises(ValueError):
        bearing(pose, (1.0, 2.0))
    with pytest.raises(FieldOfViewError):
        bearing(pose, (1.0, 1.0))


def test_ray_angle_from_x_conventions():
    # boresight +z, zero bearing: ray points along +z, i.e. pi/2 from the +x axis
    assert abs(ray_angle_from_x(Pose(0, 0, 0.0), 0.0) - math.pi / 2) < 1e-15
    # boresight +x (orientation pi/2), zero bearing: ray along +x
    assert abs(ray_angle_from_x(Pose(0, 0, math.pi / 2), 0.0)) < 1e-15


def test_rf_params_wavelength_consistency():
    rf = RfParams(carrier_frequency=28e9, bandwidth=1e7, symbol_time=1e-7, tx_power=1e-3)
    assert abs(rf.wavelength - SPEED_OF_LIGHT / 28e9) < 1e-18
    RfParams(carrier_frequency=28e9, bandwidth=1e7, symbol_time=1e-7, tx_power=1e-3,
             wavelength=SPEED_OF_LIGHT / 28e9)
    with pytest.raises(ValueError):
        RfParams(carrier_frequency=28e9, bandwidth=1e7, symbol_time=1e-7,
                 tx_power=1e-3, wavelength=0.011)
    with pytest.raises(ValueError):
        RfParams(carrier_frequency=-1.0, bandwidth=1e7, symbol_time=1e-7, tx_power=1e-3)


def test_spacing_override_changes_phases():
    geom = ArrayGeometry.linear(4, spacing=LAM / 4)
    v = steering_vector(geom, math.radians(30), LAM)
    # quarter-wavelength spacing halves the phase step: pi/4 per element
    step = np.angle(v[1] / v[0])
    assert abs(step - math.pi / 4) < 1e-12
