import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from beamfuse.errors import SteeringDomainError
from beamfuse.phased_array import (PHASE_STEP_RAD, ArrayGeometry, SteeringVector, array_pattern, beam,
                                   default_angle_grid, global_maxima_deg, main_lobe_dominates,
                                   quantization_error_rad, quantize_phases, steering_phases,
                                   usable_steering_range)

LAM = 299792458.0 / 77e9
GEOM = ArrayGeometry.awr1843(LAM)


def test_boresight_phases_zero():
    assert steering_phases(GEOM, 0.0).phases_rad == (0.0, 0.0, 0.0)


def test_plus_minus_thirty_identical():
    p = steering_phases(GEOM, math.radians(30))
    m = steering_phases(GEOM, math.radians(-30))
    assert p.phases_rad == m.phases_rad
    assert p.phases_rad == pytest.approx((0.0, math.pi, 0.0), abs=1e-12)
    assert quantize_phases(p).quantized_steps == quantize_phases(m).quantized_steps == (0, 32, 0)


def test_fifteen_degree_phases():
    sv = steering_phases(GEOM, math.radians(15))
    assert sv.phases_rad == pytest.approx((0.0, 1.6262, 3.2524), abs=1e-4)


def test_quantization_examples():
    sv = quantize_phases(SteeringVector(0.0, (0.0, math.pi, 1.6262)))
    assert sv.quantized_steps == (0, 32, 17)
    err = math.degrees(quantization_error_rad(sv)[2])
    assert err == pytest.approx(2.445, abs=1e-2)


@given(st.floats(-89.9, 89.9))
def test_quantization_error_bound(theta):
    sv = beam(GEOM, theta)
    assert sv.phases_rad[0] == 0.0
    assert all(0 <= p < 2 * math.pi for p in sv.phases_rad)
    assert all(0 <= w < 64 for w in sv.quantized_steps)
    assert quantization_error_rad(sv).max() <= PHASE_STEP_RAD / 2 + 1e-12


@pytest.mark.parametrize("theta", [90.0, -90.0, 120.0])
def test_steering_domain(theta):
    with pytest.raises(SteeringDomainError):
        steering_phases(GEOM, math.radians(theta))


def _oracle_pattern(offsets_wl, phases, angles_deg, exponent):
    out = []
    for a in angles_deg:
        s = sum(cmath.exp(1j * (2 * math.pi * d * math.sin(math.radians(a)) - p)) for d, p in zip(offsets_wl, phases))
        out.append(abs(s) / len(offsets_wl) * max(math.cos(math.radians(a)), 0.0) ** exponent)
    out = np.array(out)
    return out / out.max()


@pytest.mark.parametrize("theta", [0.0, 15.0, -30.0, 45.0])
def test_pattern_matches_direct_sum(theta):
    sv = beam(GEOM, theta)
    grid = default_angle_grid(1.0)
    got = array_pattern(GEOM, sv, np.radians(grid))
    want = _oracle_pattern([0, 1, 2], sv.effective_phases(), grid, GEOM.element_exponent)
    np.testing.assert_allclose(got, want, atol=1e-12)


@given(st.floats(-60, 60))
def test_pattern_bounded(theta):
    g = array_pattern(GEOM, beam(GEOM, theta), np.radians(default_angle_grid()))
    assert g.min() >= 0 and g.max() == pytest.approx(1.0)


def test_boresight_pattern_symmetric():
    grid = default_angle_grid()
    g = array_pattern(GEOM, beam(GEOM, 0.0), np.radians(grid))
    np.testing.assert_allclose(g, g[::-1], atol=1e-12)
    assert 0.0 in global_maxima_deg(GEOM, beam(GEOM, 0.0))


def test_fifteen_main_lobe_and_forty_five_side_lobe():
    peaks = global_maxima_deg(GEOM, beam(GEOM, 15.0))
    assert np.any(np.abs(peaks - 15.0) <= 1.0)
    assert main_lobe_dominates(GEOM, beam(GEOM, 15.0))
    peaks45 = global_maxima_deg(GEOM, beam(GEOM, 45.0))
    assert np.all(np.abs(peaks45 - 45.0) > 1.0)
    assert not main_lobe_dominates(GEOM, beam(GEOM, 45.0))


def test_usable_range_awr1843():
    usable = usable_steering_range(GEOM, 5.0)
    for a in (0.0, 15.0, -15.0, 30.0, -30.0):
        assert a in usable
    assert 45.0 not in usable and -45.0 not in usable
    assert usable == [float(a) for a in range(-30, 31, 5)]


def test_usable_range_single_element_and_half_wavelength():
    single = ArrayGeometry((0.0,), LAM)
    assert usable_steering_range(single, 5.0) == [float(a) for a in range(-85, 90, 5)]
    half = ArrayGeometry.uniform(3, 0.5, LAM)
    assert set(usable_steering_range(GEOM, 5.0)) < set(usable_steering_range(half, 5.0))


def test_isotropic_option():
    iso = ArrayGeometry.awr1843(LAM, element_exponent=0.0)
    g = array_pattern(iso, beam(iso, 0.0, quantized=False), np.radians([-90.0, 0.0, 90.0]))
    # lambda spacing: grating lobes at +-90 equal the main lobe
    np.testing.assert_allclose(g, 1.0, atol=1e-12)
