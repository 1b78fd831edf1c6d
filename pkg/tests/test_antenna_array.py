import numpy as np
import pytest
from hypothesis import given, settings as hsettings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from app.exceptions import ContractViolation
from app.models.schemas import ArrayConfig, ElementKind, ElementModel, EvalModel, Mechanism
from app.services.antenna_array import (
    IDEAL_ELEMENT,
    element_for,
    element_gain,
    element_spacing,
    steering_phases,
    steering_weights,
    ttd_delays,
    wavelength,
)

aods = st.floats(min_value=-89.0, max_value=89.0, allow_nan=False)


def test_spacing_is_half_wavelength(patch_array):
    assert element_spacing(patch_array) == pytest.approx(wavelength(28.5) / 2)
    assert wavelength(28.5) == pytest.approx(0.0105190, rel=1e-5)


def test_broadside_phases_are_zero(patch_array):
    assert_allclose(steering_phases(patch_array, 0.0), np.zeros(28), atol=1e-15)


def test_two_element_phase():
    phases = steering_phases(ArrayConfig(n_elements=2), 30.0)
    assert phases[1] - phases[0] == pytest.approx(-np.pi / 2)


def test_phase_increment_at_18_deg(patch_array):
    phases = steering_phases(patch_array, 18.0)
    assert_allclose(np.diff(phases), -0.970806, atol=1e-6)


def test_ttd_delay_increment(patch_array):
    delays = ttd_delays(patch_array, 30.0)
    assert_allclose(np.diff(delays), 8.772e-12, rtol=1e-3)


@hsettings(max_examples=50, deadline=None)
@given(aods)
def test_phases_are_odd_in_aod(aod):
    cfg = ArrayConfig()
    assert_allclose(steering_phases(cfg, -aod), -steering_phases(cfg, aod), atol=1e-12)


def test_ttd_weights_match_phase_weights_at_fc(patch_array):
    phase = steering_weights(patch_array, Mechanism.PHASE, 24.0, 28.5)
    ttd = steering_weights(patch_array, Mechanism.TTD, 24.0, 28.5)
    assert_allclose(phase, ttd, atol=1e-9)


def test_steering_rejects_endfire(patch_array):
    with pytest.raises(ContractViolation):
        steering_phases(patch_array, 90.0)
    with pytest.raises(ContractViolation):
        ttd_delays(patch_array, -95.0)
    with pytest.raises(ContractViolation):
        steering_weights(patch_array, Mechanism.LENS_FEED, 10.0, 28.5)


def test_ideal_element_is_unity():
    theta = np.linspace(-90, 90, 7)
    assert_allclose(element_gain(IDEAL_ELEMENT, 27.0, theta, 28.5, [27.0, 30.0]), np.ones(7))


def test_patch_element_gain():
    patch = ElementModel(kind=ElementKind.NARROWBAND_PATCH)
    band = [27.0, 30.0]
    assert element_gain(patch, 28.5, 0.0, 28.5, band) == pytest.approx(10 ** 0.5)
    for f in band:
        ratio = element_gain(patch, f, 0.0, 28.5, band) / element_gain(patch, 28.5, 0.0, 28.5, band)
        assert 10 * np.log10(ratio) == pytest.approx(-0.4)
    assert element_gain(patch, 28.5, 90.0, 28.5, band) == pytest.approx(0.0, abs=1e-15)


@hsettings(max_examples=50, deadline=None)
@given(st.floats(min_value=0.0, max_value=90.0), st.floats(min_value=27.0, max_value=30.0))
def test_patch_gain_is_even_and_peaks_on_axis(theta, f):
    patch = ElementModel(kind=ElementKind.NARROWBAND_PATCH)
    band = [27.0, 30.0]
    g = element_gain(patch, f, theta, 28.5, band)
    assert g == pytest.approx(element_gain(patch, f, -theta, 28.5, band))
    assert g <= element_gain(patch, f, 0.0, 28.5, band) * (1 + 1e-12)


def test_element_for_eval_models(patch_array):
    assert element_for(patch_array, EvalModel.EM1) == patch_array.element
    assert element_for(patch_array, EvalModel.EM2) == IDEAL_ELEMENT
