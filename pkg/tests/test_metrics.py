import numpy as np
import pytest

from app.exceptions import BeamTooBroadError, ContractViolation
from app.models.schemas import AntennaKind, ArrayConfig, ElementKind, ElementModel, EvalModel, Mechanism
from app.services.beampattern import phased_pattern, squint_free_pattern, theta_grid
from app.services.metrics import (
    EXTERNAL_FACTOR,
    REPORT_COLUMNS,
    angle_distortion,
    bf_gain_ratio,
    causative_factors,
    hpbw,
    power_difference,
    squint_report,
)

AODS = (6.0, 12.0, 18.0, 24.0, 30.0)
BAND = [27.0, 27.5, 28.0, 29.0, 29.5, 30.0]


def reports(cfg, mechanism, theta, kind=AntennaKind.PHASED):
    out = {}
    for em in (EvalModel.EM1, EvalModel.EM2):
        patterns = [phased_pattern(cfg, mechanism, aod, em, theta) for aod in AODS]
        out[em] = squint_report(patterns, kind, BAND, antenna=kind.value)
    return out


def test_metrics_vanish_at_fc(patch_array, coarse_theta):
    pattern = phased_pattern(patch_array, Mechanism.PHASE, 18.0, EvalModel.EM1, coarse_theta)
    assert angle_distortion(pattern, 28.5) == 0.0
    assert power_difference(pattern, 28.5) == 0.0
    assert bf_gain_ratio(pattern, 28.5) == pytest.approx(100.0)


def test_narrowband_element_power_difference(patch_array, fine_theta):
    pattern = phased_pattern(patch_array, Mechanism.PHASE, 6.0, EvalModel.EM1, fine_theta)
    pd = power_difference(pattern, 27.0)
    assert pd < 0
    assert 0.2 <= abs(pd) <= 0.6


def test_element_barely_moves_the_peak(patch_array, fine_theta):
    em1 = phased_pattern(patch_array, Mechanism.PHASE, 30.0, EvalModel.EM1, fine_theta)
    em2 = phased_pattern(patch_array, Mechanism.PHASE, 30.0, EvalModel.EM2, fine_theta)
    for f in BAND:
        assert angle_distortion(em1, f) == pytest.approx(angle_distortion(em2, f), abs=0.05)


def test_gain_ratio_at_widest_scan(calibrated_array, fine_theta):
    pattern = phased_pattern(calibrated_array, Mechanism.PHASE, 30.0, EvalModel.EM1, fine_theta)
    for f in (27.0, 30.0):
        assert 60.0 <= bf_gain_ratio(pattern, f) <= 75.0


def test_gain_ratio_is_bounded_by_peak_ratio(patch_array, coarse_theta):
    pattern = phased_pattern(patch_array, Mechanism.PHASE, 24.0, EvalModel.EM1, coarse_theta)
    for f in BAND:
        peak_ratio = 100.0 * 10 ** (power_difference(pattern, f) / 10)
        assert bf_gain_ratio(pattern, f) <= peak_ratio + 0.01


def test_metrics_ignore_element_scale(coarse_theta):
    low = ArrayConfig(element=ElementModel(kind=ElementKind.NARROWBAND_PATCH, g0_dbi=5.0))
    high = ArrayConfig(element=ElementModel(kind=ElementKind.NARROWBAND_PATCH, g0_dbi=12.0))
    a = phased_pattern(low, Mechanism.PHASE, 18.0, EvalModel.EM1, coarse_theta)
    b = phased_pattern(high, Mechanism.PHASE, 18.0, EvalModel.EM1, coarse_theta)
    for f in BAND:
        assert angle_distortion(a, f) == pytest.approx(angle_distortion(b, f), abs=1e-9)
        assert hpbw(a, f) == pytest.approx(hpbw(b, f), abs=1e-9)
        assert bf_gain_ratio(a, f) == pytest.approx(bf_gain_ratio(b, f), rel=1e-9)


def test_hpbw_widens_with_scan(ideal_array, fine_theta):
    broadside = phased_pattern(ideal_array, Mechanism.PHASE, 0.0, EvalModel.EM2, fine_theta)
    scanned = phased_pattern(ideal_array, Mechanism.PHASE, 30.0, EvalModel.EM2, fine_theta)
    assert hpbw(scanned, 28.5) > hpbw(broadside, 28.5)
    assert hpbw(scanned, 28.5) == pytest.approx(3.626 / np.cos(np.radians(30.0)), abs=0.1)


def test_beam_too_broad(coarse_theta):
    single = ArrayConfig(n_elements=1, element=ElementModel(kind=ElementKind.IDEAL))
    pattern = phased_pattern(single, Mechanism.PHASE, 0.0, EvalModel.EM2, coarse_theta)
    with pytest.raises(BeamTooBroadError):
        hpbw(pattern, 28.5)


def test_missing_row(patch_array, coarse_theta):
    pattern = phased_pattern(patch_array, Mechanism.PHASE, 6.0, EvalModel.EM1, coarse_theta)
    with pytest.raises(ContractViolation):
        angle_distortion(pattern, 26.0)


def test_squint_report_layout(patch_array, coarse_theta):
    report = reports(patch_array, Mechanism.PHASE, coarse_theta)[EvalModel.EM1]
    frame = report.to_frame()
    assert list(frame.columns) == REPORT_COLUMNS
    assert len(frame) == len(AODS) * len(BAND)

    pivot = report.pivot("ad_deg")
    assert pivot.shape == (len(AODS), 1 + len(BAND))
    assert list(pivot["aod_deg"]) == list(AODS)
    with pytest.raises(ContractViolation):
        report.pivot("antenna")


def test_squint_report_rejects_mixed_models(patch_array, coarse_theta):
    patterns = [
        phased_pattern(patch_array, Mechanism.PHASE, 6.0, em, coarse_theta)
        for em in (EvalModel.EM1, EvalModel.EM2)
    ]
    with pytest.raises(ContractViolation):
        squint_report(patterns, AntennaKind.PHASED)


def test_causative_factors_for_phased_array(patch_array, coarse_theta):
    out = reports(patch_array, Mechanism.PHASE, coarse_theta)
    factors = causative_factors(out[EvalModel.EM1], out[EvalModel.EM2]).set_index("metric")
    assert factors.loc["AD", "dominant_factor"] == "steering vector"
    assert factors.loc["PD", "dominant_factor"] == EXTERNAL_FACTOR
    assert factors.loc["AD", "em2_worst"] > 1.5


def test_causative_factors_for_ttd(patch_array, coarse_theta):
    out = reports(patch_array, Mechanism.TTD, coarse_theta, kind=AntennaKind.TTD)
    factors = causative_factors(out[EvalModel.EM1], out[EvalModel.EM2]).set_index("metric")
    assert factors.loc["AD", "em2_worst"] < 0.05
    assert factors.loc["PD", "dominant_factor"] == EXTERNAL_FACTOR
    with pytest.raises(ContractViolation):
        causative_factors(out[EvalModel.EM2], out[EvalModel.EM1])


MEASURED_AD_MAGNITUDE = {
    6.0: (0.18, 0.12, 0.06, 0.06, 0.11, 0.16),
    12.0: (0.55, 0.36, 0.18, 0.17, 0.33, 0.48),
    18.0: (0.92, 0.60, 0.30, 0.28, 0.55, 0.82),
    24.0: (1.32, 0.87, 0.43, 0.40, 0.80, 1.18),
    30.0: (1.76, 1.15, 0.57, 0.54, 1.06, 1.56),
}


def test_phased_em1_distortion_tracks_measurements(patch_array, fine_theta):
    for aod, measured in MEASURED_AD_MAGNITUDE.items():
        pattern = phased_pattern(patch_array, Mechanism.PHASE, aod, EvalModel.EM1, fine_theta, reference=True)
        for f, expected in zip(BAND, measured):
            assert abs(angle_distortion(pattern, f)) == pytest.approx(expected, abs=0.3), (aod, f)


@pytest.mark.parametrize("aod", range(6, 31))
def test_distortion_changes_sign_across_fc(ideal_array, coarse_theta, aod):
    pattern = phased_pattern(ideal_array, Mechanism.PHASE, float(aod), EvalModel.EM2, coarse_theta)
    low, high = angle_distortion(pattern, 27.0), angle_distortion(pattern, 30.0)
    assert low > 0
    assert high < 0
    assert np.sign(low) == -np.sign(high)


def test_squint_free_reference_of_phased_array(patch_array, coarse_theta):
    pattern = phased_pattern(patch_array, Mechanism.PHASE, 18.0, EvalModel.EM1, coarse_theta, reference=True)
    reference = squint_free_pattern(patch_array, 18.0, EvalModel.EM1, coarse_theta)
    assert np.array_equal(pattern.reference.directivity, reference.directivity)
    assert reference.steering.mechanism is Mechanism.TTD
    for f in BAND:
        assert angle_distortion(reference, f) == pytest.approx(0.0, abs=0.05)
        assert power_difference(pattern, f) == pytest.approx(
            pattern.peak(f)[1] - reference.peak(f)[1], abs=1e-12
        )

    ttd = phased_pattern(patch_array, Mechanism.TTD, 18.0, EvalModel.EM2, coarse_theta, reference=True)
    assert ttd.reference is not None
    for f in BAND:
        assert angle_distortion(ttd, f) == 0.0
        assert power_difference(ttd, f) == 0.0


def test_with_reference_requires_same_grid(patch_array, coarse_theta):
    pattern = phased_pattern(patch_array, Mechanism.PHASE, 12.0, EvalModel.EM2, coarse_theta)
    other = phased_pattern(patch_array, Mechanism.TTD, 12.0, EvalModel.EM2, theta_grid(0.5))
    with pytest.raises(ContractViolation):
        pattern.with_reference(other)
    narrow = phased_pattern(
        patch_array.model_copy(update={"band_ghz": [27.0, 30.0]}), Mechanism.TTD, 12.0, EvalModel.EM2, coarse_theta
    )
    with pytest.raises(ContractViolation):
        pattern.with_reference(narrow)
