import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from app.exceptions import BandViolationError, ConfigError, MaterialNotFoundError, NonPhysicalMaterialError
from app.models.schemas import DispersiveMaterial, MaterialKind
from app.services.materials import (
    BUILTIN_MATERIALS,
    builtin_material,
    dispersion_spread,
    frozen_material,
    load_material,
    loss_tangent,
    permittivity,
    refractive_index,
    scale_dispersion,
)


def constant(eps_r=2.25, tan_delta=0.0):
    return DispersiveMaterial(name="c", kind=MaterialKind.CONSTANT, eps_r=eps_r, tan_delta=tan_delta)


def tabulated():
    return DispersiveMaterial(
        name="t", kind=MaterialKind.TABULATED, band_ghz=(27.0, 30.0),
        samples=[(27.0, 2.08, 0.0003), (28.0, 2.074, 0.0003), (30.0, 2.06, 0.0004)],
    )


def test_constant_material():
    eps = permittivity(constant(2.1, 0.001), 28.5)
    assert eps.real == pytest.approx(2.1)
    assert eps.imag == pytest.approx(-0.0021)
    assert refractive_index(constant(2.25), 28.5) == pytest.approx(1.5)
    assert refractive_index(constant(1.0), 28.5) == 1.0
    assert refractive_index(constant(), 27.0) == refractive_index(constant(), 30.0)


def test_drude_lorentz_limits():
    material = DispersiveMaterial(
        name="dl", kind=MaterialKind.DRUDE_LORENTZ, eps_inf=2.0,
        resonances=[{"delta_eps": 0.5, "f0_ghz": 1000.0, "gamma_ghz": 1.0}],
    )
    static = permittivity(material, 1e-6)
    assert static.real == pytest.approx(2.5, rel=1e-9)

    at_resonance = permittivity(material, 1000.0)
    assert at_resonance.real == pytest.approx(2.0)
    assert at_resonance.imag == pytest.approx(-500.0)
    assert loss_tangent(material, 1000.0) > 0


def test_tabulated_interpolation():
    material = tabulated()
    assert permittivity(material, 28.0).real == pytest.approx(2.074)
    assert refractive_index(material, 29.0) == pytest.approx(math.sqrt(2.067))
    assert loss_tangent(material, 29.0) == pytest.approx(0.00035)


def test_tabulated_continuity_at_knots():
    material = tabulated()
    left = permittivity(material, 28.0 - 1e-9)
    right = permittivity(material, 28.0 + 1e-9)
    assert abs(left - right) < 1e-8


@hsettings(max_examples=50, deadline=None)
@given(st.floats(min_value=27.0, max_value=30.0))
def test_tabulated_stays_within_samples(f):
    eps = permittivity(tabulated(), f).real
    assert 2.06 - 1e-12 <= eps <= 2.08 + 1e-12


def test_band_violation():
    with pytest.raises(BandViolationError) as excinfo:
        permittivity(tabulated(), 31.0)
    assert excinfo.value.material == "t"
    assert excinfo.value.f_ghz == 31.0


def test_builtin_library_covers_band():
    for name in BUILTIN_MATERIALS:
        material = builtin_material(name)
        for f in np.linspace(27.0, 30.0, 13):
            n = refractive_index(material, f)
            assert 1.0 <= n <= 4.0
            assert loss_tangent(material, f) >= 0.0


def test_teflon_is_nearly_flat():
    teflon = builtin_material("teflon_a")
    spread = dispersion_spread(teflon, (27.0, 30.0))
    assert spread < 0.02
    assert spread < dispersion_spread(builtin_material("polycarbonate"), (27.0, 30.0))
    assert dispersion_spread(builtin_material("ideal_constant"), (27.0, 30.0)) == 0.0


def test_unknown_material_lists_available():
    with pytest.raises(MaterialNotFoundError) as excinfo:
        builtin_material("unobtainium")
    assert "teflon_a" in excinfo.value.available
    assert "teflon_a" in str(excinfo.value)


def test_scale_dispersion():
    teflon = builtin_material("teflon_a")
    flat = scale_dispersion(teflon, 0.0)
    doubled = scale_dispersion(teflon, 2.0)
    assert dispersion_spread(flat, (27.0, 30.0)) == pytest.approx(0.0, abs=1e-12)
    assert_allclose(
        dispersion_spread(doubled, (27.0, 30.0)),
        2 * dispersion_spread(teflon, (27.0, 30.0)),
        rtol=1e-3,
    )
    assert scale_dispersion(constant(), 3.0) == constant()


def test_load_material_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_material(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_material(broken)


def test_material_validation():
    with pytest.raises(ValueError):
        DispersiveMaterial(name="x", kind=MaterialKind.CONSTANT, eps_r=0.5, tan_delta=0.0)
    with pytest.raises(ValueError):
        DispersiveMaterial(
            name="x", kind=MaterialKind.TABULATED, band_ghz=(27.0, 30.0),
            samples=[(28.0, 2.0, 0.0), (27.0, 2.1, 0.0)],
        )


def test_non_physical_material_is_a_config_error():
    material = DispersiveMaterial(
        name="metallic", kind=MaterialKind.DRUDE_LORENTZ, band_ghz=(27.0, 30.0), eps_inf=2.0,
        resonances=[{"delta_eps": 1.5, "f0_ghz": 20.0, "gamma_ghz": 0.1}],
    )
    with pytest.raises(NonPhysicalMaterialError) as excinfo:
        refractive_index(material, 28.5)
    assert isinstance(excinfo.value, ConfigError)
    assert excinfo.value.exit_code == 2
    assert excinfo.value.eps_real < 1.0
    assert "metallic" in str(excinfo.value)
    with pytest.raises(NonPhysicalMaterialError):
        frozen_material(material, 28.5)


def test_frozen_material():
    material = constant(2.1, 0.001)
    assert frozen_material(material, 28.5) is material

    frozen = frozen_material(tabulated(), 28.0)
    assert frozen.kind is MaterialKind.CONSTANT
    assert frozen.band_ghz == tabulated().band_ghz
    for f in (27.0, 29.0, 30.0):
        assert permittivity(frozen, f) == pytest.approx(permittivity(tabulated(), 28.0))
    assert dispersion_spread(frozen) == 0.0
