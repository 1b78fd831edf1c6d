"""
Fixtures partagées: réseaux de référence, grilles angulaires et lentilles réduites
"""
import pytest

from app.models.schemas import (
    AntennaKind,
    AntennaSection,
    ArrayConfig,
    ElementKind,
    ElementModel,
    FeedsSection,
    LensSection,
)
from app.services.beampattern import theta_grid
from app.services.lens import build_assembly

LENS_RAYS = 401


@pytest.fixture(scope="session")
def patch_array() -> ArrayConfig:
    """28 éléments à lambda/2, fc = 28.5 GHz, patch à bande étroite par défaut"""
    return ArrayConfig()


@pytest.fixture(scope="session")
def calibrated_array() -> ArrayConfig:
    return ArrayConfig(element=ElementModel(kind=ElementKind.NARROWBAND_PATCH, edge_rolloff_db=0.1))


@pytest.fixture(scope="session")
def ideal_array() -> ArrayConfig:
    return ArrayConfig(element=ElementModel(kind=ElementKind.IDEAL))


@pytest.fixture(scope="session")
def fine_theta():
    return theta_grid(0.01)


@pytest.fixture(scope="session")
def coarse_theta():
    return theta_grid(0.05)


@pytest.fixture(scope="session")
def lens_section():
    def build(material: str = "ideal_constant", diameter_lambda: float = 10.0,
              element: ElementModel = None, feeds: int = 28) -> AntennaSection:
        array = ArrayConfig(element=element) if element is not None else ArrayConfig()
        return AntennaSection(
            kind=AntennaKind.LENS,
            label=material,
            array=array,
            lens=LensSection(
                diameter_lambda=diameter_lambda,
                material=material,
                feeds=FeedsSection(count=feeds),
            ),
        )
    return build


@pytest.fixture(scope="session")
def constant_lens(lens_section):
    """Lentille 10 lambda en matériau sans dispersion"""
    return build_assembly(lens_section("ideal_constant"))


@pytest.fixture(scope="session")
def teflon_lens(lens_section):
    return build_assembly(lens_section("teflon_a"))
