"""
Service des matériaux diélectriques
Permittivité complexe dépendant de la fréquence et indice de réfraction des
matériaux candidats pour la lentille
"""
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from app.config import settings
from app.exceptions import (
    BandViolationError,
    ConfigError,
    MaterialNotFoundError,
    NonPhysicalMaterialError,
)
from app.models.schemas import DispersiveMaterial, MaterialKind

logger = logging.getLogger(__name__)

BUILTIN_MATERIALS = (
    "teflon_a",
    "polyethylene",
    "polycarbonate",
    "boron_nitride",
    "mgo",
    "ideal_constant",
)

_BAND_TOLERANCE_GHZ = 1e-9


def _check_band(material: DispersiveMaterial, f: float) -> None:
    lo, hi = material.band_ghz
    if not lo - _BAND_TOLERANCE_GHZ <= f <= hi + _BAND_TOLERANCE_GHZ:
        raise BandViolationError(material.name, f, material.band_ghz)


def _clamped(material: DispersiveMaterial, f: float) -> float:
    lo, hi = material.band_ghz
    return min(hi, max(lo, f))


def permittivity(material: DispersiveMaterial, f: float) -> complex:
    """
    Permittivité relative complexe à la fréquence f (GHz)

    Convention e^{+jwt}: une partie imaginaire négative représente les pertes.
    """
    _check_band(material, f)
    f = _clamped(material, f)

    if material.kind is MaterialKind.CONSTANT:
        return complex(material.eps_r, -material.eps_r * material.tan_delta)

    if material.kind is MaterialKind.TABULATED:
        table = np.asarray(material.samples, dtype=float)
        eps_r = float(np.interp(f, table[:, 0], table[:, 1]))
        tan_delta = float(np.interp(f, table[:, 0], table[:, 2]))
        return complex(eps_r, -eps_r * tan_delta)

    eps = complex(material.eps_inf, 0.0)
    for res in material.resonances:
        eps += res.delta_eps * res.f0_ghz ** 2 / (res.f0_ghz ** 2 - f ** 2 + 1j * res.gamma_ghz * f)
    return eps


def loss_tangent(material: DispersiveMaterial, f: float) -> float:
    eps = permittivity(material, f)
    return max(0.0, -eps.imag / eps.real)


def refractive_index(material: DispersiveMaterial, f: float) -> float:
    """Indice réel n = sqrt(Re eps) (approximation faibles pertes)"""
    eps = permittivity(material, f)
    if eps.real < 1.0:
        raise NonPhysicalMaterialError(material.name, f, eps.real)
    return math.sqrt(eps.real)


def dispersion_spread(material: DispersiveMaterial, band: Optional[tuple] = None, samples: int = 61) -> float:
    """Écart relatif (max - min) / moyenne de eps_r sur la bande"""
    lo, hi = band or material.band_ghz
    eps = [permittivity(material, f).real for f in np.linspace(lo, hi, samples)]
    return (max(eps) - min(eps)) / float(np.mean(eps))


def scale_dispersion(material: DispersiveMaterial, factor: float) -> DispersiveMaterial:
    """
    Matériau fictif dont l'écart de eps_r à sa moyenne de bande est multiplié par factor

    Seul le type tabulé porte une dispersion éditable; les autres types sont
    renvoyés inchangés.
    """
    if material.kind is not MaterialKind.TABULATED:
        return material
    mean = float(np.mean([s[1] for s in material.samples]))
    samples = [(f, mean + factor * (eps - mean), tan) for f, eps, tan in material.samples]
    return material.model_copy(update={
        "name": f"{material.name}_x{factor:g}",
        "samples": samples,
    })


def frozen_material(material: DispersiveMaterial, f: float) -> DispersiveMaterial:
    """
    Matériau non dispersif qui garde sur toute la bande la permittivité et les
    pertes du matériau à f

    Un matériau déjà constant est renvoyé tel quel.
    """
    if material.kind is MaterialKind.CONSTANT:
        return material
    eps = permittivity(material, f)
    if eps.real < 1.0:
        raise NonPhysicalMaterialError(material.name, f, eps.real)
    return DispersiveMaterial(
        name=f"{material.name}@{f:g}GHz",
        kind=MaterialKind.CONSTANT,
        band_ghz=material.band_ghz,
        description=f"{material.name} figé à {f:g} GHz",
        eps_r=eps.real,
        tan_delta=loss_tangent(material, f),
    )


def load_material(path: Union[str, Path]) -> DispersiveMaterial:
    """Charge un fichier matériau JSON (schéma version 1)"""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Impossible de lire le matériau {path}: {e}") from e
    return DispersiveMaterial.model_validate(raw)


class MaterialLibrary:
    """Bibliothèque des matériaux embarqués (un fichier JSON par matériau)"""

    def __init__(self, directory: Optional[Path] = None):
        self.directory = Path(directory or settings.materials_directory)
        self._cache: Dict[str, DispersiveMaterial] = {}

    def names(self) -> List[str]:
        return sorted(p.stem for p in self.directory.glob("*.json"))

    def get(self, name: str) -> DispersiveMaterial:
        if name not in self._cache:
            path = self.directory / f"{name}.json"
            if not path.is_file():
                raise MaterialNotFoundError(name, self.names())
            self._cache[name] = load_material(path)
            logger.debug("Matériau %s chargé depuis %s", name, path)
        return self._cache[name]

    def resolve(self, reference: str, base_directory: Optional[Path] = None) -> DispersiveMaterial:
        """Identifiant embarqué, ou chemin vers un fichier JSON"""
        if reference.endswith(".json"):
            path = Path(reference)
            if not path.is_absolute() and base_directory is not None:
                path = base_directory / path
            return load_material(path)
        return self.get(reference)

    def describe(self, band: tuple = (27.0, 30.0)) -> List[dict]:
        """Liste des matériaux avec bande et dispersion sur la bande demandée"""
        listing = []
        for name in self.names():
            material = self.get(name)
            lo = max(band[0], material.band_ghz[0])
            hi = min(band[1], material.band_ghz[1])
            fc = 0.5 * (lo + hi)
            listing.append({
                "material": material.model_dump(mode="json"),
                "spread_pct": round(100.0 * dispersion_spread(material, (lo, hi)), 6),
                "eps_r_center": round(permittivity(material, fc).real, 6),
                "tan_delta_max": round(max(loss_tangent(material, f) for f in np.linspace(lo, hi, 31)), 8),
            })
        return listing


def builtin_material(name: str) -> DispersiveMaterial:
    """Matériau embarqué par identifiant"""
    if name not in BUILTIN_MATERIALS and name not in material_library.names():
        raise MaterialNotFoundError(name, material_library.names())
    return material_library.get(name)


# Instance globale du service
material_library = MaterialLibrary()
