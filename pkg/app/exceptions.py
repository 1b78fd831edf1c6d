"""
Exceptions du simulateur
Chaque erreur porte le code de sortie que la CLI renvoie
"""
from typing import List, Optional

EXIT_CONFIG_ERROR = 2
EXIT_MODEL_ERROR = 3


class SimulatorError(Exception):
    """Erreur de base du simulateur"""

    exit_code = EXIT_MODEL_ERROR


class ConfigError(SimulatorError):
    """Configuration invalide; chaque diagnostic nomme le champ fautif"""

    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None):
        self.diagnostics = list(diagnostics or [])
        if self.diagnostics:
            message = message + "\n" + "\n".join(f"  {d}" for d in self.diagnostics)
        super().__init__(message)


class ContractViolation(SimulatorError):
    """Précondition d'une opération non respectée"""


class BandViolationError(SimulatorError):
    """Fréquence hors de la bande de validité d'un matériau"""

    def __init__(self, material: str, f_ghz: float, band: tuple):
        self.material = material
        self.f_ghz = f_ghz
        self.band = band
        super().__init__(
            f"Fréquence {f_ghz:g} GHz hors de la bande du matériau '{material}' "
            f"[{band[0]:g}, {band[1]:g}] GHz"
        )


class NonPhysicalMaterialError(ConfigError):
    """Paramètres de matériau donnant Re(eps) < 1 dans sa bande de validité"""

    def __init__(self, material: str, f_ghz: float, eps_real: float):
        self.material = material
        self.f_ghz = f_ghz
        self.eps_real = eps_real
        super().__init__(
            f"Matériau '{material}' non physique pour une lentille",
            [f"Re(eps) = {eps_real:.6g} < 1 à {f_ghz:g} GHz"],
        )


class MaterialNotFoundError(SimulatorError):
    """Identifiant de matériau inconnu"""

    def __init__(self, name: str, available: List[str]):
        self.name = name
        self.available = available
        super().__init__(
            f"Matériau inconnu '{name}'. Matériaux disponibles: {', '.join(available)}"
        )


class DegeneratePatternError(SimulatorError):
    """Diagramme de puissance nul partout"""


class BeamTooBroadError(SimulatorError):
    """Aucun croisement à -3 dB d'un côté du lobe principal"""


class GeometryError(SimulatorError):
    """Géométrie de lentille irréalisable"""


class NoRefractionError(GeometryError):
    """Indice de conception <= 1: la lentille ne réfracte pas"""


class LensGeometryError(GeometryError):
    """Trop de rayons perdus (réflexion totale ou sortie par la tranche)"""

    def __init__(self, discarded: int, total: int):
        self.discarded = discarded
        self.total = total
        super().__init__(
            f"{discarded} rayons sur {total} écartés: géométrie de lentille incompatible"
        )


class TotalInternalReflectionError(SimulatorError):
    """Réflexion totale interne lors d'une réfraction"""

    def __init__(self, critical_angle_deg: float):
        self.critical_angle_deg = critical_angle_deg
        super().__init__(
            f"Réflexion totale interne (angle critique {critical_angle_deg:.3f}°)"
        )


class ScanRangeError(SimulatorError):
    """Direction cible hors de la plage de balayage de la lentille"""

    def __init__(self, target_deg: float, achievable_deg: float):
        self.target_deg = target_deg
        self.achievable_deg = achievable_deg
        super().__init__(
            f"AoD cible {target_deg:g}° inatteignable; maximum atteignable {achievable_deg:.2f}°"
        )
