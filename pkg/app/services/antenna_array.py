"""
Service du réseau linéaire uniforme
Géométrie, gain des éléments et pondérations de pointage analogique
(déphaseurs figés à fc, ou lignes à retard vrai)
"""
import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from app.exceptions import ContractViolation
from app.models.schemas import ArrayConfig, ElementKind, ElementModel, EvalModel, Mechanism

GHZ = 1e9

IDEAL_ELEMENT = ElementModel(kind=ElementKind.IDEAL)


def wavelength(f_ghz: float) -> float:
    """Longueur d'onde en mètres"""
    return SPEED_OF_LIGHT / (f_ghz * GHZ)


def element_spacing(cfg: ArrayConfig) -> float:
    """Espacement inter-éléments en mètres"""
    return cfg.spacing_lambda * wavelength(cfg.fc_ghz)


def element_positions(cfg: ArrayConfig) -> np.ndarray:
    return element_spacing(cfg) * np.arange(cfg.n_elements)


def _check_aod(aod: float) -> None:
    if not abs(aod) < 90:
        raise ContractViolation(f"AoD {aod}° hors de ]-90°, 90°[")


def steering_phases(cfg: ArrayConfig, aod: float) -> np.ndarray:
    """
    Phases des déphaseurs (radians) pour pointer vers aod (degrés)

    Les phases sont calculées à fc et ne dépendent pas de la fréquence
    d'utilisation: c'est la cause du beam squint du réseau phasé.
    """
    _check_aod(aod)
    k_c = 2 * np.pi * cfg.fc_ghz * GHZ / SPEED_OF_LIGHT
    return -k_c * element_positions(cfg) * np.sin(np.radians(aod))


def ttd_delays(cfg: ArrayConfig, aod: float) -> np.ndarray:
    """Retards vrais (secondes) pour pointer vers aod, indépendamment de la fréquence"""
    _check_aod(aod)
    return element_positions(cfg) * np.sin(np.radians(aod)) / SPEED_OF_LIGHT


def steering_weights(cfg: ArrayConfig, mechanism: Mechanism, aod: float, f_ghz: float) -> np.ndarray:
    """Pondérations complexes a_m appliquées à la fréquence f"""
    if mechanism is Mechanism.PHASE:
        return np.exp(1j * steering_phases(cfg, aod))
    if mechanism is Mechanism.TTD:
        return np.exp(-2j * np.pi * f_ghz * GHZ * ttd_delays(cfg, aod))
    raise ContractViolation(f"Mécanisme {mechanism.value} non applicable à un réseau phasé")


def element_gain(model: ElementModel, f_ghz: float, theta, fc_ghz: float, band) -> np.ndarray:
    """
    Gain linéaire en puissance d'un élément à (f, theta)

    Patch à bande étroite: G0 * cos(theta)^q * 10^(-rolloff(f)/10), avec une chute
    quadratique en fréquence qui atteint edge_rolloff_db au bord de bande.
    """
    theta = np.asarray(theta, dtype=float)
    if model.kind is ElementKind.IDEAL:
        return np.ones_like(theta)

    f_edge = max(band) if f_ghz >= fc_ghz else min(band)
    if f_edge == fc_ghz:
        rolloff_db = 0.0
    else:
        rolloff_db = model.edge_rolloff_db * ((f_ghz - fc_ghz) / (f_edge - fc_ghz)) ** 2

    shape = np.clip(np.cos(np.radians(theta)), 0.0, None) ** model.q
    return 10 ** (model.g0_dbi / 10) * shape * 10 ** (-rolloff_db / 10)


def frozen_element(model: ElementModel) -> ElementModel:
    """Même élément, gain figé à sa valeur à fc sur toute la bande"""
    if model.kind is ElementKind.IDEAL or model.edge_rolloff_db == 0:
        return model
    return model.model_copy(update={"edge_rolloff_db": 0.0})


def element_for(cfg: ArrayConfig, eval_model: EvalModel) -> ElementModel:
    """EM1 garde l'élément configuré, EM2 le remplace par un élément idéal"""
    return cfg.element if eval_model is EvalModel.EM1 else IDEAL_ELEMENT
