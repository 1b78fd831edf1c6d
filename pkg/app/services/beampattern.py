"""
Service de synthèse des diagrammes de rayonnement
Facteur de réseau, normalisation en directivité (coupe azimutale) et objet
BeamPattern consommé par les métriques, la lentille et le tracé de rayons
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.integrate import trapezoid

from app.config import settings
from app.exceptions import ContractViolation, DegeneratePatternError
from app.models.schemas import ArrayConfig, EvalModel, Mechanism
from app.services.antenna_array import (
    GHZ,
    element_for,
    element_gain,
    element_positions,
    frozen_element,
    steering_weights,
)

logger = logging.getLogger(__name__)

FLOOR_DBI = -300.0
_FREQ_TOLERANCE_GHZ = 1e-9


@dataclass(frozen=True)
class Steering:
    """État de pointage d'un diagramme"""

    mechanism: Mechanism
    aod_deg: float
    feed_offset_m: Optional[float] = None


def theta_grid(step_deg: Optional[float] = None) -> np.ndarray:
    """Grille angulaire symétrique de pas constant sur [-90°, 90°]"""
    step = step_deg or settings.theta_step_deg
    if not 0 < step <= 90:
        raise ContractViolation(f"Pas angulaire invalide: {step}")
    m = int(np.ceil(90.0 / step - 1e-9))
    return np.clip(step * np.arange(-m, m + 1), -90.0, 90.0)


def pattern_freqs(band: Iterable[float], fc_ghz: float) -> Tuple[float, ...]:
    """Fréquences d'un diagramme: la bande, plus fc si elle n'en fait pas partie"""
    freqs = sorted(set(float(f) for f in band))
    if not any(abs(f - fc_ghz) < _FREQ_TOLERANCE_GHZ for f in freqs):
        freqs.append(float(fc_ghz))
    return tuple(sorted(freqs))


def array_factor(cfg: ArrayConfig, weights: np.ndarray, f_ghz: float, theta) -> np.ndarray:
    """AF(f, theta) = somme_m a_m * exp(j k d m sin theta)"""
    weights = np.asarray(weights, dtype=complex)
    if weights.shape != (cfg.n_elements,):
        raise ContractViolation(
            f"{weights.size} pondérations pour {cfg.n_elements} éléments"
        )
    k = 2 * np.pi * f_ghz * GHZ / SPEED_OF_LIGHT
    sin_theta = np.sin(np.radians(np.atleast_1d(np.asarray(theta, dtype=float))))
    phase = k * np.outer(sin_theta, element_positions(cfg))
    af = np.exp(1j * phase) @ weights
    return af if np.ndim(theta) else af[0]


def _cos_weighted_mean(power: np.ndarray, theta: np.ndarray) -> float:
    theta_rad = np.radians(theta)
    return float(trapezoid(power * np.cos(theta_rad), theta_rad)) / 2.0


def normalize_directivity(power, theta, reference=None) -> np.ndarray:
    """
    Convertit une puissance brute en directivité (dBi) sur la coupe azimutale

    D(theta) = P(theta) / (intégrale de P_ref(theta') cos(theta') dtheta' / 2).
    Sans référence, la ligne est normalisée par sa propre intégrale.
    """
    power = np.asarray(power, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(power < 0):
        raise ContractViolation("Puissance négative dans le diagramme")
    ref = power if reference is None else np.asarray(reference, dtype=float)
    norm = _cos_weighted_mean(ref, theta)
    if not norm > 0:
        raise DegeneratePatternError("Diagramme de puissance nul sur toute la grille")
    with np.errstate(divide="ignore"):
        d = 10 * np.log10(power / norm)
    return np.maximum(d, FLOOR_DBI)


def parabola_vertex(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    x0, x1, x2 = x
    y0, y1, y2 = y
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    if a >= 0:
        return float(x1), float(y1)
    b = (x2 ** 2 * (y0 - y1) + x1 ** 2 * (y2 - y0) + x0 ** 2 * (y1 - y2)) / denom
    xv = min(max(-b / (2 * a), x0), x2)
    yv = y1 + a * (xv - x1) ** 2 + (b + 2 * a * x1) * (xv - x1)
    return float(xv), float(yv)


@dataclass(frozen=True, eq=False)
class BeamPattern:
    """
    Directivité (dBi) sur une grille (fréquence x angle) pour un état de pointage

    Les lignes sont indexées comme freqs; la ligne fc est toujours présente.
    reference est le diagramme sans squint de même pointage (mêmes fréquences et
    même grille) auquel AD, PD et la simulation système se comparent.
    """

    theta: np.ndarray
    freqs: Tuple[float, ...]
    directivity: np.ndarray
    steering: Steering
    eval_model: EvalModel
    fc_ghz: float
    label: str = ""
    metadata: dict = field(default_factory=dict, compare=False)
    reference: Optional["BeamPattern"] = field(default=None, compare=False, repr=False)

    @classmethod
    def from_power(
        cls,
        theta: np.ndarray,
        freqs: Sequence[float],
        power: np.ndarray,
        steering: Steering,
        eval_model: EvalModel,
        fc_ghz: float,
        label: str = "",
        metadata: Optional[dict] = None,
    ) -> "BeamPattern":
        """Normalise chaque ligne par l'intégrale de la ligne fc"""
        freqs = tuple(float(f) for f in freqs)
        power = np.asarray(power, dtype=float)
        ref_index = _index_of(freqs, fc_ghz)
        directivity = np.vstack([
            normalize_directivity(row, theta, reference=power[ref_index]) for row in power
        ])
        directivity.setflags(write=False)
        theta = np.array(theta, dtype=float)
        theta.setflags(write=False)
        return cls(theta, freqs, directivity, steering, eval_model, fc_ghz, label, metadata or {})

    @property
    def step_deg(self) -> float:
        return float(self.theta[1] - self.theta[0])

    @property
    def filename(self) -> str:
        return f"{self.steering.mechanism.value}_{self.steering.aod_deg:g}deg_{self.eval_model.value}.csv"

    def with_reference(self, reference: "BeamPattern") -> "BeamPattern":
        """Copie du diagramme rattachée à son diagramme sans squint"""
        if reference.freqs != self.freqs or not np.array_equal(reference.theta, self.theta):
            raise ContractViolation("Le diagramme de référence doit partager fréquences et grille")
        return replace(self, reference=reference)

    def reference_peak(self, f_ghz: float) -> Tuple[float, float]:
        """Pic sans squint à f: celui de la référence, ou à défaut le pic à fc"""
        if self.reference is None:
            return self.peak(self.fc_ghz)
        return self.reference.peak(f_ghz)

    def has_row(self, f_ghz: float) -> bool:
        return any(abs(f - f_ghz) < _FREQ_TOLERANCE_GHZ for f in self.freqs)

    def index(self, f_ghz: float) -> int:
        return _index_of(self.freqs, f_ghz)

    def row(self, f_ghz: float) -> np.ndarray:
        return self.directivity[self.index(f_ghz)]

    def linear(self, f_ghz: float) -> np.ndarray:
        return 10 ** (self.row(f_ghz) / 10)

    def peak_index(self, f_ghz: float) -> int:
        """Indice du maximum; à égalité, le point le plus proche de l'AoD visé"""
        row = self.row(f_ghz)
        candidates = np.flatnonzero(row == row.max())
        best = np.argmin(np.abs(self.theta[candidates] - self.steering.aod_deg))
        return int(candidates[best])

    def peak(self, f_ghz: float) -> Tuple[float, float]:
        """(angle, directivité) du pic, affinés par interpolation quadratique"""
        i = self.peak_index(f_ghz)
        row = self.row(f_ghz)
        if i == 0 or i == len(row) - 1:
            return float(self.theta[i]), float(row[i])
        window = slice(i - 1, i + 2)
        return parabola_vertex(self.theta[window], row[window])

    def sample(self, theta_deg, f_ghz: Optional[float] = None) -> np.ndarray:
        """
        Directivité (dBi) interpolée (Lagrange à 3 points autour du point de grille
        le plus proche) pour un ou plusieurs angles de [-90°, 90°]

        Sans fréquence, renvoie une ligne par fréquence du diagramme.
        """
        t = np.atleast_1d(np.asarray(theta_deg, dtype=float))
        if np.any(np.abs(t) > 90.0):
            raise ContractViolation("Angle hors de [-90°, 90°]")
        rows = self.directivity if f_ghz is None else self.row(f_ghz)[None, :]
        grid = self.theta
        n = grid.size
        i = np.clip(np.searchsorted(grid, t), 1, n - 1)
        i = np.where(np.abs(grid[i - 1] - t) < np.abs(grid[i] - t), i - 1, i)
        i = np.clip(i, 1, n - 2)
        x0, x1, x2 = grid[i - 1], grid[i], grid[i + 1]
        l0 = (t - x1) * (t - x2) / ((x0 - x1) * (x0 - x2))
        l1 = (t - x0) * (t - x2) / ((x1 - x0) * (x1 - x2))
        l2 = (t - x0) * (t - x1) / ((x2 - x0) * (x2 - x1))
        values = rows[:, i - 1] * l0 + rows[:, i] * l1 + rows[:, i + 1] * l2
        return np.maximum(values, FLOOR_DBI)

    def value_at(self, f_ghz: float, theta_deg: float) -> float:
        """Directivité (dBi) interpolée à un angle quelconque de [-90°, 90°]"""
        return float(self.sample(theta_deg, f_ghz)[0, 0])

    def to_frame(self) -> pd.DataFrame:
        """Une colonne theta_deg puis une colonne dBi par fréquence"""
        data = {"theta_deg": self.theta}
        for f, row in zip(self.freqs, self.directivity):
            data[f"{f:g}GHz_dBi"] = row
        return pd.DataFrame(data)


def _index_of(freqs: Sequence[float], f_ghz: float) -> int:
    for i, f in enumerate(freqs):
        if abs(f - f_ghz) < _FREQ_TOLERANCE_GHZ:
            return i
    raise ContractViolation(f"Aucune ligne à {f_ghz:g} GHz dans le diagramme")


def phased_pattern(
    cfg: ArrayConfig,
    mechanism: Mechanism,
    aod: float,
    eval_model: EvalModel,
    theta: Optional[np.ndarray] = None,
    label: str = "",
    reference: bool = False,
) -> BeamPattern:
    """
    Diagramme d'un réseau phasé (déphaseurs) ou à retards vrais

    EM1: |AF|^2 pondéré par le gain de l'élément configuré;
    EM2: élément idéal large bande.

    Args:
        cfg: Géométrie du réseau, bande et élément
        mechanism: Déphaseurs figés à fc ou retards vrais
        aod: Angle de départ visé à fc, en degrés
        eval_model: EM1 ou EM2
        theta: Grille angulaire (par défaut celle de la configuration)
        label: Nom de l'antenne
        reference: Rattache le diagramme sans squint de même pointage

    Returns:
        BeamPattern normalisé par l'intégrale de sa ligne fc
    """
    if not -90 <= aod <= 90:
        raise ContractViolation(f"AoD {aod}° hors de [-90°, 90°]")
    theta = theta_grid() if theta is None else np.asarray(theta, dtype=float)
    freqs = pattern_freqs(cfg.band_ghz, cfg.fc_ghz)
    element = element_for(cfg, eval_model)

    power = np.empty((len(freqs), theta.size))
    for i, f in enumerate(freqs):
        weights = steering_weights(cfg, mechanism, aod, f)
        af = array_factor(cfg, weights, f, theta)
        power[i] = np.abs(af) ** 2 * element_gain(element, f, theta, cfg.fc_ghz, cfg.band_ghz)

    logger.debug(
        "Diagramme %s %s aod=%g° sur %d fréquences x %d angles",
        mechanism.value, eval_model.value, aod, len(freqs), theta.size,
    )
    pattern = BeamPattern.from_power(
        theta, freqs, power, Steering(mechanism, aod), eval_model, cfg.fc_ghz, label
    )
    if not reference:
        return pattern
    if mechanism is Mechanism.TTD and element == frozen_element(element):
        return pattern.with_reference(pattern)
    return pattern.with_reference(squint_free_pattern(cfg, aod, eval_model, theta, label))


def squint_free_pattern(
    cfg: ArrayConfig,
    aod: float,
    eval_model: EvalModel,
    theta: Optional[np.ndarray] = None,
    label: str = "",
) -> BeamPattern:
    """Même réseau pointé par retards vrais, gain d'élément figé à sa valeur à fc"""
    frozen = cfg.model_copy(update={"element": frozen_element(cfg.element)})
    return phased_pattern(frozen, Mechanism.TTD, aod, eval_model, theta, label)
