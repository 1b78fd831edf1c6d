"""
Service des métriques de beam squint
AD, PD, HPBW et ratio de gain de formation de faisceau extraits d'un BeamPattern
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from app.exceptions import BeamTooBroadError, ContractViolation
from app.models.schemas import AntennaKind, EvalModel
from app.services.beampattern import BeamPattern

logger = logging.getLogger(__name__)

HALF_POWER_DB = 10 * np.log10(0.5)

REPORT_COLUMNS = [
    "antenna", "eval_model", "aod_deg", "freq_ghz",
    "ad_deg", "pd_db", "hpbw_deg", "bf_gain_ratio_pct",
]

INHERENT_FACTOR = {
    AntennaKind.PHASED: "steering vector",
    AntennaKind.TTD: "steering vector",
    AntennaKind.LENS: "frequency-dependent permittivity",
}
EXTERNAL_FACTOR = "narrowband element"


def _require_rows(pattern: BeamPattern, f_ghz: float) -> None:
    for f in (f_ghz, pattern.fc_ghz):
        if not pattern.has_row(f):
            raise ContractViolation(f"Le diagramme n'a pas de ligne à {f:g} GHz")


def angle_distortion(pattern: BeamPattern, f_ghz: float) -> float:
    """
    AD = theta_pic(f) - theta_pic_ref(f), en degrés

    La référence est le diagramme sans squint rattaché au diagramme; sans
    référence, le pic à fc.
    """
    _require_rows(pattern, f_ghz)
    return pattern.peak(f_ghz)[0] - pattern.reference_peak(f_ghz)[0]


def power_difference(pattern: BeamPattern, f_ghz: float) -> float:
    """PD = D_pic(f) - D_pic_ref(f), en dB (négatif si le gain chute en bord de bande)"""
    _require_rows(pattern, f_ghz)
    return pattern.peak(f_ghz)[1] - pattern.reference_peak(f_ghz)[1]


def _crossing(theta: np.ndarray, row: np.ndarray, start: int, step: int, level: float) -> float:
    i = start
    while 0 <= i + step < len(row) and row[i + step] > level:
        i += step
    j = i + step
    if not 0 <= j < len(row):
        raise BeamTooBroadError("Pas de croisement à -3 dB d'un côté du lobe principal")
    t = (row[i] - level) / (row[i] - row[j])
    return float(theta[i] + t * (theta[j] - theta[i]))


def hpbw(pattern: BeamPattern, f_ghz: float) -> float:
    """Largeur à mi-puissance du lobe principal (interpolation linéaire en dB)"""
    _require_rows(pattern, f_ghz)
    row = pattern.row(f_ghz)
    level = pattern.peak(f_ghz)[1] + HALF_POWER_DB
    i = pattern.peak_index(f_ghz)
    left = _crossing(pattern.theta, row, i, -1, level)
    right = _crossing(pattern.theta, row, i, 1, level)
    return right - left


def bf_gain_ratio(pattern: BeamPattern, f_ghz: float) -> float:
    """Gain à f dans la direction choisie à fc, en % du gain à fc dans cette direction"""
    _require_rows(pattern, f_ghz)
    theta_fc = pattern.peak(pattern.fc_ghz)[0]
    delta_db = pattern.value_at(f_ghz, theta_fc) - pattern.value_at(pattern.fc_ghz, theta_fc)
    return 100.0 * 10 ** (delta_db / 10)


@dataclass
class SquintReport:
    """Métriques par (AoD, fréquence) pour une antenne et un modèle d'évaluation"""

    antenna: str
    kind: AntennaKind
    eval_model: EvalModel
    fc_ghz: float
    band_ghz: List[float]
    rows: List[dict] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=REPORT_COLUMNS)

    def pivot(self, metric: str) -> pd.DataFrame:
        """Tableau AoD x fréquence d'une métrique (disposition lignes AoD, colonnes fréquence)"""
        if metric not in REPORT_COLUMNS[4:]:
            raise ContractViolation(f"Métrique inconnue: {metric}")
        table = self.to_frame().pivot(index="aod_deg", columns="freq_ghz", values=metric)
        table.columns = [f"{f:g}" for f in table.columns]
        return table.reset_index()

    def worst(self, metric: str) -> float:
        values = [abs(r[metric]) for r in self.rows]
        return max(values) if values else 0.0


def squint_report(
    patterns: Sequence[BeamPattern],
    kind: AntennaKind,
    band_ghz: Optional[Sequence[float]] = None,
    antenna: str = "",
) -> SquintReport:
    """
    Assemble les quatre métriques pour chaque diagramme (un par AoD) et chaque fréquence

    Args:
        patterns: Diagrammes d'une antenne, tous du même modèle d'évaluation
        kind: Type d'antenne
        band_ghz: Fréquences du rapport (par défaut celles des diagrammes)
        antenna: Nom de l'antenne

    Returns:
        SquintReport au format long (AD, PD, HPBW, ratio de gain)
    """
    if not patterns:
        raise ContractViolation("Aucun diagramme à évaluer")
    eval_models = {p.eval_model for p in patterns}
    if len(eval_models) != 1:
        raise ContractViolation("Un rapport ne couvre qu'un modèle d'évaluation")
    first = patterns[0]
    band = list(band_ghz if band_ghz is not None else first.freqs)
    report = SquintReport(
        antenna=antenna or first.label or kind.value,
        kind=kind,
        eval_model=first.eval_model,
        fc_ghz=first.fc_ghz,
        band_ghz=band,
    )
    for pattern in patterns:
        for f in band:
            report.rows.append({
                "antenna": report.antenna,
                "eval_model": report.eval_model.value,
                "aod_deg": pattern.steering.aod_deg,
                "freq_ghz": f,
                "ad_deg": angle_distortion(pattern, f),
                "pd_db": power_difference(pattern, f),
                "hpbw_deg": hpbw(pattern, f),
                "bf_gain_ratio_pct": bf_gain_ratio(pattern, f),
            })
    logger.info(
        "Rapport %s %s: max |AD| = %.3f°, max |PD| = %.3f dB",
        report.antenna, report.eval_model.value, report.worst("ad_deg"), report.worst("pd_db"),
    )
    return report


def causative_factors(report_em1: SquintReport, report_em2: SquintReport) -> pd.DataFrame:
    """
    Attribution des causes du squint pour une antenne

    La part EM2 est inhérente à l'antenne (vecteur de pointage ou permittivité);
    l'écart EM1 - EM2 revient à l'élément à bande étroite.
    """
    if report_em1.antenna != report_em2.antenna:
        raise ContractViolation("Les deux rapports doivent concerner la même antenne")
    if (report_em1.eval_model, report_em2.eval_model) != (EvalModel.EM1, EvalModel.EM2):
        raise ContractViolation("Rapports EM1 puis EM2 attendus")

    rows = []
    for metric, column in (("AD", "ad_deg"), ("PD", "pd_db")):
        em1 = report_em1.worst(column)
        em2 = report_em2.worst(column)
        external = max(0.0, em1 - em2)
        rows.append({
            "antenna": report_em1.antenna,
            "metric": metric,
            "em1_worst": em1,
            "em2_worst": em2,
            "external_part": external,
            "dominant_factor": EXTERNAL_FACTOR if external > em2 else INHERENT_FACTOR[report_em1.kind],
        })
    return pd.DataFrame(rows)
