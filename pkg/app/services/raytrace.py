"""
Service de propagation intérieure
Méthode des images sur un plan d'étage 2D, sélection du meilleur faisceau,
puissance reçue large bande et efficacité spectrale (simulation système)
"""
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy.constants import c as SPEED_OF_LIGHT

from app.config import settings
from app.exceptions import ConfigError, ContractViolation
from app.models.schemas import IndoorMap, NoiseModel, SlsSection
from app.services.antenna_array import GHZ
from app.services.beampattern import BeamPattern

logger = logging.getLogger(__name__)

NO_SIGNAL_DBM = -999.0
_EPS = 1e-9

Point = Tuple[float, float]


# --- Carte --------------------------------------------------------------------


def load_map(reference: str, base_directory: Optional[Path] = None) -> IndoorMap:
    """Carte embarquée (identifiant) ou fichier JSON (chemin)"""
    if reference.endswith(".json"):
        path = Path(reference)
        if not path.is_absolute() and base_directory is not None:
            path = base_directory / path
    else:
        path = settings.maps_directory / f"{reference}.json"
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Impossible de lire la carte {path}: {e}") from e
    try:
        return IndoorMap.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(
            f"Carte invalide: {path}",
            [f"/{'/'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()],
        ) from e


def rx_grid(indoor_map: IndoorMap, step_m: Optional[float] = None) -> np.ndarray:
    """Points de réception (x, y) de la zone, en ordre ligne par ligne; l'émetteur est exclu"""
    region = indoor_map.rx_region
    step = step_m or region.step_m
    nx = int(math.floor((region.x1 - region.x0) / step + _EPS)) + 1
    ny = int(math.floor((region.y1 - region.y0) / step + _EPS)) + 1
    xs = region.x0 + step * np.arange(nx)
    ys = region.y0 + step * np.arange(ny)
    grid = np.array([(x, y) for y in ys for x in xs], dtype=float).reshape(-1, 2)
    tx = np.array([indoor_map.tx.x, indoor_map.tx.y])
    return grid[np.linalg.norm(grid - tx, axis=1) > _EPS]


# --- Géométrie ----------------------------------------------------------------


def _reflect(point: np.ndarray, seg: np.ndarray) -> np.ndarray:
    a, b = seg[:2], seg[2:]
    e = b - a
    proj = a + np.dot(point - a, e) / np.dot(e, e) * e
    return 2 * proj - point


def _intersections(p: np.ndarray, q: np.ndarray, segs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Paramètres (s sur pq, u sur chaque segment) et masque de croisement strict"""
    r = q - p
    a = segs[:, :2]
    e = segs[:, 2:] - a
    denom = r[0] * e[:, 1] - r[1] * e[:, 0]
    ap = a - p
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (ap[:, 0] * e[:, 1] - ap[:, 1] * e[:, 0]) / denom
        u = (ap[:, 0] * r[1] - ap[:, 1] * r[0]) / denom
    hit = (np.abs(denom) > 1e-15) & (s > _EPS) & (s < 1 - _EPS) & (u >= -_EPS) & (u <= 1 + _EPS)
    return s, u, hit


@dataclass(frozen=True)
class PropagationPath:
    """Trajet spéculaire de l'émetteur au récepteur"""

    vertices: Tuple[Point, ...]
    length: float
    reflections: int
    departure_angle: float
    loss_db: float
    walls: Tuple[int, ...] = ()


def _wrap_deg(angle: float) -> float:
    wrapped = (angle + 180.0) % 360.0 - 180.0
    return 180.0 if wrapped == -180.0 else wrapped


class RayTracer:
    """
    Traceur par méthode des images pour une carte donnée

    Les images de l'émetteur ne dépendent que de la séquence de murs: elles sont
    calculées une fois puis réutilisées pour chaque point de réception.
    """

    def __init__(self, indoor_map: IndoorMap, max_reflections: int = 2):
        if not 0 <= max_reflections <= 3:
            raise ContractViolation("max_reflections doit être compris entre 0 et 3")
        self.map = indoor_map
        self.max_reflections = max_reflections
        self.tx = np.array([indoor_map.tx.x, indoor_map.tx.y], dtype=float)
        self.walls = np.array([[w.x1, w.y1, w.x2, w.y2] for w in indoor_map.walls], dtype=float).reshape(-1, 4)
        self.wall_loss = np.array([w.loss_db for w in indoor_map.walls], dtype=float)
        self.blockers = np.vstack([
            self.walls,
            np.array([[o.x1, o.y1, o.x2, o.y2] for o in indoor_map.obstacles], dtype=float).reshape(-1, 4),
        ])
        self.sequences = self._image_sequences()
        logger.debug(
            "Traceur: %d murs, %d séquences d'images (<= %d réflexions)",
            len(self.walls), len(self.sequences), max_reflections,
        )

    def _image_sequences(self) -> List[Tuple[Tuple[int, ...], List[np.ndarray]]]:
        sequences = [((), [])]
        n = len(self.walls)
        for order in range(1, self.max_reflections + 1):
            for seq in itertools.product(range(n), repeat=order):
                if any(a == b for a, b in zip(seq, seq[1:])):
                    continue
                images, point = [], self.tx
                for wall in seq:
                    point = _reflect(point, self.walls[wall])
                    images.append(point)
                sequences.append((seq, images))
        return sequences

    def _visible(self, p: np.ndarray, q: np.ndarray) -> bool:
        if np.linalg.norm(q - p) <= _EPS:
            return False
        if not len(self.blockers):
            return True
        return not _intersections(p, q, self.blockers)[2].any()

    def _path(self, seq: Tuple[int, ...], images: List[np.ndarray], rx: np.ndarray) -> Optional[PropagationPath]:
        points = [rx]
        current = rx
        for k in reversed(range(len(seq))):
            wall = self.walls[seq[k]][None, :]
            s, _, hit = _intersections(current, images[k], wall)
            if not hit[0]:
                return None
            current = current + s[0] * (images[k] - current)
            points.append(current)
        points.append(self.tx)
        vertices = points[::-1]

        for p, q in zip(vertices, vertices[1:]):
            if not self._visible(p, q):
                return None

        length = float(sum(np.linalg.norm(q - p) for p, q in zip(vertices, vertices[1:])))
        first = vertices[1] - vertices[0]
        departure = _wrap_deg(math.degrees(math.atan2(first[1], first[0])) - self.map.tx.azimuth_deg)
        return PropagationPath(
            vertices=tuple((float(v[0]), float(v[1])) for v in vertices),
            length=length,
            reflections=len(seq),
            departure_angle=departure,
            loss_db=float(self.wall_loss[list(seq)].sum()) if seq else 0.0,
            walls=seq,
        )

    def paths(self, rx: Sequence[float]) -> List[PropagationPath]:
        rx = np.asarray(rx, dtype=float)
        found = [p for seq, images in self.sequences if (p := self._path(seq, images, rx)) is not None]
        return sorted(found, key=lambda p: (round(p.length, 12), p.reflections, p.walls))


def trace_paths(indoor_map: IndoorMap, rx: Sequence[float], max_reflections: int = 2) -> List[PropagationPath]:
    """LoS (si dégagé) et trajets spéculaires jusqu'à max_reflections, par longueur croissante"""
    region = indoor_map.rx_region
    if not (region.x0 - _EPS <= rx[0] <= region.x1 + _EPS and region.y0 - _EPS <= rx[1] <= region.y1 + _EPS):
        raise ContractViolation(f"Récepteur {tuple(rx)} hors de la zone de réception")
    return RayTracer(indoor_map, max_reflections).paths(rx)


# --- Bilan de liaison ---------------------------------------------------------


def fspl_db(distance_m, f_ghz) -> np.ndarray:
    """Affaiblissement en espace libre 20 log10(4 pi d f / c)"""
    return 20.0 * np.log10(4 * np.pi * np.asarray(distance_m) * np.asarray(f_ghz) * GHZ / SPEED_OF_LIGHT)


@dataclass(frozen=True, eq=False)
class _PathArrays:
    length: np.ndarray
    angle: np.ndarray
    loss_db: np.ndarray
    reflections: np.ndarray

    @classmethod
    def of(cls, paths: Sequence[PropagationPath]) -> "_PathArrays":
        return cls(
            np.array([p.length for p in paths], dtype=float),
            np.array([p.departure_angle for p in paths], dtype=float),
            np.array([p.loss_db for p in paths], dtype=float),
            np.array([p.reflections for p in paths], dtype=float),
        )


def _directivity(
    pattern: BeamPattern, arrays: _PathArrays, back_lobe_dbi: float, f_ghz: Optional[float] = None
) -> np.ndarray:
    """Directivité (fréquences x trajets, ou la seule ligne f); lobe arrière constant hors de [-90°, 90°]"""
    front = np.abs(arrays.angle) <= 90.0
    rows = len(pattern.freqs) if f_ghz is None else 1
    gains = np.full((rows, arrays.angle.size), back_lobe_dbi)
    if front.any():
        gains[:, front] = pattern.sample(arrays.angle[front], f_ghz)
    return gains


def _reference_directivity(
    pattern: BeamPattern, arrays: _PathArrays, band: Sequence[float], back_lobe_dbi: float
) -> np.ndarray:
    """Directivité sans squint aux fréquences de band (la ligne fc répétée sans référence)"""
    if pattern.reference is None:
        return np.repeat(_directivity(pattern, arrays, back_lobe_dbi, pattern.fc_ghz), len(band), axis=0)
    gains = _directivity(pattern.reference, arrays, back_lobe_dbi)
    return gains[[pattern.reference.index(f) for f in band]]


def _powers_dbm(
    gains: np.ndarray,
    arrays: _PathArrays,
    freqs: Sequence[float],
    tx_power_dbm: float,
    rx_gain_dbi: float,
    coherent: bool,
) -> np.ndarray:
    """Puissance reçue (dBm) par fréquence, gains alignés sur freqs"""
    if arrays.length.size == 0:
        return np.full(len(freqs), NO_SIGNAL_DBM)
    f = np.asarray(freqs, dtype=float)[:, None]
    per_path = tx_power_dbm + gains + rx_gain_dbi - fspl_db(arrays.length[None, :], f) - arrays.loss_db[None, :]
    if coherent:
        k = 2 * np.pi * f * GHZ / SPEED_OF_LIGHT
        # déphasage de propagation, et pi par réflexion
        phase = -k * arrays.length[None, :] + np.pi * arrays.reflections[None, :]
        field = np.sum(10 ** (per_path / 20) * np.exp(1j * phase), axis=1)
        total = np.abs(field) ** 2
    else:
        total = np.sum(10 ** (per_path / 10), axis=1)
    with np.errstate(divide="ignore"):
        return np.maximum(10 * np.log10(total), NO_SIGNAL_DBM)


def received_power(
    paths: Sequence[PropagationPath],
    pattern: BeamPattern,
    f_ghz: float,
    tx_power_dbm: float = 0.0,
    rx_gain_dbi: float = 0.0,
    coherent: bool = False,
    row_ghz: Optional[float] = None,
    back_lobe_dbi: Optional[float] = None,
) -> float:
    """
    Puissance reçue (dBm) sommée sur les trajets

    row_ghz choisit la ligne du diagramme (par défaut f); l'affaiblissement de
    propagation est toujours évalué à f. Sans trajet, renvoie -999 dBm.
    """
    if not paths:
        return NO_SIGNAL_DBM
    back_lobe = settings.back_lobe_dbi if back_lobe_dbi is None else back_lobe_dbi
    arrays = _PathArrays.of(paths)
    gains = _directivity(pattern, arrays, back_lobe, f_ghz if row_ghz is None else row_ghz)
    return float(_powers_dbm(gains, arrays, [f_ghz], tx_power_dbm, rx_gain_dbi, coherent)[0])


def best_beam_selection(
    patterns: Sequence[BeamPattern],
    indoor_map: IndoorMap,
    rx: Sequence[float],
    max_reflections: int = 2,
    tx_power_dbm: float = 0.0,
    rx_gain_dbi: float = 0.0,
    paths: Optional[Sequence[PropagationPath]] = None,
    coherent: bool = False,
    back_lobe_dbi: Optional[float] = None,
) -> int:
    """
    Faisceau de puissance reçue maximale à fc

    Args:
        patterns: Un diagramme par faisceau, tous à la même fc
        indoor_map: Carte intérieure
        rx: Position du récepteur (x, y) en mètres
        max_reflections: Ordre maximal des trajets tracés
        tx_power_dbm: Puissance émise
        rx_gain_dbi: Gain de l'antenne de réception
        paths: Trajets déjà tracés vers rx (évite un second tracé)
        coherent: Somme des champs au lieu des puissances
        back_lobe_dbi: Directivité hors du demi-plan avant

    Returns:
        Indice du faisceau choisi (le plus petit indice à égalité)
    """
    if not patterns:
        raise ContractViolation("Au moins un faisceau requis")
    fcs = {p.fc_ghz for p in patterns}
    if len(fcs) != 1:
        raise ContractViolation("Les faisceaux doivent partager la même fréquence centrale")
    fc = fcs.pop()
    if paths is None:
        paths = trace_paths(indoor_map, rx, max_reflections)
    powers = [
        received_power(paths, p, fc, tx_power_dbm, rx_gain_dbi, coherent, back_lobe_dbi=back_lobe_dbi)
        for p in patterns
    ]
    return int(np.argmax(powers))


def spectral_efficiency(powers_dbm: Sequence[float], noise: NoiseModel) -> float:
    """Moyenne sur les sous-bandes de log2(1 + SNR)"""
    powers = np.asarray(powers_dbm, dtype=float)
    if powers.size == 0:
        raise ContractViolation("Aucune puissance fournie")
    snr = 10 ** ((powers - noise.noise_floor_dbm) / 10)
    return float(np.mean(np.log2(1.0 + snr)))


# --- Simulation système -------------------------------------------------------


def degradation_db(se_baseline: float, se_squint: float) -> float:
    """Perte de SNR équivalente entre deux efficacités spectrales"""
    if se_baseline <= 0 and se_squint <= 0:
        return 0.0
    if se_squint <= 0:
        return math.inf
    return 10 * math.log10((2 ** se_baseline - 1) / (2 ** se_squint - 1))


def power_column(curve: str, f_ghz: float) -> str:
    """Nom de colonne de la puissance reçue par fréquence ('squint' ou 'baseline')"""
    return f"p_{curve}_{f_ghz:g}GHz_dbm"


@dataclass
class SlsResult:
    """Enregistrements par point de réception et résumé pour une antenne et un modèle"""

    antenna: str
    eval_model: str
    records: pd.DataFrame
    band_ghz: List[float] = field(default_factory=list)

    @property
    def median_se_squint(self) -> float:
        return float(np.median(self.records["se_squint"]))

    @property
    def median_se_baseline(self) -> float:
        return float(np.median(self.records["se_baseline"]))

    @property
    def median_degradation_db(self) -> float:
        """Médiane des dégradations par point"""
        return float(np.median(self.records["degradation_db"]))

    @property
    def max_degradation_db(self) -> float:
        return float(self.records["degradation_db"].max())

    @property
    def median_power_ratio_pct(self) -> float:
        return float(np.median(self.records["power_ratio_pct"]))

    def powers(self, curve: str = "squint") -> pd.DataFrame:
        """Puissances reçues (dBm), une ligne par point et une colonne par fréquence"""
        if curve not in ("squint", "baseline"):
            raise ContractViolation(f"Courbe inconnue: {curve}")
        columns = [power_column(curve, f) for f in self.band_ghz]
        frame = self.records[columns].copy()
        frame.columns = [f"{f:g}" for f in self.band_ghz]
        return frame

    def cdf(self, column: str = "se_squint") -> pd.DataFrame:
        values = np.sort(self.records[column].to_numpy())
        prob = np.arange(1, values.size + 1) / values.size
        return pd.DataFrame({"se_bits": values, "cdf": prob})

    def summary(self) -> Dict[str, object]:
        return {
            "antenna": self.antenna,
            "eval_model": self.eval_model,
            "points": int(len(self.records)),
            "median_se_squint": self.median_se_squint,
            "median_se_baseline": self.median_se_baseline,
            "median_degradation_db": self.median_degradation_db,
            "max_degradation_db": self.max_degradation_db,
            "median_power_ratio_pct": self.median_power_ratio_pct,
            "median_power_dbm": {
                curve: [float(v) for v in self.powers(curve).median()]
                for curve in ("squint", "baseline")
            },
        }


def _evaluate_point(
    tracer: RayTracer,
    rx: np.ndarray,
    patterns: Sequence[BeamPattern],
    band: Sequence[float],
    sls: SlsSection,
    back_lobe: float,
) -> dict:
    paths = tracer.paths(rx)
    if not paths:
        beam = 0
        squint = baseline = np.full(len(band), NO_SIGNAL_DBM)
    else:
        beam = best_beam_selection(
            patterns, tracer.map, rx, tracer.max_reflections, sls.tx_power_dbm, sls.rx_gain_dbi,
            paths=paths, coherent=sls.coherent, back_lobe_dbi=back_lobe,
        )
        pattern = patterns[beam]
        arrays = _PathArrays.of(paths)
        gains = _directivity(pattern, arrays, back_lobe)
        squint_gains = gains[[pattern.index(f) for f in band]]
        baseline_gains = _reference_directivity(pattern, arrays, band, back_lobe)
        squint = _powers_dbm(squint_gains, arrays, band, sls.tx_power_dbm, sls.rx_gain_dbi, sls.coherent)
        baseline = _powers_dbm(baseline_gains, arrays, band, sls.tx_power_dbm, sls.rx_gain_dbi, sls.coherent)

    se_squint = spectral_efficiency(squint, sls.noise)
    se_baseline = spectral_efficiency(baseline, sls.noise)
    ratio = 100.0 * np.sum(10 ** (squint / 10)) / np.sum(10 ** (baseline / 10))
    record = {
        "x": float(rx[0]),
        "y": float(rx[1]),
        "beam": beam,
        "se_squint": se_squint,
        "se_baseline": se_baseline,
        "degradation_db": degradation_db(se_baseline, se_squint),
        "power_ratio_pct": float(ratio),
    }
    for curve, powers in (("squint", squint), ("baseline", baseline)):
        for f, p in zip(band, powers):
            record[power_column(curve, f)] = float(p)
    return record


def sls_run(
    indoor_map: IndoorMap,
    patterns: Sequence[BeamPattern],
    sls: SlsSection,
    band_ghz: Optional[Sequence[float]] = None,
    antenna: str = "",
    threads: Optional[int] = None,
) -> SlsResult:
    """
    Simulation système pour un jeu de faisceaux

    Pour chaque point: faisceau choisi à fc, puis puissances par fréquence avec
    le diagramme réel et avec son diagramme sans squint (référence rattachée, ou
    à défaut la ligne fc réutilisée à toutes les fréquences).

    Args:
        indoor_map: Carte intérieure (émetteur et zone de réception)
        patterns: Un diagramme par faisceau, de préférence avec leur référence
        sls: Section sls du scénario (réflexions, bilan de liaison, bruit, pas)
        band_ghz: Fréquences des sous-bandes (par défaut celles des diagrammes)
        antenna: Nom de l'antenne dans les résultats
        threads: Nombre de threads (par défaut celui de la configuration)

    Returns:
        SlsResult avec un enregistrement par point, dans l'ordre de la grille
    """
    if not patterns:
        raise ContractViolation("Au moins un faisceau requis")
    band = list(band_ghz if band_ghz is not None else patterns[0].freqs)
    points = rx_grid(indoor_map, sls.step_m)
    if points.size == 0:
        raise ConfigError("Grille de réception vide", ["/sls/map: rx_region ne contient aucun point"])

    tracer = RayTracer(indoor_map, sls.max_reflections)
    back_lobe = settings.back_lobe_dbi
    workers = max(1, threads or settings.threads)
    logger.info(
        "SLS %s %s: %d points, %d faisceaux, %d fréquences, %d threads",
        antenna, patterns[0].eval_model.value, len(points), len(patterns), len(band), workers,
    )

    def evaluate(rx: np.ndarray) -> dict:
        return _evaluate_point(tracer, rx, patterns, band, sls, back_lobe)

    if workers == 1:
        rows = [evaluate(rx) for rx in points]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(evaluate, points))

    result = SlsResult(
        antenna=antenna or patterns[0].label,
        eval_model=patterns[0].eval_model.value,
        records=pd.DataFrame(rows),
        band_ghz=band,
    )
    logger.info(
        "SLS %s %s: SE médiane %.3f bit/s/Hz, dégradation médiane %.3f dB",
        result.antenna, result.eval_model, result.median_se_squint, result.median_degradation_db,
    )
    return result
