"""
Modèles Pydantic pour les fichiers de configuration du simulateur
(matériaux, réseau d'antennes, lentille, carte intérieure, scénarios)
"""
import math
from enum import Enum
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = "1"


class StrictModel(BaseModel):
    """Base commune: clés inconnues interdites, objets immuables"""

    model_config = ConfigDict(extra="forbid", frozen=True)


class MaterialKind(str, Enum):
    CONSTANT = "constant"
    TABULATED = "tabulated"
    DRUDE_LORENTZ = "drude_lorentz"


class ElementKind(str, Enum):
    IDEAL = "ideal"
    NARROWBAND_PATCH = "narrowband_patch"


class EvalModel(str, Enum):
    """EM1: éléments à bande étroite inclus; EM2: éléments idéaux large bande"""

    EM1 = "EM1"
    EM2 = "EM2"


class Mechanism(str, Enum):
    PHASE = "phase"
    TTD = "ttd"
    LENS_FEED = "lens-feed"


class AntennaKind(str, Enum):
    PHASED = "phased"
    LENS = "lens"
    TTD = "ttd"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"
    SVG = "svg"


# --- Matériaux ---------------------------------------------------------------


class Resonance(StrictModel):
    """Terme de Lorentz: force, fréquence de résonance et amortissement (GHz)"""

    delta_eps: float = Field(..., ge=0, description="Force de la résonance")
    f0_ghz: float = Field(..., gt=0, description="Fréquence de résonance")
    gamma_ghz: float = Field(..., ge=0, description="Constante d'amortissement")


class DispersiveMaterial(StrictModel):
    """Permittivité complexe dépendant de la fréquence (fichier matériau, version 1)"""

    version: Literal["1"] = SCHEMA_VERSION
    name: str = Field(..., min_length=1)
    kind: MaterialKind
    band_ghz: Tuple[float, float] = Field((0.0, 1.0e6), description="Bande de validité")
    description: Optional[str] = None
    eps_r: Optional[float] = Field(None, description="Constante diélectrique (kind=constant)")
    tan_delta: Optional[float] = Field(None, description="Tangente de pertes (kind=constant)")
    samples: List[Tuple[float, float, float]] = Field(
        default_factory=list, description="(f GHz, eps_r, tan_delta) pour kind=tabulated"
    )
    eps_inf: Optional[float] = Field(None, description="Permittivité haute fréquence (drude_lorentz)")
    resonances: List[Resonance] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_kind(self):
        lo, hi = self.band_ghz
        if not lo < hi:
            raise ValueError("band_ghz doit être strictement croissant")
        if self.kind is MaterialKind.CONSTANT:
            if self.eps_r is None or self.tan_delta is None:
                raise ValueError("eps_r et tan_delta sont requis pour kind=constant")
            if self.eps_r < 1 or self.tan_delta < 0:
                raise ValueError("eps_r >= 1 et tan_delta >= 0 requis")
        elif self.kind is MaterialKind.TABULATED:
            if len(self.samples) < 2:
                raise ValueError("au moins deux échantillons requis pour kind=tabulated")
            freqs = [s[0] for s in self.samples]
            if any(b <= a for a, b in zip(freqs, freqs[1:])):
                raise ValueError("fréquences des échantillons strictement croissantes requises")
            if any(s[1] < 1 or s[2] < 0 for s in self.samples):
                raise ValueError("eps_r >= 1 et tan_delta >= 0 requis pour chaque échantillon")
            if lo < freqs[0] or hi > freqs[-1]:
                raise ValueError("band_ghz doit être contenu dans la plage des échantillons")
        elif self.kind is MaterialKind.DRUDE_LORENTZ:
            if self.eps_inf is None:
                raise ValueError("eps_inf est requis pour kind=drude_lorentz")
        return self


# --- Réseau d'antennes -------------------------------------------------------


class ElementModel(StrictModel):
    """Gain d'un élément rayonnant: idéal ou patch à bande étroite"""

    kind: ElementKind = ElementKind.IDEAL
    g0_dbi: float = Field(5.0, description="Gain dans l'axe à fc")
    q: float = Field(1.5, ge=0, description="Exposant angulaire cos(theta)^q")
    edge_rolloff_db: float = Field(0.4, ge=0, description="Chute de gain aux bords de bande")


class ArrayConfig(StrictModel):
    """Géométrie du réseau linéaire uniforme (section 'array' du scénario)"""

    n_elements: int = Field(28, ge=1)
    spacing_lambda: float = Field(0.5, gt=0, description="Espacement en longueurs d'onde à fc")
    fc_ghz: float = Field(28.5, gt=0)
    band_ghz: List[float] = Field(default_factory=lambda: [27.0, 27.5, 28.0, 29.0, 29.5, 30.0])
    element: ElementModel = Field(
        default_factory=lambda: ElementModel(kind=ElementKind.NARROWBAND_PATCH)
    )

    @field_validator("band_ghz")
    @classmethod
    def _check_band(cls, band):
        if not band:
            raise ValueError("la bande ne peut pas être vide")
        if any(b <= a for a, b in zip(band, band[1:])):
            raise ValueError("la bande doit être strictement croissante")
        return band

    @model_validator(mode="after")
    def _check_fc(self):
        if not min(self.band_ghz) <= self.fc_ghz <= max(self.band_ghz):
            raise ValueError("fc_ghz doit être compris dans la bande")
        return self


# --- Lentille ----------------------------------------------------------------


class FeedsSection(StrictModel):
    count: int = Field(28, ge=1)
    pitch_mm: Union[float, Literal["auto"]] = "auto"

    @field_validator("pitch_mm")
    @classmethod
    def _check_pitch(cls, pitch):
        if pitch != "auto" and pitch <= 0:
            raise ValueError("pitch_mm doit être positif ou 'auto'")
        return pitch


class LensSection(StrictModel):
    """Section 'lens' du scénario"""

    diameter_lambda: float = Field(20.0, gt=0)
    focal_over_diameter: float = Field(1.0, gt=0)
    material: str = Field("teflon_a", description="Identifiant embarqué ou chemin vers un fichier JSON")
    feeds: FeedsSection = Field(default_factory=FeedsSection)
    active_feed: Optional[int] = Field(None, ge=0)
    target_aod_deg: Optional[float] = None
    edge_thickness_lambda: float = Field(0.25, gt=0)

    @model_validator(mode="after")
    def _check_selection(self):
        if self.active_feed is not None and self.target_aod_deg is not None:
            raise ValueError("active_feed et target_aod_deg sont mutuellement exclusifs")
        if self.active_feed is not None and self.active_feed >= self.feeds.count:
            raise ValueError("active_feed hors de la liste des sources")
        return self


class AntennaSection(StrictModel):
    kind: AntennaKind
    label: Optional[str] = None
    array: ArrayConfig = Field(default_factory=ArrayConfig)
    lens: Optional[LensSection] = None

    @model_validator(mode="after")
    def _check_lens(self):
        if self.kind is AntennaKind.LENS and self.lens is None:
            raise ValueError("la section 'lens' est requise pour kind=lens")
        if self.kind is not AntennaKind.LENS and self.lens is not None:
            raise ValueError("la section 'lens' n'est valide que pour kind=lens")
        return self

    @property
    def name(self) -> str:
        return self.label or self.kind.value


# --- Carte intérieure --------------------------------------------------------


class WallSpec(StrictModel):
    x1: float
    y1: float
    x2: float
    y2: float
    loss_db: float = Field(6.0, ge=0, description="Perte par réflexion")

    @model_validator(mode="after")
    def _check_length(self):
        if math.hypot(self.x2 - self.x1, self.y2 - self.y1) <= 0:
            raise ValueError("mur dégénéré (longueur nulle)")
        return self


class ObstacleSpec(StrictModel):
    x1: float
    y1: float
    x2: float
    y2: float


class TxSpec(StrictModel):
    x: float
    y: float
    azimuth_deg: float = 0.0


class RxRegion(StrictModel):
    x0: float
    y0: float
    x1: float
    y1: float
    step_m: float = Field(0.1, gt=0)

    @model_validator(mode="after")
    def _check_box(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError("rx_region: x1 >= x0 et y1 >= y0 requis")
        return self


class IndoorMap(StrictModel):
    """Plan d'étage 2D: murs réfléchissants, émetteur et zone de réception"""

    name: Optional[str] = None
    walls: List[WallSpec] = Field(default_factory=list)
    tx: TxSpec
    rx_region: RxRegion
    obstacles: List[ObstacleSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_tx(self):
        for i, wall in enumerate(self.walls):
            if _point_segment_distance(self.tx.x, self.tx.y, wall) < 1e-9:
                raise ValueError(f"l'émetteur est sur le mur {i}")
        return self


def _point_segment_distance(px: float, py: float, seg) -> float:
    dx, dy = seg.x2 - seg.x1, seg.y2 - seg.y1
    t = ((px - seg.x1) * dx + (py - seg.y1) * dy) / (dx * dx + dy * dy)
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (seg.x1 + t * dx), py - (seg.y1 + t * dy))


# --- Scénarios ---------------------------------------------------------------


class NoiseModel(StrictModel):
    noise_figure_db: float = 7.0
    subband_hz: float = Field(100e6, gt=0)

    @property
    def noise_floor_dbm(self) -> float:
        return -174.0 + 10.0 * math.log10(self.subband_hz) + self.noise_figure_db


class SlsSection(StrictModel):
    """Simulation système: carte, jeu de faisceaux, bilan de liaison"""

    map: str
    max_reflections: int = Field(2, ge=0, le=3)
    beam_count: int = Field(10, ge=1)
    beam_span_deg: Tuple[float, float] = (0.0, 30.0)
    tx_power_dbm: float = 0.0
    rx_gain_dbi: float = 0.0
    noise: NoiseModel = Field(default_factory=NoiseModel)
    coherent: bool = False
    step_m: Optional[float] = Field(None, gt=0, description="Remplace le pas de la carte")


class LinkSection(StrictModel):
    """Liaison point à point en visibilité directe dans l'axe du faisceau à fc"""

    aod_deg: float = 9.26
    distance_m: float = Field(3.0, gt=0)
    tx_power_dbm: float = 0.0
    rx_gain_dbi: float = 0.0
    report_freqs_ghz: List[float] = Field(default_factory=lambda: [27.5, 29.5])


class NumericsSection(StrictModel):
    theta_step_deg: Optional[float] = Field(None, gt=0, le=1.0)
    ray_count: Optional[int] = Field(None, ge=101)


class OutputsSection(StrictModel):
    directory: str = "results"
    formats: List[OutputFormat] = Field(default_factory=lambda: [OutputFormat.CSV, OutputFormat.JSON], min_length=1)


class Scenario(StrictModel):
    """Fichier scénario (version 1) partagé par toutes les sous-commandes"""

    version: Literal["1"] = SCHEMA_VERSION
    name: str = Field(..., min_length=1)
    antennas: List[AntennaSection] = Field(..., min_length=1)
    eval_models: List[EvalModel] = Field(default_factory=lambda: [EvalModel.EM1, EvalModel.EM2], min_length=1)
    band_ghz: Optional[List[float]] = Field(None, description="Remplace la bande de chaque antenne")
    aods_deg: List[float] = Field(default_factory=lambda: [6.0, 12.0, 18.0, 24.0, 30.0])
    sls: Optional[SlsSection] = None
    link: Optional[LinkSection] = None
    numerics: NumericsSection = Field(default_factory=NumericsSection)
    outputs: OutputsSection = Field(default_factory=OutputsSection)

    @field_validator("eval_models")
    @classmethod
    def _unique_models(cls, models):
        if len(set(models)) != len(models):
            raise ValueError("eval_models ne doit pas contenir de doublons")
        return models

    @field_validator("aods_deg")
    @classmethod
    def _check_aods(cls, aods):
        if any(abs(a) >= 90 for a in aods):
            raise ValueError("chaque AoD doit vérifier |aod| < 90")
        return aods

    @field_validator("antennas")
    @classmethod
    def _unique_labels(cls, antennas):
        names = [a.name for a in antennas]
        if len(set(names)) != len(names):
            raise ValueError("chaque antenne doit avoir un label unique")
        return antennas

    @model_validator(mode="after")
    def _apply_band(self):
        if self.band_ghz is None:
            return self
        antennas = [
            a.model_copy(update={"array": ArrayConfig.model_validate(
                {**a.array.model_dump(), "band_ghz": self.band_ghz}
            )})
            for a in self.antennas
        ]
        object.__setattr__(self, "antennas", antennas)
        return self

    def antenna_labels(self) -> List[str]:
        return [a.name for a in self.antennas]
