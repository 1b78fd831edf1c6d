"""
Service de la lentille diélectrique
Profil hyperbolique, tracé de rayons de Snell dans un matériau dispersif,
synthèse du champ lointain depuis l'ouverture et pointage par commutation de sources

Repère 2D (x transverse, z axial): foyer à l'origine, face hyperbolique tournée
vers la source, face plane de sortie en z = back_z. Une source décalée de
offset > 0 est placée en x = -offset et pointe vers les angles positifs.
"""
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.optimize import brentq

from app.config import settings
from app.exceptions import (
    ContractViolation,
    GeometryError,
    LensGeometryError,
    NoRefractionError,
    ScanRangeError,
    TotalInternalReflectionError,
)
from app.models.schemas import (
    AntennaSection,
    DispersiveMaterial,
    ElementModel,
    EvalModel,
    Mechanism,
)
from app.services.antenna_array import GHZ, IDEAL_ELEMENT, element_gain, frozen_element, wavelength
from app.services.beampattern import (
    BeamPattern,
    Steering,
    parabola_vertex,
    pattern_freqs,
    theta_grid,
)
from app.services.materials import frozen_material, loss_tangent, material_library, refractive_index

logger = logging.getLogger(__name__)

PROFILE_SAMPLES = 1001
FEED_SCAN_LIMIT_DEG = 45.0
ASYMPTOTE_MARGIN_DEG = 1.0
BEAM_RESIDUAL_DEG = 0.05
_FAR_FIELD_CHUNK = 1024
_COARSE_STEP_DEG = 0.1
_FINE_STEP_DEG = 0.01


# --- Profil -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LensProfile:
    """Face avant hyperbolique échantillonnée et face arrière plane"""

    x: np.ndarray
    z: np.ndarray
    n_design: float
    focal_length: float
    diameter: float
    back_z: float

    @property
    def conic_c(self) -> float:
        return (self.n_design - 1.0) * self.focal_length

    def sag(self, x) -> np.ndarray:
        """z(x) exact de la face avant: x^2 + z^2 = (n z - c)^2, branche n z - c > 0"""
        n, c = self.n_design, self.conic_c
        x = np.asarray(x, dtype=float)
        return (n * c + np.sqrt(c ** 2 + (n ** 2 - 1) * x ** 2)) / (n ** 2 - 1)

    def radius(self, phi_deg) -> np.ndarray:
        """r(phi) = (n - 1) F / (n cos phi - 1) depuis le foyer"""
        phi = np.radians(np.asarray(phi_deg, dtype=float))
        return self.conic_c / (self.n_design * np.cos(phi) - 1.0)

    def path_lengths(self) -> np.ndarray:
        """Chemin optique foyer -> face de sortie pour chaque échantillon, à l'indice de conception"""
        return np.hypot(self.x, self.z) + self.n_design * (self.back_z - self.z)

    @property
    def center_thickness(self) -> float:
        return self.back_z - self.focal_length


def hyperbolic_profile(
    diameter: float,
    focal_length: float,
    n_design: float,
    edge_thickness: float = 0.0,
    samples: int = PROFILE_SAMPLES,
) -> LensProfile:
    """Profil collimatant pour une source au foyer, échantillonné uniformément en x"""
    if n_design <= 1.0:
        raise NoRefractionError(f"Indice de conception {n_design:.6f} <= 1: aucune réfraction")
    if diameter <= 0 or focal_length <= 0:
        raise GeometryError("Diamètre et focale doivent être positifs")
    if samples < PROFILE_SAMPLES:
        raise ContractViolation(f"Au moins {PROFILE_SAMPLES} échantillons requis")

    x = np.linspace(-diameter / 2, diameter / 2, samples)
    profile = LensProfile(x, np.empty(0), n_design, focal_length, diameter, 0.0)
    z = profile.sag(x)

    phi_edge = math.degrees(math.atan2(diameter / 2, z[-1]))
    phi_max = math.degrees(math.acos(1.0 / n_design)) - ASYMPTOTE_MARGIN_DEG
    if phi_edge >= phi_max:
        raise GeometryError(
            f"Ouverture irréalisable: bord à {phi_edge:.2f}° du foyer, limite {phi_max:.2f}°"
        )

    x.setflags(write=False)
    z.setflags(write=False)
    return replace(profile, z=z, back_z=float(z[-1] + edge_thickness))


# --- Réfraction ---------------------------------------------------------------


def refract_many(incident: np.ndarray, normal: np.ndarray, n1, n2) -> Tuple[np.ndarray, np.ndarray]:
    """
    Snell vectoriel pour un lot de rayons (lignes de vecteurs unitaires)

    Retourne (directions réfractées, masque de réflexion totale).
    """
    incident = np.atleast_2d(np.asarray(incident, dtype=float))
    normal = np.atleast_2d(np.asarray(normal, dtype=float))
    cos_i = -np.sum(normal * incident, axis=1)
    # normale orientée contre le rayon incident
    flip = cos_i < 0
    normal = np.where(flip[:, None], -normal, normal)
    cos_i = np.abs(cos_i)

    eta = np.asarray(n1, dtype=float) / np.asarray(n2, dtype=float)
    sin2_t = eta ** 2 * (1.0 - cos_i ** 2)
    tir = sin2_t > 1.0
    cos_t = np.sqrt(np.clip(1.0 - sin2_t, 0.0, None))
    eta = np.broadcast_to(eta, cos_i.shape)
    refracted = eta[:, None] * incident + (eta * cos_i - cos_t)[:, None] * normal
    refracted /= np.linalg.norm(refracted, axis=1)[:, None]
    return refracted, tir


def refract(incident, normal, n1: float, n2: float) -> np.ndarray:
    """Direction réfractée d'un rayon; lève TotalInternalReflectionError au-delà de l'angle critique"""
    if n1 < 1 or n2 < 1:
        raise ContractViolation("Indices >= 1 requis")
    incident = np.asarray(incident, dtype=float)
    normal = np.asarray(normal, dtype=float)
    if not (np.isclose(np.linalg.norm(incident), 1.0) and np.isclose(np.linalg.norm(normal), 1.0)):
        raise ContractViolation("Vecteurs unitaires requis")
    refracted, tir = refract_many(incident, normal, n1, n2)
    if tir[0]:
        raise TotalInternalReflectionError(math.degrees(math.asin(n2 / n1)))
    return refracted[0]


# --- Assemblage ---------------------------------------------------------------


@dataclass(frozen=True)
class Ray:
    """Segment de rayon: origine, direction unitaire, chemin optique cumulé, amplitude"""

    origin: Tuple[float, float]
    direction: Tuple[float, float]
    optical_path: float
    amplitude: float


@dataclass(frozen=True)
class LensAssembly:
    """Lentille, matériau et réseau de sources commutées sur le plan focal"""

    profile: LensProfile
    material: DispersiveMaterial
    feed_offsets: Tuple[float, ...]
    element: ElementModel
    fc_ghz: float
    band_ghz: Tuple[float, ...]
    active_offset: float = 0.0
    design_aod_deg: float = 0.0
    max_discard_fraction: float = 0.2

    @property
    def diameter(self) -> float:
        return self.profile.diameter

    @property
    def focal_length(self) -> float:
        return self.profile.focal_length

    @property
    def n_design(self) -> float:
        return self.profile.n_design

    @property
    def diameter_lambda(self) -> float:
        return self.diameter / wavelength(self.fc_ghz)

    @property
    def max_offset(self) -> float:
        return max(abs(s) for s in self.feed_offsets)

    def with_offset(self, offset: float, aod_deg: Optional[float] = None) -> "LensAssembly":
        if aod_deg is None:
            aod_deg = math.degrees(math.atan2(offset, self.focal_length))
        return replace(self, active_offset=float(offset), design_aod_deg=float(aod_deg))

    def with_material(self, material: DispersiveMaterial) -> "LensAssembly":
        """Même géométrie, autre matériau (le profil reste celui de conception)"""
        return replace(self, material=material)

    def squint_free(self, eval_model: EvalModel = EvalModel.EM1) -> "LensAssembly":
        """
        Même lentille et même source en matériau non dispersif figé à fc

        En EM1 le gain de l'élément est aussi figé à sa valeur à fc.
        """
        element = frozen_element(self.element) if eval_model is EvalModel.EM1 else self.element
        return replace(self, material=frozen_material(self.material, self.fc_ghz), element=element)


def feed_plane_offsets(count: int, focal_length: float, pitch: Optional[float] = None) -> Tuple[float, ...]:
    """
    Décalages des sources sur le plan focal, centrés sur l'axe

    Pas automatique: le plan couvre +/- F tan(45°), soit +/- F.
    """
    if count == 1:
        return (0.0,)
    if pitch is None:
        pitch = 2 * focal_length * math.tan(math.radians(FEED_SCAN_LIMIT_DEG)) / (count - 1)
    return tuple(float(pitch * (i - (count - 1) / 2)) for i in range(count))


def build_assembly(
    section: AntennaSection,
    base_directory: Optional[Path] = None,
    material: Optional[DispersiveMaterial] = None,
) -> LensAssembly:
    """Assemble la lentille décrite par une section d'antenne de type lens"""
    lens = section.lens
    if lens is None:
        raise ContractViolation(f"L'antenne '{section.name}' n'a pas de section lens")
    cfg = section.array
    lam = wavelength(cfg.fc_ghz)
    material = material or material_library.resolve(lens.material, base_directory)

    diameter = lens.diameter_lambda * lam
    focal_length = lens.focal_over_diameter * diameter
    profile = hyperbolic_profile(
        diameter,
        focal_length,
        refractive_index(material, cfg.fc_ghz),
        edge_thickness=lens.edge_thickness_lambda * lam,
    )
    pitch = None if lens.feeds.pitch_mm == "auto" else lens.feeds.pitch_mm * 1e-3
    offsets = feed_plane_offsets(lens.feeds.count, focal_length, pitch)

    assembly = LensAssembly(
        profile=profile,
        material=material,
        feed_offsets=offsets,
        element=cfg.element,
        fc_ghz=cfg.fc_ghz,
        band_ghz=tuple(cfg.band_ghz),
        max_discard_fraction=settings.max_discard_fraction,
    )
    if lens.active_feed is not None:
        assembly = assembly.with_offset(offsets[lens.active_feed])
    logger.debug(
        "Lentille %s: D=%.1fλ, F=%.4f m, n=%.5f, %d sources",
        material.name, lens.diameter_lambda, focal_length, profile.n_design, len(offsets),
    )
    return assembly


# --- Tracé --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ApertureField:
    """Champ sur la face de sortie: une entrée par rayon conservé"""

    x: np.ndarray
    amplitude: np.ndarray
    optical_path: np.ndarray
    width: np.ndarray
    exit_direction: np.ndarray
    launched_power: float
    discarded: int
    total: int

    @property
    def aperture_power(self) -> float:
        return float(np.sum(self.amplitude ** 2))

    @property
    def exit_angles_deg(self) -> np.ndarray:
        return np.degrees(np.arctan2(self.exit_direction[:, 0], self.exit_direction[:, 1]))


def _front_intersection(profile: LensProfile, xf: float, dx: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """Paramètre t du premier point d'impact sur la face avant (nan si aucun)"""
    n, c = profile.n_design, profile.conic_c
    a = 1.0 - n ** 2 * dz ** 2
    b = 2.0 * (xf * dx + n * c * dz)
    cc = xf ** 2 - c ** 2
    disc = b ** 2 - 4 * a * cc

    with np.errstate(invalid="ignore", divide="ignore"):
        root = np.sqrt(np.where(disc >= 0, disc, np.nan))
        q = -0.5 * (b + np.copysign(root, b))
        roots = np.stack([q / a, cc / q])
        linear = np.abs(a) < 1e-12
        roots[:, linear] = (-cc / b[linear])[None, :]

    z = roots * dz
    x = xf + roots * dx
    valid = (
        (roots > 1e-12)
        & (n * z - c > 0)
        & (np.abs(x) <= profile.diameter / 2 * (1 + 1e-9))
    )
    roots = np.where(valid, roots, np.inf)
    t = roots.min(axis=0)
    return np.where(np.isfinite(t), t, np.nan)


def trace_aperture(
    assembly: LensAssembly,
    f_ghz: float,
    eval_model: EvalModel,
    ray_count: Optional[int] = None,
) -> ApertureField:
    """
    Trace un éventail de rayons de la source active jusqu'à la face de sortie

    L'éventail est uniforme en angle entre les deux bords de la lentille. Les rayons
    en réflexion totale ou sortant par la tranche sont écartés.

    Args:
        assembly: Lentille, matériau et source active
        f_ghz: Fréquence de tracé (indice et pertes du matériau à f)
        eval_model: EM1 pondère les rayons par le gain de l'élément source
        ray_count: Nombre de rayons lancés (par défaut celui de la configuration)

    Returns:
        ApertureField des rayons conservés sur la face de sortie

    Raises:
        LensGeometryError: Plus de max_discard_fraction des rayons sont perdus
    """
    ray_count = ray_count or settings.lens_ray_count
    profile = assembly.profile
    n = refractive_index(assembly.material, f_ghz)
    tan_delta = loss_tangent(assembly.material, f_ghz)
    element = assembly.element if eval_model is EvalModel.EM1 else IDEAL_ELEMENT

    xf = -assembly.active_offset
    half = profile.diameter / 2
    z_edge = float(profile.sag(half))
    alpha = np.linspace(math.atan2(-half - xf, z_edge), math.atan2(half - xf, z_edge), ray_count)
    d_alpha = abs(alpha[1] - alpha[0])
    dx, dz = np.sin(alpha), np.cos(alpha)

    gain = element_gain(element, f_ghz, np.degrees(alpha), assembly.fc_ghz, assembly.band_ghz)
    launched = np.sqrt(gain * d_alpha)

    # entrée par la face hyperbolique
    t = _front_intersection(profile, xf, dx, dz)
    hit = np.isfinite(t)
    t = np.where(hit, t, 0.0)
    px, pz = xf + t * dx, t * dz
    normal = np.stack([px, pz - profile.n_design * (profile.n_design * pz - profile.conic_c)], axis=1)
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    inside, tir_in = refract_many(np.stack([dx, dz], axis=1), normal, 1.0, n)

    # traversée jusqu'à la face plane
    forward = inside[:, 1] > 1e-12
    length = np.where(forward, (profile.back_z - pz) / np.where(forward, inside[:, 1], 1.0), 0.0)
    ex = px + length * inside[:, 0]
    in_rim = np.abs(ex) <= half * (1 + 1e-9)

    # sortie par la face plane
    exit_normal = np.tile([0.0, -1.0], (ray_count, 1))
    outside, tir_out = refract_many(inside, exit_normal, n, 1.0)

    kept = hit & ~tir_in & forward & in_rim & ~tir_out
    discarded = int(ray_count - kept.sum())
    if discarded:
        logger.debug(
            "%d rayons écartés sur %d (offset %.4f m, %.2f GHz)",
            discarded, ray_count, assembly.active_offset, f_ghz,
        )
    if discarded > assembly.max_discard_fraction * ray_count or kept.sum() < 2:
        raise LensGeometryError(discarded, ray_count)

    attenuation = np.exp(-math.pi * f_ghz * GHZ * n * tan_delta * length / SPEED_OF_LIGHT)
    opl = t + n * length
    x_kept = ex[kept]
    return ApertureField(
        x=x_kept,
        amplitude=(launched * attenuation)[kept],
        optical_path=opl[kept],
        width=np.abs(np.gradient(x_kept)),
        exit_direction=outside[kept],
        launched_power=float(np.sum(launched ** 2)),
        discarded=discarded,
        total=ray_count,
    )


def trace_ray(assembly: LensAssembly, f_ghz: float, launch_angle_deg: float) -> List[Ray]:
    """Trajet d'un rayon isolé sous forme de segments (source, face avant, face de sortie)"""
    profile = assembly.profile
    n = refractive_index(assembly.material, f_ghz)
    xf = -assembly.active_offset
    alpha = math.radians(launch_angle_deg)
    d = np.array([math.sin(alpha), math.cos(alpha)])

    t = _front_intersection(profile, xf, d[:1], d[1:])[0]
    if not np.isfinite(t):
        raise GeometryError(f"Le rayon lancé à {launch_angle_deg}° manque la lentille")
    p = np.array([xf + t * d[0], t * d[1]])
    normal = np.array([p[0], p[1] - profile.n_design * (profile.n_design * p[1] - profile.conic_c)])
    inside = refract(d, normal / np.linalg.norm(normal), 1.0, n)
    length = (profile.back_z - p[1]) / inside[1]
    e = p + length * inside
    outside = refract(inside, np.array([0.0, -1.0]), n, 1.0)

    return [
        Ray((xf, 0.0), tuple(d), 0.0, 1.0),
        Ray(tuple(p), tuple(inside), float(t), 1.0),
        Ray(tuple(e), tuple(outside), float(t + n * length), 1.0),
    ]


# --- Champ lointain -----------------------------------------------------------


def lens_far_field(assembly: LensAssembly, f_ghz: float, theta, eval_model: EvalModel,
                   ray_count: Optional[int] = None) -> np.ndarray:
    """
    Puissance brute |F(theta)|^2 rayonnée par l'ouverture de sortie

    F(theta) = somme_k A_k sqrt(dx_k) exp(j k0 (x_k sin theta - OPL_k)).
    """
    aperture = trace_aperture(assembly, f_ghz, eval_model, ray_count)
    k0 = 2 * np.pi * f_ghz * GHZ / SPEED_OF_LIGHT
    weights = aperture.amplitude * np.sqrt(aperture.width) * np.exp(-1j * k0 * aperture.optical_path)

    sin_theta = np.sin(np.radians(np.asarray(theta, dtype=float)))
    power = np.empty(sin_theta.size)
    for start in range(0, sin_theta.size, _FAR_FIELD_CHUNK):
        chunk = sin_theta[start:start + _FAR_FIELD_CHUNK]
        field = np.exp(1j * k0 * np.outer(chunk, aperture.x)) @ weights
        power[start:start + _FAR_FIELD_CHUNK] = np.abs(field) ** 2
    return power


def lens_pattern(
    assembly: LensAssembly,
    eval_model: EvalModel,
    theta: Optional[np.ndarray] = None,
    ray_count: Optional[int] = None,
    label: str = "",
    reference: bool = False,
) -> BeamPattern:
    """
    Diagramme de la lentille sur la bande (plus fc) pour la source active

    Args:
        assembly: Lentille avec sa source active
        eval_model: EM1 ou EM2
        theta: Grille angulaire (par défaut celle de la configuration)
        ray_count: Nombre de rayons par fréquence
        label: Nom de l'antenne
        reference: Rattache le diagramme de la même lentille en matériau non
            dispersif (voir LensAssembly.squint_free)

    Returns:
        BeamPattern normalisé par l'intégrale de sa ligne fc
    """
    theta = theta_grid() if theta is None else np.asarray(theta, dtype=float)
    freqs = pattern_freqs(assembly.band_ghz, assembly.fc_ghz)
    power = np.vstack([
        lens_far_field(assembly, f, theta, eval_model, ray_count) for f in freqs
    ])
    steering = Steering(Mechanism.LENS_FEED, assembly.design_aod_deg, assembly.active_offset)
    pattern = BeamPattern.from_power(
        theta, freqs, power, steering, eval_model, assembly.fc_ghz, label,
        metadata={"material": assembly.material.name},
    )
    if not reference:
        return pattern
    twin = assembly.squint_free(eval_model)
    if twin == assembly:
        return pattern.with_reference(pattern)
    return pattern.with_reference(lens_pattern(twin, eval_model, theta, ray_count, label))


# --- Commutation de sources ---------------------------------------------------


def peak_direction(assembly: LensAssembly, f_ghz: float, eval_model: EvalModel = EvalModel.EM2,
                   ray_count: Optional[int] = None) -> float:
    """Direction du pic (degrés): grille grossière puis fenêtre fine autour du maximum"""
    coarse = theta_grid(_COARSE_STEP_DEG)
    power = lens_far_field(assembly, f_ghz, coarse, eval_model, ray_count)
    center = float(coarse[int(np.argmax(power))])
    fine = np.clip(
        center + _FINE_STEP_DEG * np.arange(-2 * int(_COARSE_STEP_DEG / _FINE_STEP_DEG),
                                             2 * int(_COARSE_STEP_DEG / _FINE_STEP_DEG) + 1),
        -90.0, 90.0,
    )
    power = lens_far_field(assembly, f_ghz, fine, eval_model, ray_count)
    i = int(np.argmax(power))
    if i == 0 or i == fine.size - 1:
        return float(fine[i])
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(power[i - 1:i + 2])
    return parabola_vertex(fine[i - 1:i + 2], db)[0]


def _scan_limit(assembly: LensAssembly, pointing) -> Tuple[float, float]:
    """Plus grand décalage du plan focal traçable sans perte excessive, et sa direction"""
    s_max = assembly.max_offset
    for _ in range(20):
        if s_max <= 0:
            break
        try:
            return s_max, pointing(s_max)
        except LensGeometryError:
            s_max *= 0.9
    return 0.0, 0.0


@dataclass(frozen=True)
class BeamSolution:
    target_deg: float
    offset: float
    achieved_deg: float

    @property
    def residual_deg(self) -> float:
        return abs(self.achieved_deg - self.target_deg)


def solve_feed_offset(assembly: LensAssembly, target_deg: float,
                      ray_count: Optional[int] = None) -> BeamSolution:
    """
    Décalage de source dont le pic à fc vise target_deg (bissection)

    Args:
        assembly: Lentille et plan focal
        target_deg: AoD visé à fc, en degrés (signe conservé)
        ray_count: Nombre de rayons par tracé

    Returns:
        BeamSolution (décalage en mètres, angle atteint)

    Raises:
        ScanRangeError: L'AoD dépasse le balayage atteignable
    """
    def pointing(offset: float) -> float:
        return peak_direction(assembly.with_offset(offset), assembly.fc_ghz, ray_count=ray_count)

    if target_deg == 0:
        return BeamSolution(0.0, 0.0, pointing(0.0))
    sign = 1.0 if target_deg > 0 else -1.0
    target = abs(target_deg)

    def residual(offset: float) -> float:
        return pointing(offset) - target

    s_max, reach = _scan_limit(assembly, pointing)
    if reach < target:
        raise ScanRangeError(target_deg, reach)

    offset = brentq(residual, 0.0, s_max, xtol=1e-9 * assembly.focal_length, maxiter=100)
    achieved = residual(offset) + target
    solution = BeamSolution(target_deg, sign * offset, sign * achieved)
    if solution.residual_deg >= BEAM_RESIDUAL_DEG:
        logger.warning(
            "Faisceau %.2f°: résidu %.3f° au-delà de la tolérance", target_deg, solution.residual_deg
        )
    logger.debug("Faisceau %.2f° -> offset %.6f m (atteint %.4f°)", target_deg, solution.offset, achieved)
    return solution


def switched_beam_table(assembly: LensAssembly, targets: Sequence[float],
                        ray_count: Optional[int] = None) -> List[float]:
    """Décalage de source (mètres) pour chaque AoD cible"""
    return [solve_feed_offset(assembly, t, ray_count).offset for t in targets]
