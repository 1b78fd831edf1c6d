"""
Service des scénarios
Chargement et validation des fichiers scénario, exécution des expériences
(tableau de squint, courbes de ratio de gain, simulation système, liaison,
matériaux, diagramme) et émission des résultats
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.config import settings
from app.exceptions import ConfigError, ContractViolation, MaterialNotFoundError
from app.models.schemas import (
    AntennaKind,
    AntennaSection,
    EvalModel,
    Mechanism,
    OutputFormat,
    Scenario,
)
from app.services.beampattern import BeamPattern, pattern_freqs, phased_pattern, theta_grid
from app.services.exporter import ResultWriter, gain_ratio_figure, se_cdf_figure
from app.services.lens import LensAssembly, build_assembly, lens_pattern, solve_feed_offset
from app.services.materials import material_library
from app.services.metrics import (
    angle_distortion,
    bf_gain_ratio,
    causative_factors,
    hpbw,
    power_difference,
    squint_report,
)
from app.services.raytrace import PropagationPath, load_map, received_power, sls_run

logger = logging.getLogger(__name__)

CDF_QUANTILES = 101


def _pointer(loc: Sequence) -> str:
    return "/" + "/".join(str(part) for part in loc)


@dataclass(frozen=True)
class LoadedScenario:
    """Scénario validé, avec son fichier d'origine pour résoudre les chemins relatifs"""

    scenario: Scenario
    path: Optional[Path] = None

    @property
    def base_directory(self) -> Optional[Path]:
        return self.path.parent if self.path else None


def parse_scenario(raw: dict, path: Optional[Path] = None) -> LoadedScenario:
    """Valide un scénario; chaque erreur est rapportée avec le chemin JSON du champ"""
    try:
        scenario = Scenario.model_validate(raw)
    except ValidationError as e:
        diagnostics = [f"{_pointer(err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError(f"Scénario invalide{f': {path}' if path else ''}", diagnostics) from e

    loaded = LoadedScenario(scenario, path)
    _check_references(loaded)
    return loaded


def load_scenario(path) -> LoadedScenario:
    """Lit un fichier scénario JSON (chemin, ou identifiant d'un scénario embarqué)"""
    path = Path(path)
    if not path.suffix and not path.exists():
        path = settings.scenarios_directory / f"{path.name}.json"
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Impossible de lire le scénario {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON invalide dans {path}", [f"ligne {e.lineno}, colonne {e.colno}: {e.msg}"]) from e
    if not isinstance(raw, dict):
        raise ConfigError(f"Scénario invalide: {path}", ["/: un objet JSON est attendu"])
    return parse_scenario(raw, path)


def _check_references(loaded: LoadedScenario) -> None:
    diagnostics = []
    for i, antenna in enumerate(loaded.scenario.antennas):
        if antenna.lens is None:
            continue
        try:
            material = material_library.resolve(antenna.lens.material, loaded.base_directory)
        except (MaterialNotFoundError, ConfigError) as e:
            diagnostics.append(f"/antennas/{i}/lens/material: {e}")
            continue
        lo, hi = material.band_ghz
        freqs = pattern_freqs(antenna.array.band_ghz, antenna.array.fc_ghz)
        if freqs[0] < lo or freqs[-1] > hi:
            diagnostics.append(
                f"/antennas/{i}/lens/material: bande du matériau [{lo:g}, {hi:g}] GHz "
                f"ne couvre pas [{freqs[0]:g}, {freqs[-1]:g}] GHz"
            )
    sls = loaded.scenario.sls
    if sls is not None:
        try:
            load_map(sls.map, loaded.base_directory)
        except ConfigError as e:
            diagnostics.append(f"/sls/map: {e}")
    if diagnostics:
        raise ConfigError("Références invalides dans le scénario", diagnostics)


def referenced_data_files(loaded: LoadedScenario) -> List[Path]:
    """Fichiers de données utilisés par le scénario (pour le manifeste)"""
    files = []
    for antenna in loaded.scenario.antennas:
        if antenna.lens is not None:
            files.append(_data_path(antenna.lens.material, settings.materials_directory, loaded.base_directory))
    if loaded.scenario.sls is not None:
        files.append(_data_path(loaded.scenario.sls.map, settings.maps_directory, loaded.base_directory))
    return [f for f in files if f.is_file()]


def _data_path(reference: str, bundled: Path, base_directory: Optional[Path]) -> Path:
    if reference.endswith(".json"):
        path = Path(reference)
        return path if path.is_absolute() or base_directory is None else base_directory / path
    return bundled / f"{reference}.json"


@dataclass
class RunOutcome:
    """Résultat d'une sous-commande: fichiers écrits et tables produites"""

    files: List[Path] = field(default_factory=list)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _ordered_map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class ScenarioService:
    """Exécute les expériences décrites par un scénario"""

    def __init__(self, threads: Optional[int] = None):
        self.threads = threads or settings.threads
        self._assemblies: Dict[str, LensAssembly] = {}
        self._offsets: Dict[tuple, float] = {}

    # --- construction des diagrammes -------------------------------------------

    def _theta(self, scenario: Scenario) -> np.ndarray:
        return theta_grid(scenario.numerics.theta_step_deg or settings.theta_step_deg)

    def _ray_count(self, scenario: Scenario) -> int:
        return scenario.numerics.ray_count or settings.lens_ray_count

    def _lens_key(self, loaded: LoadedScenario, antenna: AntennaSection) -> str:
        return f"{loaded.base_directory}:{antenna.model_dump_json()}"

    def assembly(self, loaded: LoadedScenario, antenna: AntennaSection) -> LensAssembly:
        key = self._lens_key(loaded, antenna)
        if key not in self._assemblies:
            self._assemblies[key] = build_assembly(antenna, loaded.base_directory)
        return self._assemblies[key]

    def patterns(
        self,
        loaded: LoadedScenario,
        antenna: AntennaSection,
        eval_model: EvalModel,
        aods: Sequence[float],
        reference: bool = False,
    ) -> List[BeamPattern]:
        """Un diagramme par AoD, dans l'ordre des AoD, avec sa référence sans squint si demandée"""
        scenario = loaded.scenario
        theta = self._theta(scenario)

        if antenna.kind is AntennaKind.LENS:
            assembly = self.assembly(loaded, antenna)
            ray_count = self._ray_count(scenario)

            def build(aod: float) -> BeamPattern:
                key = (self._lens_key(loaded, antenna), ray_count, aod)
                if key not in self._offsets:
                    self._offsets[key] = solve_feed_offset(assembly, aod, ray_count).offset
                steered = assembly.with_offset(self._offsets[key], aod)
                return lens_pattern(steered, eval_model, theta, ray_count, antenna.name, reference)
        else:
            mechanism = Mechanism.TTD if antenna.kind is AntennaKind.TTD else Mechanism.PHASE

            def build(aod: float) -> BeamPattern:
                return phased_pattern(antenna.array, mechanism, aod, eval_model, theta, antenna.name, reference)

        return _ordered_map(build, list(aods), self.threads)

    # --- sous-commandes -------------------------------------------------------

    def _writer(self, loaded: LoadedScenario, out_dir: Optional[Path]) -> ResultWriter:
        directory = Path(out_dir) if out_dir else Path(loaded.scenario.outputs.directory)
        return ResultWriter(directory, loaded.scenario.outputs.formats)

    def _finish(self, loaded: LoadedScenario, writer: ResultWriter, outcome: RunOutcome) -> RunOutcome:
        writer.write_manifest(loaded.path, referenced_data_files(loaded))
        outcome.files = list(writer.files)
        return outcome

    def run_squint_table(self, loaded: LoadedScenario, out_dir: Optional[Path] = None) -> RunOutcome:
        """Tableaux AD/PD/HPBW/ratio par (antenne, modèle, AoD, fréquence)"""
        scenario = loaded.scenario
        writer = self._writer(loaded, out_dir)
        outcome = RunOutcome()
        frames, factors = [], []

        for antenna in scenario.antennas:
            reports = {}
            for eval_model in scenario.eval_models:
                patterns = self.patterns(loaded, antenna, eval_model, scenario.aods_deg, reference=True)
                report = squint_report(patterns, antenna.kind, antenna.array.band_ghz, antenna.name)
                reports[eval_model] = report
                frames.append(report.to_frame())
                for metric in ("ad_deg", "pd_db"):
                    name = f"{antenna.name}_{eval_model.value}_{metric.split('_')[0]}"
                    outcome.tables[name] = report.pivot(metric)
                    writer.write_frame(name, outcome.tables[name])
            if EvalModel.EM1 in reports and EvalModel.EM2 in reports:
                factors.append(causative_factors(reports[EvalModel.EM1], reports[EvalModel.EM2]))

        outcome.tables["squint_report"] = pd.concat(frames, ignore_index=True)
        writer.write_frame("squint_report", outcome.tables["squint_report"])
        if factors:
            outcome.tables["causative_factors"] = pd.concat(factors, ignore_index=True)
            writer.write_frame("causative_factors", outcome.tables["causative_factors"])
        outcome.summary = {
            "scenario": scenario.name,
            "cells": int(len(outcome.tables["squint_report"])),
            "worst": [
                {
                    "antenna": a, "eval_model": em,
                    "max_abs_ad_deg": float(g["ad_deg"].abs().max()),
                    "max_abs_pd_db": float(g["pd_db"].abs().max()),
                    "min_bf_gain_ratio_pct": float(g["bf_gain_ratio_pct"].min()),
                }
                for (a, em), g in outcome.tables["squint_report"].groupby(["antenna", "eval_model"], sort=False)
            ],
        }
        writer.write_json("squint_report", {
            "summary": outcome.summary,
            "cells": outcome.tables["squint_report"].to_dict(orient="records"),
        })
        return self._finish(loaded, writer, outcome)

    def run_gain_ratio(self, loaded: LoadedScenario, out_dir: Optional[Path] = None) -> RunOutcome:
        """Ratio de gain BF en fonction de la fréquence, une courbe par (antenne, modèle, AoD)"""
        scenario = loaded.scenario
        writer = self._writer(loaded, out_dir)
        outcome = RunOutcome()
        rows = []
        for antenna in scenario.antennas:
            freqs = pattern_freqs(antenna.array.band_ghz, antenna.array.fc_ghz)
            for eval_model in scenario.eval_models:
                style = "solid" if eval_model is EvalModel.EM1 else "dashed"
                for pattern in self.patterns(loaded, antenna, eval_model, scenario.aods_deg):
                    for f in freqs:
                        rows.append({
                            "antenna": antenna.name,
                            "eval_model": eval_model.value,
                            "line_style": style,
                            "aod_deg": pattern.steering.aod_deg,
                            "freq_ghz": f,
                            "bf_gain_ratio_pct": bf_gain_ratio(pattern, f),
                        })
        curves = pd.DataFrame(rows)
        outcome.tables["gain_ratio"] = curves
        writer.write_frame("gain_ratio", curves)
        widest = max(scenario.aods_deg, key=abs)
        writer.write_figure("gain_ratio", gain_ratio_figure(curves[curves["aod_deg"] == widest]))
        outcome.summary = {
            "scenario": scenario.name,
            "min_ratio_pct": {
                f"{a}/{em}": float(g["bf_gain_ratio_pct"].min())
                for (a, em), g in curves.groupby(["antenna", "eval_model"], sort=False)
            },
        }
        writer.write_json("gain_ratio", {"summary": outcome.summary, "curves": rows})
        return self._finish(loaded, writer, outcome)

    def run_sls(self, loaded: LoadedScenario, out_dir: Optional[Path] = None) -> RunOutcome:
        """
        Simulation système: efficacité spectrale avec et sans squint sur la carte

        Chaque faisceau porte son diagramme sans squint, qui sert de référence
        à toutes les fréquences.

        Args:
            loaded: Scénario validé, avec une section sls
            out_dir: Répertoire de sortie (par défaut outputs.directory)

        Returns:
            RunOutcome avec une table par (antenne, modèle), la CDF et le résumé

        Raises:
            ConfigError: La section sls est absente
        """
        scenario = loaded.scenario
        sls = scenario.sls
        if sls is None:
            raise ConfigError("Section manquante", ["/sls: requise pour la sous-commande sls"])
        indoor_map = load_map(sls.map, loaded.base_directory)
        beams = [float(a) for a in np.linspace(sls.beam_span_deg[0], sls.beam_span_deg[1], sls.beam_count)]
        writer = self._writer(loaded, out_dir)
        outcome = RunOutcome()
        summaries, cdfs = [], []

        for antenna in scenario.antennas:
            for eval_model in scenario.eval_models:
                patterns = self.patterns(loaded, antenna, eval_model, beams, reference=True)
                result = sls_run(
                    indoor_map, patterns, sls, antenna.array.band_ghz,
                    antenna=antenna.name, threads=self.threads,
                )
                name = f"sls_{antenna.name}_{eval_model.value}"
                outcome.tables[name] = result.records
                writer.write_frame(name, result.records)
                summaries.append(result.summary())
                for curve, column in (("squint", "se_squint"), ("baseline", "se_baseline")):
                    cdf = result.cdf(column)
                    cdf.insert(0, "curve", curve)
                    cdf.insert(0, "eval_model", eval_model.value)
                    cdf.insert(0, "antenna", antenna.name)
                    cdfs.append(cdf)

        outcome.tables["sls_summary"] = pd.DataFrame(summaries)
        cdf_frame = pd.concat(cdfs, ignore_index=True)
        outcome.tables["sls_cdf"] = cdf_frame
        writer.write_frame("sls_cdf", cdf_frame)
        writer.write_figure("sls_cdf", se_cdf_figure(cdf_frame))

        quantiles = np.linspace(0.0, 1.0, CDF_QUANTILES)
        outcome.summary = {
            "scenario": scenario.name,
            "band_ghz": list(scenario.antennas[0].array.band_ghz),
            "results": summaries,
            "cdf_quantiles": quantiles.tolist(),
            "cdf_samples": {
                f"{s['antenna']}/{s['eval_model']}": np.quantile(
                    outcome.tables[f"sls_{s['antenna']}_{s['eval_model']}"]["se_squint"], quantiles
                ).tolist()
                for s in summaries
            },
        }
        writer.write_json("sls_summary", outcome.summary, force=True)
        return self._finish(loaded, writer, outcome)

    def run_link(self, loaded: LoadedScenario, out_dir: Optional[Path] = None) -> RunOutcome:
        """
        Liaison directe dans l'axe du faisceau à fc: métriques et ratio de puissance reçue

        Args:
            loaded: Scénario validé, avec une section link
            out_dir: Répertoire de sortie (par défaut outputs.directory)

        Returns:
            RunOutcome avec la table link_report, une ligne par (antenne, modèle, fréquence)

        Raises:
            ConfigError: La section link est absente
        """
        scenario = loaded.scenario
        link = scenario.link
        if link is None:
            raise ConfigError("Section manquante", ["/link: requise pour la sous-commande link"])
        writer = self._writer(loaded, out_dir)
        outcome = RunOutcome()
        rows = []

        for antenna in scenario.antennas:
            for eval_model in scenario.eval_models:
                pattern = self.patterns(loaded, antenna, eval_model, [link.aod_deg], reference=True)[0]
                theta_rx = pattern.peak(pattern.fc_ghz)[0]
                path = PropagationPath(
                    vertices=((0.0, 0.0), (link.distance_m, 0.0)),
                    length=link.distance_m,
                    reflections=0,
                    departure_angle=theta_rx,
                    loss_db=0.0,
                )
                freqs = pattern_freqs(antenna.array.band_ghz, antenna.array.fc_ghz)
                for f in freqs:
                    squinted = received_power([path], pattern, f, link.tx_power_dbm, link.rx_gain_dbi)
                    baseline = received_power(
                        [path], pattern.reference, f, link.tx_power_dbm, link.rx_gain_dbi
                    )
                    rows.append({
                        "antenna": antenna.name,
                        "eval_model": eval_model.value,
                        "freq_ghz": f,
                        "ad_deg": angle_distortion(pattern, f),
                        "pd_db": power_difference(pattern, f),
                        "hpbw_deg": hpbw(pattern, f),
                        "received_power_dbm": squinted,
                        "power_ratio_pct": 100.0 * 10 ** ((squinted - baseline) / 10),
                    })

        frame = pd.DataFrame(rows)
        outcome.tables["link_report"] = frame
        writer.write_frame("link_report", frame)
        reported = frame[frame["freq_ghz"].apply(lambda f: any(abs(f - r) < 1e-9 for r in link.report_freqs_ghz))]
        outcome.summary = {
            "scenario": scenario.name,
            "aod_deg": link.aod_deg,
            "distance_m": link.distance_m,
            "reported": reported.to_dict(orient="records"),
        }
        writer.write_json("link_report", outcome.summary)
        return self._finish(loaded, writer, outcome)

    def dump_pattern(
        self,
        loaded: LoadedScenario,
        antenna_label: Optional[str],
        eval_model: EvalModel,
        aod_deg: Optional[float],
        out_dir: Optional[Path] = None,
    ) -> RunOutcome:
        """
        Écrit un BeamPattern complet (une colonne dBi par fréquence)

        Args:
            loaded: Scénario validé
            antenna_label: Antenne à exporter (par défaut la première)
            eval_model: EM1 ou EM2
            aod_deg: AoD visé; à défaut la cible de la lentille, puis le premier AoD du scénario
            out_dir: Répertoire de sortie (par défaut outputs.directory)

        Returns:
            RunOutcome avec la table pattern, écrite sous <antenne>/<mécanisme>_<AoD>deg_<EM>.csv
        """
        scenario = loaded.scenario
        antenna = _select_antenna(scenario, antenna_label)
        writer = self._writer(loaded, out_dir)
        # le diagramme est toujours écrit en CSV
        writer.formats.add(OutputFormat.CSV)
        outcome = RunOutcome()

        if antenna.kind is AntennaKind.LENS and aod_deg is None and antenna.lens.active_feed is not None:
            assembly = self.assembly(loaded, antenna)
            pattern = lens_pattern(
                assembly, eval_model, self._theta(scenario), self._ray_count(scenario), label=antenna.name
            )
        else:
            if aod_deg is None:
                target = antenna.lens.target_aod_deg if antenna.lens else None
                aod_deg = scenario.aods_deg[0] if target is None else target
            pattern = self.patterns(loaded, antenna, eval_model, [aod_deg])[0]

        frame = pattern.to_frame()
        outcome.tables["pattern"] = frame
        writer.write_frame(f"{antenna.name}/{pattern.filename[:-len('.csv')]}", frame)
        outcome.summary = {
            "antenna": antenna.name,
            "eval_model": eval_model.value,
            "aod_deg": pattern.steering.aod_deg,
            "peak_fc": pattern.peak(pattern.fc_ghz),
        }
        return self._finish(loaded, writer, outcome)


def _select_antenna(scenario: Scenario, label: Optional[str]) -> AntennaSection:
    if label is None:
        return scenario.antennas[0]
    for antenna in scenario.antennas:
        if antenna.name == label:
            return antenna
    raise ContractViolation(
        f"Antenne '{label}' absente du scénario; disponibles: {', '.join(scenario.antenna_labels())}"
    )


def describe_materials(band=(27.0, 30.0)) -> List[dict]:
    """Matériaux embarqués avec bande de validité et dispersion sur la bande"""
    return material_library.describe(band)


# Instance globale du service
scenario_service = ScenarioService()
