"""
Service d'écriture des résultats
CSV et JSON reproductibles octet par octet, figures SVG et manifeste SHA-256
"""
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from app.config import settings  # noqa: E402
from app.models.schemas import OutputFormat  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.6f"
MANIFEST_NAME = "manifest.json"

plt.rcParams["svg.hashsalt"] = "squint-bench"
plt.rcParams["svg.fonttype"] = "none"


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _finite(obj: Any) -> Any:
    """Remplace les flottants non finis par None (JSON strict)"""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(_finite(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


class ResultWriter:
    """Écrit les fichiers d'une exécution dans un répertoire unique, dans l'ordre des appels"""

    def __init__(self, directory: Path, formats: Iterable[OutputFormat]):
        self.directory = Path(directory)
        self.formats = set(formats)
        self.files: List[Path] = []

    def wants(self, fmt: OutputFormat) -> bool:
        return fmt in self.formats

    def _target(self, name: str, suffix: str) -> Path:
        """Chemin de sortie; name peut contenir un sous-répertoire (label/fichier)"""
        path = self.directory / f"{name}.{suffix}"
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _register(self, path: Path) -> Path:
        self.files.append(path)
        logger.info("Écrit %s", path)
        return path

    def write_frame(self, name: str, frame: pd.DataFrame) -> Optional[Path]:
        if not self.wants(OutputFormat.CSV):
            return None
        path = self._target(name, "csv")
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return self._register(path)

    def write_json(self, name: str, payload: Any, force: bool = False) -> Optional[Path]:
        if not (force or self.wants(OutputFormat.JSON)):
            return None
        path = self._target(name, "json")
        path.write_text(canonical_json(payload), encoding="utf-8")
        return self._register(path)

    def write_figure(self, name: str, figure) -> Optional[Path]:
        if not self.wants(OutputFormat.SVG):
            plt.close(figure)
            return None
        path = self._target(name, "svg")
        figure.savefig(path, format="svg", metadata={"Date": None})
        plt.close(figure)
        return self._register(path)

    def write_manifest(self, config_path: Optional[Path], data_files: Iterable[Path]) -> Path:
        """Empreintes de la configuration, des données embarquées et des fichiers émis"""
        data_root = Path(settings.data_directory)
        manifest: Dict[str, Any] = {
            "code_version": settings.app_version,
            "config": None,
            "data": {},
            "outputs": {p.relative_to(self.directory).as_posix(): sha256_file(p) for p in self.files},
        }
        if config_path is not None:
            manifest["config"] = {"file": Path(config_path).name, "sha256": sha256_file(config_path)}
        for path in sorted(set(Path(p) for p in data_files)):
            try:
                key = path.resolve().relative_to(data_root.resolve()).as_posix()
            except ValueError:
                key = path.name
            manifest["data"][key] = sha256_file(path)

        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / MANIFEST_NAME
        path.write_text(canonical_json(manifest), encoding="utf-8")
        logger.info("Manifeste %s (%d sorties)", path, len(self.files))
        self.files.append(path)
        return path


def gain_ratio_figure(curves: pd.DataFrame):
    """Courbes de ratio de gain en fonction de la fréquence (EM1 plein, EM2 tirets)"""
    figure, ax = plt.subplots(figsize=(6.4, 4.0))
    for (antenna, eval_model, style), curve in curves.groupby(["antenna", "eval_model", "line_style"], sort=True):
        ax.plot(
            curve["freq_ghz"], curve["bf_gain_ratio_pct"],
            linestyle="-" if style == "solid" else "--",
            marker="o", label=f"{antenna} {eval_model}",
        )
    ax.set_xlabel("Fréquence [GHz]")
    ax.set_ylabel("Ratio de gain BF [%]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    figure.tight_layout()
    return figure


def se_cdf_figure(cdfs: pd.DataFrame):
    """Fonctions de répartition de l'efficacité spectrale"""
    figure, ax = plt.subplots(figsize=(6.4, 4.0))
    for (antenna, eval_model, curve_name), curve in cdfs.groupby(["antenna", "eval_model", "curve"], sort=True):
        ax.plot(
            curve["se_bits"], curve["cdf"],
            linestyle="-" if curve_name == "squint" else ":",
            label=f"{antenna} {eval_model} {curve_name}",
        )
    ax.set_xlabel("Efficacité spectrale [bit/s/Hz]")
    ax.set_ylabel("CDF")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    figure.tight_layout()
    return figure
