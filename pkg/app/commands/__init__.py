"""
Sous-commandes de la CLI
Chaque module expose register(subparsers) et des handlers renvoyant un code de sortie
"""
import argparse
import logging
import sys
from pathlib import Path

from app.config import get_settings
from app.exceptions import ConfigError
from app.services.exporter import canonical_json
from app.services.scenarios import RunOutcome, ScenarioService, load_scenario, scenario_service

logger = logging.getLogger(__name__)


def common_options() -> argparse.ArgumentParser:
    """Options partagées par toutes les sous-commandes"""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=Path, help="Fichier scénario JSON ou identifiant embarqué")
    parser.add_argument("--out", type=Path, help="Répertoire de sortie (remplace outputs.directory)")
    parser.add_argument("--seed", type=int, default=0, help="Réservé: tous les calculs sont déterministes")
    parser.add_argument("--threads", type=int, default=None, help="Nombre de threads de calcul")
    parser.add_argument("--json", action="store_true", help="Résumé JSON sur la sortie standard")
    parser.add_argument("-v", "--verbose", action="store_true", help="Logs de niveau DEBUG")
    return parser


def scenario_from(args):
    if args.config is None:
        raise ConfigError("Option manquante", ["--config: un fichier scénario est requis"])
    return load_scenario(args.config)


def service_from(args) -> ScenarioService:
    """Service global, réglé sur le nombre de threads demandé"""
    scenario_service.threads = args.threads or get_settings().threads
    return scenario_service


def emit(outcome: RunOutcome, args, table: str) -> int:
    """Affiche le résumé (JSON) ou la table principale, puis la liste des fichiers écrits"""
    if args.json:
        sys.stdout.write(canonical_json({
            "summary": outcome.summary,
            "files": [str(p) for p in outcome.files],
        }))
    else:
        frame = outcome.tables.get(table)
        if frame is not None:
            sys.stdout.write(frame.to_string(index=False, float_format=lambda v: f"{v:.4f}") + "\n")
        for path in outcome.files:
            logger.info("-> %s", path)
    return 0
