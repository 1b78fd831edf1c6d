"""
Application principale
Point d'entrée de la CLI du simulateur de beam squint
"""
import argparse
import logging
import sys
from typing import List, Optional

from app.commands import materials, pattern, sls, squint
from app.config import configure_logging, settings
from app.exceptions import SimulatorError

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="squint-bench",
        description=settings.app_name,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for module in (squint, sls, materials, pattern):
        module.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Exécute une sous-commande; les erreurs du simulateur deviennent des codes de sortie"""
    args = build_parser().parse_args(argv)
    configure_logging("DEBUG" if args.verbose else None)
    if args.threads is not None and args.threads < 1:
        print("Erreur: --threads doit être >= 1", file=sys.stderr)
        return 2

    try:
        return args.handler(args)
    except SimulatorError as e:
        logger.debug("Échec de %s", args.command, exc_info=True)
        print(f"Erreur: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception("Erreur interne pendant %s", args.command)
        print(f"Erreur interne: {e if settings.debug else type(e).__name__}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
