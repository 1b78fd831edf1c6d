"""
Sous-commande pattern
"""
from app.commands import common_options, emit, scenario_from, service_from
from app.models.schemas import EvalModel


def pattern(args) -> int:
    """Écrit un diagramme complet (theta_deg puis une colonne dBi par fréquence)"""
    outcome = service_from(args).dump_pattern(
        scenario_from(args), args.antenna, EvalModel(args.eval_model), args.aod, args.out
    )
    return emit(outcome, args, "")


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "pattern", parents=[common_options()],
        help="Exporte un BeamPattern en CSV",
    )
    parser.add_argument("--antenna", help="Label de l'antenne (par défaut la première)")
    parser.add_argument("--eval-model", choices=[m.value for m in EvalModel], default=EvalModel.EM1.value)
    parser.add_argument("--aod", type=float, default=None, help="AoD visé (degrés)")
    parser.set_defaults(handler=pattern)
