"""
Sous-commandes squint-table et gain-ratio
"""
from app.commands import common_options, emit, scenario_from, service_from


def squint_table(args) -> int:
    """Tableaux AD/PD (une ligne par AoD, une colonne par fréquence) et rapport complet"""
    outcome = service_from(args).run_squint_table(scenario_from(args), args.out)
    return emit(outcome, args, "squint_report")


def gain_ratio(args) -> int:
    """Courbes de ratio de gain BF le long de la bande"""
    outcome = service_from(args).run_gain_ratio(scenario_from(args), args.out)
    return emit(outcome, args, "gain_ratio")


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "squint-table", parents=[common_options()],
        help="Angle distortion, power difference, HPBW et ratio de gain par AoD et fréquence",
    )
    parser.set_defaults(handler=squint_table)

    parser = subparsers.add_parser(
        "gain-ratio", parents=[common_options()],
        help="Ratio de gain BF en fonction de la fréquence",
    )
    parser.set_defaults(handler=gain_ratio)
