"""
Sous-commandes sls et link
"""
from app.commands import common_options, emit, scenario_from, service_from


def sls(args) -> int:
    """Simulation système sur la carte du scénario"""
    outcome = service_from(args).run_sls(scenario_from(args), args.out)
    return emit(outcome, args, "sls_summary")


def link(args) -> int:
    outcome = service_from(args).run_link(scenario_from(args), args.out)
    return emit(outcome, args, "link_report")


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "sls", parents=[common_options()],
        help="Efficacité spectrale avec et sans squint (méthode des images)",
    )
    parser.set_defaults(handler=sls)

    parser = subparsers.add_parser(
        "link", parents=[common_options()],
        help="Liaison directe dans l'axe du faisceau (ratio de puissance reçue)",
    )
    parser.set_defaults(handler=link)
