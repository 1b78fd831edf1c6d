"""
Sous-commande materials
"""
import sys

import pandas as pd

from app.commands import common_options
from app.services.exporter import canonical_json
from app.services.scenarios import describe_materials


def materials(args) -> int:
    """Liste des matériaux embarqués avec leur dispersion sur la bande"""
    listing = describe_materials((args.band_low, args.band_high))
    if args.json:
        sys.stdout.write(canonical_json(listing))
        return 0
    frame = pd.DataFrame([
        {
            "material": entry["material"]["name"],
            "kind": entry["material"]["kind"],
            "band_ghz": "{:g}-{:g}".format(*entry["material"]["band_ghz"]),
            "eps_r_center": entry["eps_r_center"],
            "spread_pct": entry["spread_pct"],
            "tan_delta_max": entry["tan_delta_max"],
        }
        for entry in listing
    ])
    sys.stdout.write(frame.to_string(index=False) + "\n")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "materials", parents=[common_options()],
        help="Matériaux diélectriques embarqués",
    )
    parser.add_argument("--band-low", type=float, default=27.0, help="Bas de bande (GHz)")
    parser.add_argument("--band-high", type=float, default=30.0, help="Haut de bande (GHz)")
    parser.set_defaults(handler=materials)
