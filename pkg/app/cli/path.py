"""``path``: solve a decoding path for target rates and export its ESE curves."""
from __future__ import annotations

import pandas as pd

from app.cli.common import RunContext, parse_floats, parse_template
from app.core.errors import ConfigError
from app.models.path import PathSolveSpec
from app.services import charts
from app.services.pathfinder import scm_layer_split, solve_path_for_rates
from app.services.rates import user_rates_closed_form
from app.services.transfer import ese_transfer_on_path


def register(subparsers) -> None:
    p = subparsers.add_parser("path", help="decoding path achieving target rates")
    p.add_argument("--target", help="target rates R1,R2,... in bpcu (default: preset target)")
    p.add_argument("--template", help="JSON rows of fixed numbers and null (free); inline or file")
    p.add_argument("--anchor", help="starting guess for the free coordinates, row-major")
    p.add_argument("--max-starts", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--layer-power", type=float, help="also split users into equal-power layers")
    p.add_argument("--samples", type=int, default=64, help="ESE samples per path segment")
    p.set_defaults(handler=run)


def run(ctx: RunContext) -> int:
    args = ctx.args
    cfg = ctx.siso()
    sc = ctx.scenario()
    target = parse_floats("--target", args.target) if args.target else (sc.target if sc else None)
    if target is None:
        raise ConfigError("--target", "is required without a preset")
    template = parse_template(args.template) if args.template else (sc.template if sc else None)
    anchor = parse_floats("--anchor", args.anchor) if args.anchor else (sc.anchor if sc and not args.template else None)

    spec = PathSolveSpec(target=target, template=template, anchor=anchor, tol=args.tol,
                         max_starts=args.max_starts, seed=ctx.seed)
    path = solve_path_for_rates(cfg, spec, threads=ctx.threads)
    report = user_rates_closed_form(cfg, path)

    ctx.write_json("path.json", {"breakpoints": [list(x) for x in path.breakpoints],
                                 "rates_bpcu": list(report.rates), "target_bpcu": list(target)})
    ctx.write_csv("rates.csv", report.to_frame())
    ese = pd.concat([ese_transfer_on_path(cfg, path, k).sample(args.samples) for k in range(cfg.K)],
                    ignore_index=True)
    ctx.write_csv("ese_transfer.csv", ese)
    for k in range(cfg.K):
        ctx.plot(charts.transfer_panel, ese, None, k + 1)

    if args.layer_power is not None:
        split = scm_layer_split(cfg, path, args.layer_power)
        ctx.write_json("scm_split.json", {
            "layers": list(split.layers),
            "owner": [o + 1 for o in split.owner],
            "layer_power": args.layer_power,
            "breakpoints": [list(x) for x in split.path.breakpoints],
        })
    return 0
