"""``rates``: per-user rates along a path, region checks, QPSK sweeps."""
from __future__ import annotations

import pandas as pd

from app.cli.common import RunContext, parse_floats, parse_ints
from app.models.system import MimoConfig, RateTuple
from app.services import charts
from app.services.mmse import MmseCurve
from app.services.pathfinder import sic_corner_path
from app.services.rates import (
    in_capacity_region,
    mimo_sum_rate,
    mimo_user_rates,
    qpsk_equal_power_sum_rate,
    sum_rate_capacity,
    user_rates_closed_form,
    user_rates_numeric,
)


def register(subparsers) -> None:
    p = subparsers.add_parser("rates", help="achievable rates along a decoding path")
    p.add_argument("--path", help="JSON breakpoint file (default: preset path or straight line)")
    p.add_argument("--sic", help="SIC decoding order as 1-based users, first decoded first (e.g. 3,2,1)")
    p.add_argument("--method", choices=["closed", "numeric"], default="closed",
                   help="closed-form Gaussian or quadrature with the configured alphabet")
    p.add_argument("--check-region", metavar="R1,R2,...", help="also test a rate tuple against the region")
    p.add_argument("--qpsk-sweep", action="store_true", help="equal-power QPSK sum rate over K and SNR")
    p.add_argument("--sweep-k", default="1,2,4,8,16")
    p.add_argument("--sweep-snr", default="0")
    p.set_defaults(handler=run)


def run(ctx: RunContext) -> int:
    args = ctx.args
    if args.qpsk_sweep:
        ks = parse_ints("--sweep-k", args.sweep_k)
        snrs = parse_floats("--sweep-snr", args.sweep_snr)
        sweep = pd.DataFrame(
            [{"K": K, "snr_dB": s, "sum_rate_bpcu": qpsk_equal_power_sum_rate(K, s)} for s in snrs for K in ks]
        )
        ctx.write_csv("qpsk_sweep.csv", sweep)
        ctx.plot(charts.qpsk_sweep_panel, sweep)
        if not (args.config or args.preset):
            return 0

    cfg = ctx.system()
    if isinstance(cfg, MimoConfig):
        path = ctx.path_for(cfg.K, args.path)
        report = mimo_user_rates(cfg, path)
        ctx.write_csv("rates.csv", report.to_frame())
        ctx.write_json("rates.json", {**report.model_dump(mode="json"), "log_det_sum_rate": mimo_sum_rate(cfg)})
        return 0

    if args.sic:
        order = tuple(u - 1 for u in parse_ints("--sic", args.sic))
        path = sic_corner_path(cfg.K, order)
    else:
        path = ctx.path_for(cfg.K, args.path)
    if args.method == "closed":
        report = user_rates_closed_form(cfg, path)
    else:
        report = user_rates_numeric(cfg, path, MmseCurve.for_modulation(cfg.modulation))
    ctx.write_csv("rates.csv", report.to_frame())
    ctx.write_json("rates.json", {**report.model_dump(mode="json"), "capacity_bpcu": sum_rate_capacity(cfg)})

    if args.check_region:
        region = in_capacity_region(cfg, RateTuple(rates=parse_floats("--check-region", args.check_region)))
        ctx.write_csv("region.csv", region.to_frame())
        ctx.write_json("region.json", {"inside": region.inside, "on_dominant_face": region.on_dominant_face,
                                       "binding": [c.label for c in region.binding]})
    return 0
