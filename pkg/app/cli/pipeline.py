"""``pipeline``: target rates in, matched profiles, DE threshold and optional BER out."""
from __future__ import annotations

import pandas as pd

from app.cli.common import RunContext, parse_eta, parse_floats, parse_template
from app.core.errors import ConfigError
from app.models.profile import OptimizerSettings, parse_degree_set
from app.models.system import RateTuple
from app.services.pipeline import PipelineRequest, plan, run_full_pipeline
from app.services.rates import in_capacity_region, require_inside
from app.services.simlink import LinkSettings


def register(subparsers) -> None:
    p = subparsers.add_parser("pipeline", help="end-to-end design flow for a target rate tuple")
    p.add_argument("--target", help="target rates R1,R2,... in bpcu (default: preset target)")
    p.add_argument("--path", help="skip the path solve and use this breakpoint file")
    p.add_argument("--template", help="path template JSON (inline or file)")
    p.add_argument("--degrees", help="variable degree set")
    p.add_argument("--eta-per-user", help="one check degree per user, e.g. 3,4,5")
    p.add_argument("--max-trials", type=int)
    p.add_argument("--layer-power", type=float)
    p.add_argument("--simulate-snr", help="comma-separated SNR_sum points (dB) to simulate after design")
    p.add_argument("--n", type=int, help="block length for the optional simulation")
    p.add_argument("--dry-run", action="store_true", help="print the plan and exit")
    p.set_defaults(handler=run)


def _request(ctx: RunContext) -> PipelineRequest:
    args, s = ctx.args, ctx.settings
    cfg = ctx.siso()
    sc = ctx.scenario()
    target = parse_floats("--target", args.target) if args.target else (sc.target if sc else None)
    if target is None:
        raise ConfigError("--target", "is required without a preset")
    path = ctx.path_for(cfg.K, args.path) if args.path else None
    template = parse_template(args.template) if args.template else (sc.template if sc and not args.target else None)
    anchor = sc.anchor if sc and template is sc.template else None
    degrees = args.degrees or (sc.degrees if sc else None)
    settings = OptimizerSettings(
        degrees=parse_degree_set(degrees) if degrees else OptimizerSettings().degrees,
        max_trials=args.max_trials or s.MAX_TRIALS,
        stop_eps=s.STOP_EPS,
        lp_margin=s.LP_MARGIN,
        rho_points=s.RHO_POINTS,
        iev_points=s.IEV_POINTS,
    )
    eta = parse_eta("--eta-per-user", args.eta_per_user) if args.eta_per_user else (sc.eta if sc else None)
    if eta is not None and len(eta) != cfg.K:
        raise ConfigError("--eta-per-user", f"needs {cfg.K} entries")
    layer_power = args.layer_power if args.layer_power is not None else (sc.layer_power if sc else None)
    return PipelineRequest(
        config=cfg,
        target=target,
        settings=settings,
        eta=eta,
        path=path,
        template=template,
        anchor=anchor,
        layer_power=layer_power,
        simulate_snr_db=parse_floats("--simulate-snr", args.simulate_snr) if args.simulate_snr else (),
        block_length=args.n or s.BLOCK_LENGTH,
        link=LinkSettings(block_budget=s.BLOCK_BUDGET, target_errors=s.TARGET_ERRORS, max_outer=s.MAX_OUTER,
                          clip=s.CLIP_LLR),
        threads=ctx.threads,
    )


def run(ctx: RunContext) -> int:
    req = _request(ctx)
    if ctx.args.dry_run:
        steps = plan(req)
        for i, step in enumerate(steps, start=1):
            print(f"{i}. {step}")
        ctx.write_json("plan.json", steps)
        return 0

    region = in_capacity_region(req.config, RateTuple(rates=req.target))
    ctx.write_csv("region.csv", region.to_frame())
    require_inside(region)

    result = run_full_pipeline(req)
    ctx.write_json("path.json", {"breakpoints": [list(x) for x in result.path.breakpoints]})
    ctx.write_json("profiles.json", {"profiles": [
        {**p.model_dump(mode="json"), "user": p.user + 1} for p in result.profiles
    ]})
    ctx.write_csv("rates.csv", pd.DataFrame([
        {"user": k + 1, "target_bpcu": req.target[k], "path_rate_bpcu": result.rates.rates[k],
         "optimized_rate_bpcu": p.rate_bpcu, "code_rate": p.code_rate, "converged": p.converged}
        for k, p in enumerate(result.profiles)
    ]))
    ctx.write_json("summary.json", result.summary())
    if result.links:
        ctx.write_csv("ber.csv", pd.concat([r.to_frame() for r in result.links], ignore_index=True))
    return 0
