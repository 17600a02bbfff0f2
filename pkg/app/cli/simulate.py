"""``simulate``: Monte-Carlo BER sweep with trajectory and LLR-histogram capture."""
from __future__ import annotations

import pandas as pd

from app.cli.common import RunContext, parse_floats, parse_ints
from app.models.results import histogram_frame
from app.services import charts
from app.services.ldpc import build_ldpc
from app.services.pathfinder import scm_layer_split
from app.services.simlink import HistogramSpec, LinkSettings, capture_llr_histograms, run_link


def register(subparsers) -> None:
    p = subparsers.add_parser("simulate", help="link-level BER simulation")
    p.add_argument("--profiles", help="profiles JSON (default: preset profiles)")
    p.add_argument("--snr-db", help="comma-separated SNR_sum points in dB (default: the preset's)")
    p.add_argument("--n", type=int, help="block length")
    p.add_argument("--block-budget", type=int)
    p.add_argument("--target-errors", type=int)
    p.add_argument("--max-outer", type=int)
    p.add_argument("--bp-iters", type=int, default=1, help="BP iterations per outer iteration")
    p.add_argument("--frame-average", action="store_true", help="frame-averaged soft variances in the ESE")
    p.add_argument("--layer-power", type=float, help="simulate the equal-power layered system")
    p.add_argument("--hist-user", type=int, help="1-based user whose decoder LLRs are histogrammed")
    p.add_argument("--hist-iters", default="1,2,4,6,8")
    p.add_argument("--bins", type=int, default=200)
    p.set_defaults(handler=run)


def run(ctx: RunContext) -> int:
    args, s = ctx.args, ctx.settings
    cfg = ctx.siso()
    profiles = ctx.profiles_for(cfg, args.profiles)
    sc = ctx.scenario()
    snrs = parse_floats("--snr-db", args.snr_db) if args.snr_db else ((sc.snr_db,) if sc else (0.0,))

    owner, n_users = tuple(range(cfg.K)), cfg.K
    layer_power = args.layer_power if args.layer_power is not None else (sc.layer_power if sc else None)
    if layer_power is not None:
        split = scm_layer_split(cfg, ctx.path_for(cfg.K, None), layer_power)
        owner, cfg = split.owner, split.config
        profiles = [profiles[k] for k in owner]

    n = args.n or s.BLOCK_LENGTH
    codes = [build_ldpc(p, n, seed=ctx.seed, stream=j) for j, p in enumerate(profiles)]
    settings = LinkSettings(
        block_budget=args.block_budget or s.BLOCK_BUDGET,
        target_errors=args.target_errors or s.TARGET_ERRORS,
        max_outer=args.max_outer or s.MAX_OUTER,
        bp_iters=args.bp_iters,
        frame_average=args.frame_average,
        clip=s.CLIP_LLR,
        threads=ctx.threads,
    )
    capture = None
    if args.hist_user is not None:
        capture = HistogramSpec(user=args.hist_user - 1, iterations=parse_ints("--hist-iters", args.hist_iters),
                                bins=args.bins, limit=s.CLIP_LLR)

    runs = [run_link(cfg, codes, snr, settings, owner=owner, n_users=n_users) for snr in snrs]
    ber = pd.concat([r.to_frame() for r in runs], ignore_index=True)
    ctx.write_csv("ber.csv", ber)
    traj = pd.concat([r.trajectory_frame().assign(snr_dB=r.snr_db) for r in runs], ignore_index=True)
    ctx.write_csv("trajectory.csv", traj)
    ctx.plot(charts.ber_panel, ber)
    if capture is not None:
        captured = [(snr, capture_llr_histograms(cfg, codes, snr, capture, settings, owner=owner)) for snr in snrs]
        hist = pd.concat([histogram_frame(h).assign(snr_dB=snr) for snr, h in captured], ignore_index=True)
        ctx.write_csv("llr_hist.csv", hist)
        ctx.write_json("llr_stats.json", [
            {"snr_dB": snr, "iter": h.iteration, "skewness": h.skewness, "normality_pvalue": h.normality_pvalue}
            for snr, hs in captured for h in hs
        ])
        ctx.plot(charts.histogram_panel, histogram_frame(captured[-1][1]))
    return 0
