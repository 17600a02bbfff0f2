"""``optimize``: matched LDPC degree profiles for each user's DEC target."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from app.cli.common import RunContext, parse_eta, parse_users
from app.core.errors import ConfigError
from app.models.profile import OptimizerSettings, parse_degree_set
from app.models.results import OptimizedProfile
from app.services import charts
from app.services.codedesign import optimize_user, rho_grid
from app.services.evolution import measure_dec_transfer
from app.services.mmse import MmseCurve
from app.services.transfer import dec_target, ese_transfer_on_path


def register(subparsers) -> None:
    p = subparsers.add_parser("optimize", help="LP-based degree-profile optimization per user")
    p.add_argument("--path", help="JSON breakpoint file (default: preset path or straight line)")
    p.add_argument("--users", help="1-based users to optimize (default: all)")
    p.add_argument("--degrees", help="variable degree set, e.g. '2:1:30, 35:5:50'")
    p.add_argument("--eta", help="check degrees tried for every user, e.g. 3,4,5")
    p.add_argument("--eta-per-user", help="one check degree per user, e.g. 3,4,5 (overrides --eta)")
    p.add_argument("--max-trials", type=int)
    p.add_argument("--overlay-points", type=int, default=128, help="rho samples in the psi overlay CSV")
    p.set_defaults(handler=run)


def _base_settings(ctx: RunContext) -> OptimizerSettings:
    args, s = ctx.args, ctx.settings
    sc = ctx.scenario()
    degrees = args.degrees or (sc.degrees if sc else None)
    fields = dict(
        max_trials=args.max_trials or s.MAX_TRIALS,
        stop_eps=s.STOP_EPS,
        lp_margin=s.LP_MARGIN,
        rho_points=s.RHO_POINTS,
        iev_points=s.IEV_POINTS,
    )
    if degrees:
        try:
            fields["degrees"] = parse_degree_set(degrees)
        except ValueError as e:
            raise ConfigError("--degrees", str(e)) from e
    if args.eta:
        fields["eta_candidates"] = parse_eta("--eta", args.eta)
    return OptimizerSettings(**fields)


def run(ctx: RunContext) -> int:
    args = ctx.args
    cfg = ctx.siso()
    path = ctx.path_for(cfg.K, args.path)
    users = parse_users("--users", args.users, cfg.K) if args.users else tuple(range(cfg.K))
    base = _base_settings(ctx)
    sc = ctx.scenario()
    per_user = None
    if args.eta_per_user:
        per_user = parse_eta("--eta-per-user", args.eta_per_user)
        if len(per_user) != cfg.K:
            raise ConfigError("--eta-per-user", f"needs {cfg.K} entries")
    elif sc is not None and not args.eta:
        per_user = sc.eta
    curve = MmseCurve.for_modulation(cfg.modulation)
    bits = cfg.modulation.bits_per_symbol

    def one(k: int) -> OptimizedProfile:
        settings = base if per_user is None else base.model_copy(update={"eta_candidates": (per_user[k],)})
        return optimize_user(settings, dec_target(cfg, path, k), user=k, bits_per_symbol=bits, curve=curve)

    with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
        results = list(pool.map(one, users))

    ctx.write_json("profiles.json", {"profiles": [
        {**r.model_dump(mode="json"), "user": r.user + 1, "design_rate": r.profile.design_rate} for r in results
    ]})

    frames = []
    for r in results:
        target = dec_target(cfg, path, r.user)
        grid = rho_grid(target, base)[:: max(1, base.rho_points // args.overlay_points)]
        frames.append(pd.DataFrame({
            "user": r.user + 1,
            "rho": grid,
            "target_v": np.asarray(target(grid), dtype=float),
            "achieved_v": measure_dec_transfer(r.profile, grid, curve=curve),
        }))
    overlay = pd.concat(frames, ignore_index=True)
    ctx.write_csv("psi_overlay.csv", overlay)
    ctx.write_csv("rates.csv", pd.DataFrame([
        {"user": r.user + 1, "code_rate": r.code_rate, "rate_bpcu": r.rate_bpcu, "converged": r.converged,
         "trials": r.trials, "eta": ",".join(str(d) for d in r.eta)} for r in results
    ]))
    if ctx.plots:
        ese = pd.concat([ese_transfer_on_path(cfg, path, r.user).sample() for r in results], ignore_index=True)
        for r in results:
            ctx.plot(charts.transfer_panel, ese, overlay, r.user + 1)
    return 0
