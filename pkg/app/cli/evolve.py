"""``evolve``: Gaussian-approximation density evolution and threshold search."""
from __future__ import annotations

from app.cli.common import RunContext, parse_floats
from app.core.errors import ConfigError
from app.core.numeric import snr_sum
from app.services import charts
from app.services.evolution import run_ga_de, threshold_search
from app.services.mmse import MmseCurve
from app.services.pathfinder import scm_layer_split


def register(subparsers) -> None:
    p = subparsers.add_parser("evolve", help="density evolution trajectory and threshold")
    p.add_argument("--profiles", help="profiles JSON (e.g. from optimize; default: preset profiles)")
    p.add_argument("--snr-db", type=float, help="SNR_sum for the trajectory (default: the config's)")
    p.add_argument("--n-inner", type=int, default=1, help="decoder iterations per outer iteration")
    p.add_argument("--max-outer", type=int, default=10000)
    p.add_argument("--threshold", action="store_true", help="also bisect the convergence threshold")
    p.add_argument("--bracket", default=None, help="threshold bracket lo,hi in dB (default: design +-3 dB)")
    p.add_argument("--tol-db", type=float, default=0.01)
    p.add_argument("--layer-power", type=float, help="evolve the equal-power layered system")
    p.set_defaults(handler=run)


def run(ctx: RunContext) -> int:
    args = ctx.args
    cfg = ctx.siso()
    profiles = ctx.profiles_for(cfg, args.profiles)
    curve = MmseCurve.for_modulation(cfg.modulation)
    sc = ctx.scenario()
    layer_power = args.layer_power if args.layer_power is not None else (sc.layer_power if sc else None)
    if layer_power is not None:
        split = scm_layer_split(cfg, ctx.path_for(cfg.K, None), layer_power)
        profiles = [profiles[k] for k in split.owner]
        cfg = split.config

    traj = run_ga_de(cfg, profiles, snr_db=args.snr_db, n_inner=args.n_inner, max_outer=args.max_outer, curve=curve)
    frame = traj.to_frame()
    ctx.write_csv("trajectory.csv", frame)
    ctx.plot(charts.trajectory_panel, frame)
    payload = {"converged": traj.converged, "iterations": traj.iterations, "snr_dB": traj.snr_db,
               "final_v": [float(x) for x in traj.v[-1]]}

    if args.threshold:
        design = snr_sum(cfg)[1]
        bracket = parse_floats("--bracket", args.bracket) if args.bracket else (design - 3.0, design + 3.0)
        if len(bracket) != 2:
            raise ConfigError("--bracket", "needs exactly two values lo,hi")
        payload["threshold_dB"] = threshold_search(cfg, profiles, bracket_db=(bracket[0], bracket[1]),
                                                   tol_db=args.tol_db, n_inner=args.n_inner,
                                                   max_outer=args.max_outer, curve=curve)
    ctx.write_json("evolution.json", payload)
    return 0
