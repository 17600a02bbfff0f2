# app/services/pipeline.py
"""End-to-end flow: target rates -> path -> matched degree profiles -> DE threshold -> optional BER."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import structlog

from app.core.errors import DomainError, NoSignChangeError
from app.core.numeric import snr_sum
from app.models.path import MsePath, PathSolveSpec
from app.models.profile import OptimizerSettings
from app.models.results import LinkRun, OptimizedProfile, RateReport, RegionReport
from app.models.system import Modulation, RateTuple, SystemConfig
from app.services.codedesign import optimize_user
from app.services.evolution import threshold_search
from app.services.ldpc import build_ldpc
from app.services.mmse import MmseCurve
from app.services.pathfinder import ScmSplit, scm_layer_split, solve_path_for_rates
from app.services.rates import in_capacity_region, require_inside, user_rates_closed_form
from app.services.simlink import LinkSettings, run_link
from app.services.transfer import dec_target

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class PipelineRequest:
    config: SystemConfig
    target: tuple[float, ...]
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)
    eta: Optional[tuple[dict[int, float], ...]] = None
    path: Optional[MsePath] = None
    template: Optional[tuple[tuple[Optional[float], ...], ...]] = None
    anchor: Optional[tuple[float, ...]] = None
    layer_power: Optional[float] = None
    threshold_tol_db: float = 0.01
    simulate_snr_db: tuple[float, ...] = ()
    block_length: int = 32768
    link: LinkSettings = field(default_factory=LinkSettings)
    threads: int = 1


@dataclass(frozen=True)
class PipelineResult:
    region: RegionReport
    path: MsePath
    rates: RateReport
    profiles: tuple[OptimizedProfile, ...]
    split: Optional[ScmSplit] = None
    threshold_db: Optional[float] = None
    links: tuple[LinkRun, ...] = ()

    def summary(self) -> dict[str, Any]:
        return {
            "path": [list(x) for x in self.path.breakpoints],
            "path_rates_bpcu": list(self.rates.rates),
            "optimized_rates_bpcu": [p.rate_bpcu for p in self.profiles],
            "code_rates": [p.code_rate for p in self.profiles],
            "converged": [p.converged for p in self.profiles],
            "layers": list(self.split.layers) if self.split is not None else None,
            "threshold_dB": self.threshold_db,
        }


def plan(req: PipelineRequest) -> list[str]:
    """Human-readable list of the steps :func:`run_full_pipeline` would take."""
    steps = [f"check target {req.target} against the {2 ** req.config.K - 1} subset constraints"]
    if req.path is None:
        steps.append("solve a decoding path for the target rates")
    else:
        steps.append(f"use the given {req.path.segments}-segment path")
    if req.layer_power is not None:
        steps.append(f"split users into equal-power layers of power {req.layer_power:g}")
    etas = req.eta if req.eta is not None else (req.settings.eta_candidates,) * req.config.K
    for k, eta in enumerate(etas):
        steps.append(f"optimize user {k + 1} degree profile (check distributions {eta})")
    steps.append("search the density-evolution threshold")
    if req.simulate_snr_db:
        steps.append(f"simulate n={req.block_length} at SNR_sum {list(req.simulate_snr_db)} dB")
    return steps


def _curve(cfg: SystemConfig) -> MmseCurve:
    if cfg.modulation is Modulation.GAUSSIAN:
        raise DomainError("code design needs a binary alphabet (QPSK or BPSK), config says Gaussian")
    return MmseCurve.for_modulation(cfg.modulation)


def _optimize_all(req: PipelineRequest, design_cfg: SystemConfig, design_path: MsePath,
                  owner: Sequence[int], layers: Sequence[int]) -> tuple[OptimizedProfile, ...]:
    cfg = req.config
    curve = _curve(cfg)
    bits = cfg.modulation.bits_per_symbol

    def one(k: int) -> OptimizedProfile:
        settings = req.settings
        if req.eta is not None:
            settings = settings.model_copy(update={"eta_candidates": (req.eta[k],)})
        rep = list(owner).index(k)
        best = optimize_user(settings, dec_target(design_cfg, design_path, rep), user=k, bits_per_symbol=bits,
                             curve=curve)
        if layers[k] != 1:
            best = best.model_copy(update={"rate_bpcu": best.rate_bpcu * layers[k]})
        return best

    with ThreadPoolExecutor(max_workers=max(1, req.threads)) as pool:
        return tuple(pool.map(one, range(cfg.K)))


def run_full_pipeline(req: PipelineRequest) -> PipelineResult:
    cfg = req.config
    if len(req.target) != cfg.K:
        raise DomainError(f"target has {len(req.target)} rates, config has K={cfg.K}")
    region = in_capacity_region(cfg, RateTuple(rates=req.target))
    require_inside(region)

    path = req.path
    if path is None:
        spec = PathSolveSpec(target=req.target, template=req.template, anchor=req.anchor, seed=cfg.seed)
        path = solve_path_for_rates(cfg, spec, threads=req.threads)
    rates = user_rates_closed_form(cfg, path)

    split: Optional[ScmSplit] = None
    if req.layer_power is not None:
        split = scm_layer_split(cfg, path, req.layer_power)
        design_cfg, design_path = split.config, split.path
        owner, layers = split.owner, split.layers
    else:
        design_cfg, design_path = cfg, path
        owner, layers = tuple(range(cfg.K)), (1,) * cfg.K

    profiles = _optimize_all(req, design_cfg, design_path, owner, layers)
    per_layer = [profiles[k].profile for k in owner]

    design_db = snr_sum(cfg)[1]
    threshold: Optional[float] = None
    try:
        threshold = threshold_search(design_cfg, per_layer, bracket_db=(design_db - 3.0, design_db + 3.0),
                                     tol_db=req.threshold_tol_db, curve=_curve(cfg))
    except NoSignChangeError as e:
        logger.warning("pipeline.threshold_failed", error=str(e))

    links: list[LinkRun] = []
    if req.simulate_snr_db:
        codes = [build_ldpc(p, req.block_length, seed=cfg.seed, stream=j) for j, p in enumerate(per_layer)]
        link = replace(req.link, threads=req.threads)
        for snr in req.simulate_snr_db:
            links.append(run_link(design_cfg, codes, snr, link, owner=owner))

    logger.info("pipeline.done", users=cfg.K, threshold_db=threshold,
                rates=[round(p.rate_bpcu, 4) for p in profiles])
    return PipelineResult(region=region, path=path, rates=rates, profiles=profiles, split=split,
                          threshold_db=threshold, links=tuple(links))
