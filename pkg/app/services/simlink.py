"""Monte-Carlo link simulation of the interleaved multi-user receiver.

Each real dimension carries one interleaved code bit per user (QPSK uses both
dimensions of a symbol, BPSK only the in-phase one). The ESE cancels the soft
mean of every other user from one shared sum and demaps with the residual
variance; per-user BP decoders feed extrinsic LLRs back through the
interleavers.
"""
from __future__ import annotations

import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import structlog
from scipy import stats

from app.core.errors import DomainError
from app.models.results import LinkRun, LlrHistogram, UserErrorStats
from app.models.system import Modulation, SystemConfig
from app.services.ldpc import BpDecoder, LdpcCode
from app.services.pathfinder import ScmSplit

logger = structlog.get_logger(__name__)

ROLE_INFO, ROLE_INTERLEAVER, ROLE_NOISE = 0, 1, 2


@dataclass(frozen=True)
class LinkSettings:
    block_budget: int = 1000
    target_errors: int = 100
    max_outer: int = 1000
    bp_iters: int = 1
    frame_average: bool = False
    clip: float = 40.0
    threads: int = 1


@dataclass(frozen=True)
class HistogramSpec:
    """Which user's decoder-output LLRs to histogram, and at which outer iterations."""

    user: int = 0
    iterations: tuple[int, ...] = (1, 2, 4, 6, 8)
    bins: int = 200
    limit: float = 40.0


def stream(seed: int, block: int, user: int, role: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, block, user, role)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block, user, role])))


def amplitudes(cfg: SystemConfig) -> np.ndarray:
    """Per-dimension amplitude of each user's +-1 chips."""
    if cfg.modulation is Modulation.GAUSSIAN:
        raise DomainError("link simulation needs a finite alphabet (QPSK or BPSK)")
    g = cfg.gains
    return np.sqrt(g / 2.0) if cfg.modulation is Modulation.QPSK else np.sqrt(g)


def ese_llr(y: np.ndarray, xhat: np.ndarray, amps: np.ndarray, noise_dim: float,
            frame_average: bool = False) -> np.ndarray:
    """Per-user channel LLRs from soft interference cancellation.

    ``xhat`` holds each user's soft chips (K, n). The total mean and variance
    are formed once and each user's own contribution is subtracted, so the
    LLR of user k never depends on user k's own feedback.
    """
    var_sym = 1.0 - xhat**2
    if frame_average:
        var_sym = np.broadcast_to(var_sym.mean(axis=1, keepdims=True), var_sym.shape)
    a = amps[:, None]
    mean_total = np.sum(a * xhat, axis=0)
    var_total = np.sum(a**2 * var_sym, axis=0) + noise_dim
    resid_var = np.maximum(var_total - a**2 * var_sym, noise_dim)
    return 2.0 * a * (y - mean_total + a * xhat) / resid_var


@dataclass
class _BlockOutcome:
    block: int
    bit_errors: np.ndarray
    frame_error: np.ndarray
    iterations: int
    v_track: np.ndarray
    samples: dict[int, np.ndarray] = field(default_factory=dict)


def _check_codes(cfg: SystemConfig, codes: Sequence[LdpcCode]) -> int:
    if len(codes) != cfg.K:
        raise DomainError(f"{len(codes)} codes for K={cfg.K} users")
    lengths = {c.n for c in codes}
    if len(lengths) != 1:
        raise DomainError(f"all users need the same block length, got {sorted(lengths)}")
    return lengths.pop()


def simulate_block(cfg: SystemConfig, codes: Sequence[LdpcCode], block: int, settings: LinkSettings,
                   capture: Optional[HistogramSpec] = None) -> _BlockOutcome:
    n = _check_codes(cfg, codes)
    K = cfg.K
    amps = amplitudes(cfg)
    noise_dim = cfg.noise_var / 2.0

    info = [stream(cfg.seed, block, k, ROLE_INFO).integers(0, 2, size=code.k, dtype=np.uint8)
            for k, code in enumerate(codes)]
    words = [code.encode(bits) for code, bits in zip(codes, info)]
    perms = [stream(cfg.seed, block, k, ROLE_INTERLEAVER).permutation(n) for k in range(K)]
    chips = np.stack([1.0 - 2.0 * w[p].astype(float) for w, p in zip(words, perms)])
    noise = stream(cfg.seed, block, K, ROLE_NOISE).normal(0.0, np.sqrt(noise_dim), size=n)
    y = amps @ chips + noise

    decoders = [BpDecoder(code, settings.clip) for code in codes]
    ext = np.zeros((K, n))
    llr_code = np.empty((K, n))
    v_track = [np.ones(K)]
    samples: dict[int, np.ndarray] = {}
    hard = np.zeros((K, n), dtype=np.uint8)
    it = 0
    for it in range(1, settings.max_outer + 1):
        xhat = np.stack([np.tanh(0.5 * ext[k][perms[k]]) for k in range(K)])
        llr_ch = np.clip(ese_llr(y, xhat, amps, noise_dim, settings.frame_average), -settings.clip, settings.clip)
        for k in range(K):
            llr_code[k][perms[k]] = llr_ch[k]
            ext[k] = decoders[k].iterate(llr_code[k], settings.bp_iters)
        v_track.append(np.mean(1.0 - np.tanh(0.5 * ext) ** 2, axis=1))
        if capture is not None and it in capture.iterations:
            u = capture.user
            samples[it] = ext[u][words[u] == 0].copy()
        hard = (llr_code + ext < 0.0).astype(np.uint8)
        if all(code.is_codeword(h) for code, h in zip(codes, hard)):
            break

    bit_errors = np.array([int(np.count_nonzero(hard[k][codes[k].info_cols] != info[k])) for k in range(K)])
    logger.debug("link.block_done", block=block, iterations=it, bit_errors=int(bit_errors.sum()))
    return _BlockOutcome(block=block, bit_errors=bit_errors, frame_error=bit_errors > 0, iterations=it,
                         v_track=np.asarray(v_track), samples=samples)


def wilson_interval(errors: int, trials: int) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    ci = stats.binomtest(int(errors), int(trials)).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _histogram(iteration: int, values: np.ndarray, spec: HistogramSpec) -> LlrHistogram:
    counts, edges = np.histogram(np.clip(values, -spec.limit, spec.limit), bins=spec.bins,
                                 range=(-spec.limit, spec.limit))
    if values.size < 8 or np.ptp(values) == 0.0:
        skew, pvalue = 0.0, 0.0
    else:
        skew = float(np.nan_to_num(stats.skew(values)))
        pvalue = float(np.nan_to_num(stats.normaltest(values).pvalue))
    return LlrHistogram(iteration=iteration, edges=edges, counts=counts, skewness=skew, normality_pvalue=pvalue)


def _mean_trajectory(tracks: list[np.ndarray]) -> np.ndarray:
    length = max(len(t) for t in tracks)
    padded = [np.vstack([t, np.repeat(t[-1:], length - len(t), axis=0)]) for t in tracks]
    return np.mean(padded, axis=0)


def run_link(cfg: SystemConfig, codes: Sequence[LdpcCode], snr_db: float, settings: LinkSettings = LinkSettings(),
             capture: Optional[HistogramSpec] = None, owner: Optional[Sequence[int]] = None,
             n_users: Optional[int] = None) -> LinkRun:
    """Simulate blocks at SNR_sum ``snr_db`` until enough bit errors or the block budget.

    Blocks run in waves of ``settings.threads`` but are accepted strictly in
    index order, so the stopping block and every statistic are independent of
    the thread count. ``owner`` folds virtual users (SCM layers) onto
    original users; ``n_users`` counts them when trailing users own no
    virtual user.
    """
    _check_codes(cfg, codes)
    run_cfg = cfg.at_snr_db(snr_db)
    owner_arr = np.arange(cfg.K) if owner is None else np.asarray(owner)
    groups = n_users if n_users is not None else int(owner_arr.max()) + 1
    bits_per_user = np.array([code.k for code in codes])

    accepted: list[_BlockOutcome] = []
    total_errors = 0
    wave = max(1, settings.threads)
    with ThreadPoolExecutor(max_workers=wave) as pool:
        next_block = 0
        while next_block < settings.block_budget and total_errors < settings.target_errors:
            ids = range(next_block, min(next_block + wave, settings.block_budget))
            outcomes = list(pool.map(lambda b: simulate_block(run_cfg, codes, b, settings, capture), ids))
            for outcome in outcomes:
                accepted.append(outcome)
                total_errors += int(outcome.bit_errors.sum())
                if total_errors >= settings.target_errors:
                    break
            next_block = ids[-1] + 1

    blocks = len(accepted)
    users = []
    for grp in range(groups):
        members = owner_arr == grp
        bit_errors = int(sum(o.bit_errors[members].sum() for o in accepted))
        frame_errors = int(sum(bool(o.frame_error[members].any()) for o in accepted))
        bits = int(bits_per_user[members].sum()) * blocks
        lo, hi = wilson_interval(bit_errors, bits)
        users.append(UserErrorStats(user=grp, bit_errors=bit_errors, bits=bits, frame_errors=frame_errors,
                                    frames=blocks, ci_lo=lo, ci_hi=hi))

    histograms: tuple[LlrHistogram, ...] = ()
    if capture is not None:
        histograms = tuple(
            _histogram(it, np.concatenate([o.samples[it] for o in accepted if it in o.samples]), capture)
            for it in capture.iterations
            if any(it in o.samples for o in accepted)
        )

    logger.info("link.done", snr_db=snr_db, blocks=blocks, bit_errors=total_errors)
    return LinkRun(
        snr_db=float(snr_db),
        users=tuple(users),
        blocks=blocks,
        outer_iterations=tuple(o.iterations for o in accepted),
        v_trajectory=_mean_trajectory([o.v_track for o in accepted]),
        histograms=histograms,
    )


def capture_llr_histograms(cfg: SystemConfig, codes: Sequence[LdpcCode], snr_db: float, spec: HistogramSpec,
                           settings: LinkSettings = LinkSettings(),
                           owner: Optional[Sequence[int]] = None) -> tuple[LlrHistogram, ...]:
    """Empirical +1-conditioned decoder-output LLR densities per outer iteration.

    Every block of ``settings.block_budget`` is simulated; ``target_errors``
    does not stop the run. Iterations no block reached are left out.
    """
    full = replace(settings, target_errors=sys.maxsize)
    histograms = run_link(cfg, codes, snr_db, full, capture=spec, owner=owner).histograms
    logger.info("link.histograms", snr_db=snr_db, user=spec.user, iterations=[h.iteration for h in histograms])
    return histograms


def run_scm_link(split: ScmSplit, codes: Sequence[LdpcCode], snr_db: float,
                 settings: LinkSettings = LinkSettings(), capture: Optional[HistogramSpec] = None) -> LinkRun:
    """Simulate the layered system; error statistics are folded back onto the original users."""
    return run_link(split.config, codes, snr_db, settings, capture, owner=split.owner, n_users=len(split.layers))
