"""Gaussian-approximation density evolution of the joint ESE/decoder loop."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import structlog

from app.core.errors import DomainError, NoSignChangeError
from app.models.profile import DegreeProfile
from app.models.results import DeTrajectory
from app.models.system import SystemConfig
from app.services.codedesign import cnd_step, combined_step, converged_lhs, vnd_step
from app.services.mmse import QPSK, MmseCurve
from app.services.transfer import ese_snr

logger = structlog.get_logger(__name__)

CONVERGED_V = 1e-6
STALL_TOL = 1e-7
STALL_WINDOW = 10


def run_ga_de(
    cfg: SystemConfig,
    profiles: Sequence[DegreeProfile],
    snr_db: Optional[float] = None,
    n_inner: int = 1,
    max_outer: int = 10000,
    stall_tol: float = STALL_TOL,
    stall_window: int = STALL_WINDOW,
    curve: MmseCurve = QPSK,
) -> DeTrajectory:
    """Track v(t), rho(t) and each decoder's I_EV over outer iterations.

    One outer iteration is an ESE update followed by ``n_inner`` decoder steps
    per user; the variance handed back is read off the current check-to-variable
    information. Non-convergence is reported in the result, never raised.
    """
    if len(profiles) != cfg.K:
        raise DomainError(f"{len(profiles)} profiles for K={cfg.K} users")
    if snr_db is not None:
        cfg = cfg.at_snr_db(snr_db)
    K = cfg.K
    v = np.ones(K)
    iev = np.zeros(K)
    v_rows, rho_rows, iev_rows = [v.copy()], [ese_snr(cfg, v)], [iev.copy()]
    converged = False
    quiet = 0
    t = 0
    for t in range(1, max_outer + 1):
        rho = ese_snr(cfg, v)
        v_new = np.empty(K)
        for k, profile in enumerate(profiles):
            I = iev[k]
            for _ in range(n_inner):
                I = vnd_step(profile, cnd_step(profile, I), rho[k])
            iev[k] = max(iev[k], float(I))
            v_new[k] = converged_lhs(profile, iev[k], curve)
        v_new = np.minimum(v, v_new)
        change = float(np.max(np.abs(v - v_new)))
        v = v_new
        v_rows.append(v.copy())
        rho_rows.append(ese_snr(cfg, v))
        iev_rows.append(iev.copy())
        if np.max(v) <= CONVERGED_V:
            converged = True
            break
        quiet = quiet + 1 if change < stall_tol else 0
        if quiet >= stall_window:
            break

    event = "de.converged" if converged else "de.stalled"
    logger.debug(event, iterations=t, snr_db=snr_db, v_max=float(np.max(v)))
    return DeTrajectory(
        v=np.asarray(v_rows),
        rho=np.asarray(rho_rows),
        iev=np.asarray(iev_rows),
        converged=converged,
        iterations=t,
        snr_db=snr_db,
    )


def threshold_search(
    cfg: SystemConfig,
    profiles: Sequence[DegreeProfile],
    bracket_db: tuple[float, float] = (-2.0, 3.0),
    tol_db: float = 0.01,
    **kwargs,
) -> float:
    """Smallest SNR_sum (dB, within ``tol_db``) at which density evolution converges."""
    lo, hi = float(bracket_db[0]), float(bracket_db[1])
    if not lo < hi:
        raise DomainError(f"bracket {bracket_db!r} is not increasing")

    def ok(db: float) -> bool:
        return run_ga_de(cfg, profiles, snr_db=db, **kwargs).converged

    lo_ok, hi_ok = ok(lo), ok(hi)
    if lo_ok or not hi_ok:
        raise NoSignChangeError(
            f"density evolution {'converges' if lo_ok else 'stalls'} at both ends of [{lo:g}, {hi:g}] dB",
            bracket=(lo, hi),
            detail={"lo_converged": lo_ok, "hi_converged": hi_ok},
        )
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    logger.info("de.threshold", snr_db=hi, tol_db=tol_db)
    return hi


def measure_dec_transfer(profile: DegreeProfile, rho_grid, max_iter: int = 10000, tol: float = 1e-10,
                         curve: MmseCurve = QPSK) -> np.ndarray:
    """Output variance of a decoder run to its fixed point at each a-priori SNR.

    At rho = 0 the decoder has nothing to work with and returns v = 1.
    """
    rho = np.asarray(rho_grid, dtype=float)
    if np.any(rho < 0):
        raise DomainError("rho grid must be nonnegative")
    I = np.zeros_like(rho)
    for _ in range(max_iter):
        nxt = np.maximum(I, np.asarray(combined_step(profile, I, rho), dtype=float))
        if np.max(np.abs(nxt - I), initial=0.0) < tol:
            I = nxt
            break
        I = nxt
    return np.asarray(converged_lhs(profile, I, curve), dtype=float)
