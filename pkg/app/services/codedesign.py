"""EXIT-matched LDPC degree-profile design.

Mutual information on the decoder side is tracked with the J-function under
the consistent-Gaussian LLR model; a QPSK observation at SNR rho contributes
an LLR of variance 4 rho. The matching LP bounds the variable-node curve below
by the identity on a (rho, I_EV) grid limited by what the ESE target needs.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Protocol

import numpy as np
import structlog
from scipy import optimize

from app.core.errors import DomainError, LpInfeasibleError
from app.models.profile import DegreeProfile, OptimizerSettings
from app.models.results import OptimizedProfile
from app.services.mmse import QPSK, MmseCurve, j_fast, j_inv_fast

logger = structlog.get_logger(__name__)

OBJECTIVE_TOL = 1e-9
BISECT_STEPS = 64
TUNNEL_CHECK_DENSITY = 4


class Target(Protocol):
    """Anything that maps rho to the variance the decoder must deliver."""

    rho_min: float
    rho_max: float

    def __call__(self, rho): ...


def _scaled(mult, s2):
    """mult * s2 with 0 * inf read as 0."""
    mult = np.asarray(mult, dtype=float)
    with np.errstate(invalid="ignore"):
        return np.where(mult == 0.0, 0.0, mult * s2)


def _check_mi(name: str, I):
    I = np.asarray(I, dtype=float)
    if np.any(~np.isfinite(I)) or np.any(I < 0.0) or np.any(I > 1.0):
        raise DomainError(f"{name} must lie in [0, 1]")
    return I


# -----------------------------------------------------------------------------
# EXIT steps
# -----------------------------------------------------------------------------
def vnd_step(profile: DegreeProfile, I_EC, rho):
    """I_EV = sum_i lambda_i J(sqrt((i-1) J^{-1}(I_EC)^2 + 4 rho))."""
    I_EC = _check_mi("I_EC", I_EC)
    rho = np.asarray(rho, dtype=float)
    s2 = np.asarray(j_inv_fast(I_EC), dtype=float) ** 2
    deg = profile.var_degrees
    lam = profile.var_edge_fractions
    s2 = np.expand_dims(s2, -1)
    arg = _scaled(deg - 1, s2) + 4.0 * np.expand_dims(rho, -1)
    out = np.sum(lam * j_fast(np.sqrt(arg)), axis=-1)
    return out if np.ndim(out) else float(out)


def cnd_step(profile: DegreeProfile, I_EV):
    """I_EC = 1 - sum_j eta_j J(sqrt(j-1) J^{-1}(1 - I_EV))."""
    I_EV = _check_mi("I_EV", I_EV)
    s2 = np.expand_dims(np.asarray(j_inv_fast(1.0 - I_EV), dtype=float) ** 2, -1)
    deg = profile.chk_degrees
    eta = profile.chk_edge_fractions
    out = 1.0 - np.sum(eta * j_fast(np.sqrt(_scaled(deg - 1, s2))), axis=-1)
    out = np.clip(out, 0.0, 1.0)
    return out if np.ndim(out) else float(out)


def combined_step(profile: DegreeProfile, I_EV, rho):
    """One decoder iteration in I_EV alone: vnd_step(cnd_step(I_EV), rho)."""
    return vnd_step(profile, cnd_step(profile, I_EV), rho)


def initial_iev(profile: DegreeProfile, rho):
    """Channel-only extrinsic information J(2 sqrt(rho))."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise DomainError("rho must be nonnegative")
    out = j_fast(2.0 * np.sqrt(rho))
    return out if np.ndim(out) else float(out)


def output_variance(profile: DegreeProfile, I_EC, curve: MmseCurve = QPSK):
    """Variance fed back to the ESE: sum_i Lambda_i f(i J^{-1}(I_EC)^2 / 4).

    Node-perspective fractions, because every variable node returns one symbol
    estimate built from all of its incoming check messages.
    """
    I_EC = np.asarray(I_EC, dtype=float)
    s2 = np.expand_dims(np.asarray(j_inv_fast(I_EC), dtype=float) ** 2, -1)
    deg = profile.var_degrees
    Lam = profile.var_node_fractions
    snr = _scaled(deg, s2) / 4.0
    out = np.sum(Lam * np.where(np.isinf(snr), 0.0, curve(np.where(np.isinf(snr), 0.0, snr))), axis=-1)
    return out if np.ndim(out) else float(out)


def converged_lhs(profile: DegreeProfile, I_EV, curve: MmseCurve = QPSK):
    """Left side of the convergence condition, as a function of I_EV (decreasing)."""
    return output_variance(profile, cnd_step(profile, I_EV), curve)


def converged_iev(profile: DegreeProfile, rho: float, psi: float, curve: MmseCurve = QPSK) -> float:
    """I_EV,fin in [initial_iev(rho), 1] with converged_lhs(I_EV,fin) = psi.

    psi at or above the left side at I_EV,ini needs no decoding gain and
    returns I_EV,ini; psi = 0 returns 1.
    """
    psi = float(psi)
    if not 0.0 <= psi <= 1.0:
        raise DomainError(f"target variance {psi!r} outside [0, 1]")
    lo = float(initial_iev(profile, rho))
    if psi >= converged_lhs(profile, lo, curve):
        return lo
    if psi <= 0.0:
        return 1.0
    return float(optimize.bisect(lambda I: converged_lhs(profile, I, curve) - psi, lo, 1.0, xtol=1e-12, maxiter=200))


def _converged_iev_grid(profile: DegreeProfile, I_ini: np.ndarray, psi: np.ndarray, curve: MmseCurve) -> np.ndarray:
    """Vectorized :func:`converged_iev` over a rho grid (bisection in lockstep)."""
    lo = I_ini.copy()
    hi = np.ones_like(lo)
    at_start = psi >= converged_lhs(profile, lo, curve)
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        above = converged_lhs(profile, mid, curve) > psi
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    out = 0.5 * (lo + hi)
    out = np.where(psi <= 0.0, 1.0, out)
    return np.where(at_start, I_ini, out)


# -----------------------------------------------------------------------------
# Matching LP
# -----------------------------------------------------------------------------
def rho_grid(target: Target, settings: OptimizerSettings) -> np.ndarray:
    lo = max(target.rho_min / settings.rho_span, 1e-9)
    hi = max(target.rho_max * settings.rho_span, lo * 1.0001)
    grid = np.geomspace(lo, hi, settings.rho_points)
    return np.unique(np.concatenate([grid, [target.rho_min, target.rho_max]]))


def _constraint_rows(settings: OptimizerSettings, eta_profile: DegreeProfile, target: Target,
                     curve: MmseCurve, density: int = 1):
    """(rho, I) grid points and the per-degree decoder gains A[q, i] at each."""
    rho = rho_grid(target, settings)
    if density > 1:
        rho = np.unique(np.geomspace(rho[0], rho[-1], settings.rho_points * density))
    psi = np.asarray(target(rho), dtype=float)
    I_ini = np.asarray(initial_iev(eta_profile, rho), dtype=float)
    I_fin = np.minimum(_converged_iev_grid(eta_profile, I_ini, psi, curve), settings.iev_cap)
    live = I_fin > I_ini + 1e-12
    if not np.any(live):
        return np.zeros(0), np.zeros(0), np.zeros((0, len(settings.degrees)))
    t = np.linspace(0.0, 1.0, settings.iev_points * density)
    I = I_ini[live, None] + (I_fin[live] - I_ini[live])[:, None] * t[None, :]
    R = np.broadcast_to(rho[live, None], I.shape)
    I, R = I.ravel(), R.ravel()
    s2 = np.asarray(j_inv_fast(cnd_step(eta_profile, I)), dtype=float) ** 2
    deg = np.asarray(settings.degrees, dtype=float)
    arg = _scaled(deg[None, :] - 1.0, s2[:, None]) + 4.0 * R[:, None]
    A = j_fast(np.sqrt(arg)) - I[:, None]
    return R, I, A


def optimize_lambda_lp(settings: OptimizerSettings, eta: dict[int, float], prev: DegreeProfile,
                       target: Target, curve: MmseCurve = QPSK) -> DegreeProfile:
    """lambda maximizing sum lambda_i / i with the decoder tunnel open on the grid.

    The grid's upper I_EV limit at each rho comes from ``prev``'s node
    fractions through :func:`converged_iev`.
    """
    shaped = DegreeProfile(lam=prev.lam, eta=eta)
    R, I, A = _constraint_rows(settings, shaped, target, curve)
    degrees = np.asarray(settings.degrees)
    c = -1.0 / degrees
    if len(A):
        res = optimize.linprog(
            c,
            A_ub=-A,
            b_ub=-np.full(len(A), settings.lp_margin),
            A_eq=np.ones((1, len(degrees))),
            b_eq=[1.0],
            bounds=[(0.0, None)] * len(degrees),
            method="highs",
        )
    else:
        res = optimize.linprog(c, A_eq=np.ones((1, len(degrees))), b_eq=[1.0],
                               bounds=[(0.0, None)] * len(degrees), method="highs")
    if res.status != 0:
        worst = int(np.argmin(A.max(axis=1))) if len(A) else 0
        rho_w = float(R[worst]) if len(A) else float("nan")
        iev_w = float(I[worst]) if len(A) else float("nan")
        margin = float(A[worst].max()) if len(A) else float("nan")
        logger.warning("lp.infeasible", eta=eta, rho=rho_w, iev=iev_w, best_gain=margin, status=res.status)
        raise LpInfeasibleError(
            f"no degree profile opens the tunnel at rho={rho_w:.4g}, I_EV={iev_w:.4g} "
            f"(best gain {margin:.3g} < margin {settings.lp_margin:g})",
            rho=rho_w,
            iev=iev_w,
            margin=margin,
        )
    profile = DegreeProfile.from_arrays(degrees, res.x, eta)
    logger.debug("lp.solved", eta=eta, rows=len(A), objective=float(-res.fun), degrees=len(profile.lam))
    return profile


def _tunnel_gain(profile: DegreeProfile, target: Target, settings: OptimizerSettings, density: int,
                 curve: MmseCurve) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    R, I, _ = _constraint_rows(settings, profile, target, curve, density=density)
    if not len(I):
        return R, I, np.zeros(0)
    return R, I, np.asarray(vnd_step(profile, cnd_step(profile, I), R), dtype=float) - I


def tunnel_margin(profile: DegreeProfile, target: Target, settings: OptimizerSettings,
                  density: int = TUNNEL_CHECK_DENSITY, curve: MmseCurve = QPSK) -> float:
    """Smallest combined_step(I) - I over a grid ``density`` times finer than the LP's."""
    _, _, gain = _tunnel_gain(profile, target, settings, density, curve)
    return float(gain.min()) if len(gain) else float("inf")


def _tunnel_closed(profile: DegreeProfile, target: Target, settings: OptimizerSettings,
                   curve: MmseCurve) -> Optional[LpInfeasibleError]:
    """Error naming the worst fine-grid point when the tunnel closes between LP grid points."""
    R, I, gain = _tunnel_gain(profile, target, settings, TUNNEL_CHECK_DENSITY, curve)
    if not len(gain) or gain.min() > 0.0:
        return None
    worst = int(np.argmin(gain))
    return LpInfeasibleError(
        f"tunnel closes between grid points at rho={R[worst]:.4g}, I_EV={I[worst]:.4g} (gain {gain[worst]:.3g})",
        rho=float(R[worst]),
        iev=float(I[worst]),
        margin=float(gain[worst]),
    )


# -----------------------------------------------------------------------------
# Outer loop
# -----------------------------------------------------------------------------
def _cosine_gap(a: dict[int, float], b: dict[int, float]) -> float:
    keys = sorted(set(a) | set(b))
    va = np.array([a.get(d, 0.0) for d in keys])
    vb = np.array([b.get(d, 0.0) for d in keys])
    return 1.0 - float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))


def profile_rate(profile: DegreeProfile, bits_per_symbol: int = 1) -> float:
    """Design rate, scaled to information bits per channel use."""
    return profile.design_rate * bits_per_symbol


def run_algorithm1(settings: OptimizerSettings, eta: dict[int, float], target: Target, user: int = 0,
                   bits_per_symbol: int = 2, curve: MmseCurve = QPSK) -> OptimizedProfile:
    """Iterate the matching LP from lambda(x) = x until successive profiles align.

    Stops when 1 - cos(lambda_t, lambda_{t-1}) <= stop_eps or after max_trials.
    A trial whose objective drops by more than the LP tolerance is discarded
    and the previous profile returned.

    The LP only constrains its own grid, so the result is re-checked on a grid
    TUNNEL_CHECK_DENSITY times finer. If the tunnel closes there, the latest
    earlier trial that keeps it open is returned instead (not converged); if
    none does, :class:`LpInfeasibleError` names the worst point.
    """
    current = DegreeProfile(lam={2: 1.0}, eta=eta)
    accepted: list[DegreeProfile] = []
    history: list[float] = []
    converged = False
    trials = 0
    for t in range(1, settings.max_trials + 1):
        trials = t
        nxt = optimize_lambda_lp(settings, eta, current, target, curve)
        objective = float(np.sum(nxt.var_edge_fractions / nxt.var_degrees))
        if history and objective < history[-1] - OBJECTIVE_TOL:
            logger.warning("algorithm1.objective_dropped", user=user, trial=t, previous=history[-1], objective=objective)
            break
        gap = _cosine_gap(nxt.lam, current.lam)
        current = nxt
        accepted.append(nxt)
        history.append(objective)
        if gap <= settings.stop_eps:
            converged = True
            break
    closed: Optional[LpInfeasibleError] = None
    while accepted:
        closed = _tunnel_closed(accepted[-1], target, settings, curve)
        if closed is None:
            break
        logger.warning("lp.tunnel_closed", user=user, eta=eta, trial=len(accepted), rho=closed.rho,
                       iev=closed.iev, margin=closed.margin)
        accepted.pop()
        history.pop()
        converged = False
    if not accepted:
        raise closed
    current = accepted[-1]
    rate = profile_rate(current)
    logger.info("algorithm1.done", user=user, eta=eta, trials=trials, converged=converged, code_rate=rate)
    return OptimizedProfile(
        user=user,
        lam=current.lam,
        eta=current.eta,
        code_rate=rate,
        rate_bpcu=profile_rate(current, bits_per_symbol),
        converged=converged,
        trials=trials,
        objective_history=tuple(history),
    )


def optimize_user(settings: OptimizerSettings, target: Target, user: int = 0, threads: int = 1,
                  bits_per_symbol: int = 2, curve: MmseCurve = QPSK) -> OptimizedProfile:
    """Run the trial loop for every check distribution and keep the highest-rate result."""

    def attempt(eta: dict[int, float]) -> OptimizedProfile | LpInfeasibleError:
        try:
            return run_algorithm1(settings, eta, target, user, bits_per_symbol, curve)
        except LpInfeasibleError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        outcomes = list(pool.map(attempt, settings.eta_candidates))
    feasible = [o for o in outcomes if isinstance(o, OptimizedProfile)]
    if not feasible:
        raise next(o for o in outcomes if isinstance(o, LpInfeasibleError))
    best: Optional[OptimizedProfile] = None
    for o in feasible:
        if best is None or o.code_rate > best.code_rate:
            best = o
    return best
