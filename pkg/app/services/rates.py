"""Achievable rates as line integrals in the MSE vector field.

Gaussian signalling has a closed form per path segment; other alphabets are
integrated numerically along the path with the matched-decoder integrand
f(rho_k + f^{-1}(v_k)) d rho_k. All results are in bits per channel use.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import structlog
from scipy import integrate, linalg

from app.core.errors import DomainError, InfeasibleTargetError, QuadratureError
from app.core.numeric import LN2
from app.models.path import MsePath
from app.models.results import RateMethod, RateReport, RegionReport, SubsetConstraint
from app.models.system import MimoConfig, Modulation, RateTuple, SystemConfig
from app.services.mmse import CurveKind, MmseCurve
from app.services.transfer import lmmse_gains

logger = structlog.get_logger(__name__)

REGION_TOL = 1e-12
MAX_REGION_USERS = 20


def _check_path(cfg_K: int, path: MsePath) -> np.ndarray:
    if path.K != cfg_K:
        raise DomainError(f"path has {path.K} coordinates, config has K={cfg_K}")
    return path.as_array()


def sum_rate_capacity(cfg: SystemConfig) -> float:
    """log2(1 + sum(g) / sigma^2)."""
    return math.log1p(cfg.total_power / cfg.noise_var) / LN2


def _segment_log_weight(drop: float, end_level: float) -> float:
    """log((end + drop) / end) / drop, continuous as drop -> 0."""
    ratio = drop / end_level
    if abs(ratio) < 1e-12:
        return 1.0 / end_level
    return math.log1p(ratio) / drop


def gaussian_rates(g: np.ndarray, noise_var: float, x: np.ndarray) -> np.ndarray:
    """Closed-form per-user rates (bits) for raw breakpoints ``x`` (rows = breakpoints).

    Each segment x_i -> x_{i+1} hands user k the share
    g_k (x_ik - x_{i+1,k}) / g^T(x_i - x_{i+1}) of log2((g^T x_i + s^2)/(g^T x_{i+1} + s^2)).
    No path validation happens here; the path solver calls this on trial points.
    """
    rates = np.zeros(x.shape[1])
    for a, b in zip(x[:-1], x[1:]):
        per_user = g * (a - b)
        drop = float(per_user.sum())
        end_level = float(g @ b) + noise_var
        rates += per_user * _segment_log_weight(drop, end_level)
    return rates / LN2


def user_rates_closed_form(cfg: SystemConfig, path: MsePath) -> RateReport:
    """Per-user Gaussian rates along a piecewise-linear path."""
    rates = gaussian_rates(cfg.gains, cfg.noise_var, _check_path(cfg.K, path))
    return RateReport(
        rates=tuple(float(r) for r in rates),
        sum_rate=float(math.fsum(rates)),
        path=path.breakpoints,
        method=RateMethod.CLOSED_FORM_GAUSSIAN,
    )


_NUMERIC_METHOD = {
    CurveKind.GAUSSIAN: RateMethod.NUMERIC_GAUSSIAN,
    CurveKind.QPSK: RateMethod.NUMERIC_QPSK,
    CurveKind.BPSK: RateMethod.NUMERIC_BPSK,
}


def _head_integral(curve: MmseCurve, rho_min: np.ndarray, quad_tol: float) -> np.ndarray:
    """integral_0^{rho_min,k} f(rho) d rho per user (the stretch where psi = 1)."""
    if curve.kind is CurveKind.GAUSSIAN:
        return np.log1p(rho_min)
    out = np.zeros_like(rho_min)
    for k, top in enumerate(rho_min):
        if top > 0.0:
            val, err = integrate.quad(lambda r: float(curve(r)), 0.0, float(top), epsabs=quad_tol, epsrel=1e-10, limit=200)
            out[k] = val
    return out


def user_rates_numeric(cfg: SystemConfig, path: MsePath, curve: MmseCurve | None = None,
                       quad_tol: float = 1e-10) -> RateReport:
    """Per-user rates by quadrature of f(rho_k + f^{-1}(v_k)) d rho_k along the path.

    Each segment is parametrized by tau in [0, 1]; d rho_k / d tau comes from the
    chain rule, so vertical ESE pieces (v_k fixed, rho_k rising) and flat ones
    (rho_k fixed) need no special casing.
    """
    curve = curve or MmseCurve.for_modulation(cfg.modulation)
    x = _check_path(cfg.K, path)
    g = cfg.gains
    s2 = cfg.noise_var

    gx0 = g * x[0]
    rho_min = g / (gx0.sum() - gx0 + s2)
    rates = _head_integral(curve, rho_min, quad_tol)

    for i, (a, b) in enumerate(zip(x[:-1], x[1:])):
        d = a - b
        gd = g * d
        total_gd = gd.sum()

        def integrand(tau: float) -> np.ndarray:
            v = a - d * tau
            gv = g * v
            interference = gv.sum() - gv + s2
            rho = g / interference
            drho = g * (total_gd - gd) / interference**2
            return curve.combined(rho, v) * drho

        val, err = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=quad_tol, epsrel=1e-10, norm="max", limit=400)
        if not np.all(np.isfinite(val)) or err > max(100.0 * quad_tol, 1e-8):
            logger.warning("rates.quadrature_failed", segment=i, abserr=float(err))
            raise QuadratureError(f"quadrature on segment {i} did not converge (abserr={err:.3g})",
                                  segment=i, abserr=float(err))
        rates = rates + val

    rates = rates / LN2
    return RateReport(
        rates=tuple(float(r) for r in rates),
        sum_rate=float(math.fsum(rates)),
        path=path.breakpoints,
        method=_NUMERIC_METHOD[curve.kind],
    )


def qpsk_capacity(rho: float) -> float:
    """Single-user QPSK mutual information (bpcu) at complex SNR ``rho`` via I-MMSE."""
    if rho < 0:
        raise DomainError(f"rho must be nonnegative, got {rho!r}")
    if rho == 0:
        return 0.0
    curve = MmseCurve(CurveKind.QPSK)
    val, _ = integrate.quad(lambda r: float(curve(r)), 0.0, float(rho), epsabs=1e-12, epsrel=1e-10, limit=400)
    return val / LN2


def qpsk_equal_power_sum_rate(K: int, snr_db: float) -> float:
    """QPSK sum rate of K equal-power users on the straight-line path at SNR_sum ``snr_db``."""
    g = tuple([1.0 / K] * K)
    cfg = SystemConfig(K=K, g=g, noise_var=1.0, modulation=Modulation.QPSK).at_snr_db(snr_db)
    path = MsePath.from_points([[1.0] * K, [0.0] * K])
    return user_rates_numeric(cfg, path, MmseCurve(CurveKind.QPSK)).sum_rate


# -----------------------------------------------------------------------------
# Capacity region
# -----------------------------------------------------------------------------
def region_constraints(cfg: SystemConfig, R: RateTuple | None = None) -> tuple[SubsetConstraint, ...]:
    if cfg.K > MAX_REGION_USERS:
        raise DomainError(f"region enumeration refuses K={cfg.K} > {MAX_REGION_USERS}")
    rates = R.as_array() if R is not None else np.zeros(cfg.K)
    g = cfg.gains
    out = []
    for size in range(1, cfg.K + 1):
        for subset in itertools.combinations(range(cfg.K), size):
            idx = list(subset)
            bound = math.log1p(float(g[idx].sum()) / cfg.noise_var) / LN2
            out.append(SubsetConstraint(subset=subset, rate_sum=float(math.fsum(rates[idx])), bound=bound))
    return tuple(out)


def in_capacity_region(cfg: SystemConfig, R: RateTuple) -> RegionReport:
    """Check all 2^K - 1 subset constraints of the Gaussian MAC region.

    ``binding`` lists the violated constraints when the tuple is outside, and
    the tight ones (slack within tolerance) when it is inside.
    """
    if R.K != cfg.K:
        raise DomainError(f"rate tuple has {R.K} entries, config has K={cfg.K}")
    constraints = region_constraints(cfg, R)
    violated = tuple(c for c in constraints if c.slack < -REGION_TOL)
    inside = not violated
    tight = tuple(c for c in constraints if abs(c.slack) <= 1e-9)
    on_face = inside and abs(constraints[-1].slack) <= 1e-9
    return RegionReport(inside=inside, on_dominant_face=on_face, constraints=constraints,
                        binding=violated if violated else tight)


def require_inside(region: RegionReport) -> None:
    """Raise naming the most violated subset constraint when the tuple lies outside the region."""
    if region.inside:
        return
    worst = min(region.binding, key=lambda c: c.slack)
    label = " + ".join(f"R_{k + 1}" for k in worst.subset)
    raise InfeasibleTargetError(
        f"target violates {label} <= {worst.bound:.6g} (sum {worst.rate_sum:.6g})",
        subset=worst.subset,
        bound=worst.bound,
        total=worst.rate_sum,
    )


# -----------------------------------------------------------------------------
# MIMO
# -----------------------------------------------------------------------------
def mimo_sum_rate(mimo: MimoConfig) -> float:
    """log2 det(I + sum_k P_k H_k H_k^H / sigma^2) through a Cholesky factor."""
    A = np.eye(mimo.n_rx, dtype=complex)
    for p, Hk in zip(mimo.P, mimo.channels()):
        A += (p / mimo.noise_var) * (Hk @ Hk.conj().T)
    L = linalg.cholesky(A, lower=True)
    return float(2.0 * np.sum(np.log(np.real(np.diag(L))))) / LN2


def mimo_user_rates(mimo: MimoConfig, path: MsePath, quad_tol: float = 1e-10) -> RateReport:
    """Per-user LMMSE rates: R_k = integral of s_k(v) (-d v_k) along the path."""
    x = _check_path(mimo.K, path)
    rates = np.zeros(mimo.K)
    for i, (a, b) in enumerate(zip(x[:-1], x[1:])):
        d = a - b

        def integrand(tau: float) -> np.ndarray:
            return lmmse_gains(mimo, a - d * tau) * d

        val, err = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=quad_tol, epsrel=1e-10, norm="max", limit=400)
        if err > max(100.0 * quad_tol, 1e-8):
            raise QuadratureError(f"quadrature on segment {i} did not converge (abserr={err:.3g})",
                                  segment=i, abserr=float(err))
        rates += val
    rates /= LN2
    return RateReport(
        rates=tuple(float(r) for r in rates),
        sum_rate=float(math.fsum(rates)),
        path=path.breakpoints,
        method=RateMethod.NUMERIC_MIMO,
    )
