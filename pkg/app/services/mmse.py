"""MMSE curves and the J-function pair.

Functions
---------
mmse_gaussian(rho), mmse_qpsk(rho)
    Exact MMSE of a unit-power symbol at SNR ``rho``.
mmse_inverse(curve, v)
    SNR at which the curve reaches ``v``.
j_func(sigma), j_inv(I)
    Mutual information of a consistent Gaussian LLR channel and its inverse.

Notes
-----
- QPSK at complex SNR rho is two antipodal real dimensions, each at real SNR
  rho, so its per-symbol MMSE equals the BPSK MMSE at real SNR rho.
- Exact values come from adaptive quadrature (``scipy.integrate.quad``).
  Hot loops use the ``*_fast`` variants: monotone PCHIP tables over
  quadrature knots, built lazily once per process. Call :func:`warm_tables`
  before fanning work out to threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
import structlog
from scipy import integrate, interpolate, optimize

from app.core.errors import DomainError
from app.models.system import Modulation

logger = structlog.get_logger(__name__)

LN2 = math.log(2.0)

# Table extents. Beyond RHO_TABLE_MAX the QPSK MMSE is below 1e-80 and is
# treated as 0; beyond SIGMA_TABLE_MAX the J-function is 1 to double precision.
RHO_TABLE_MAX = 400.0
SIGMA_TABLE_MAX = 60.0
TABLE_KNOTS = 4096

_QUAD = dict(epsabs=0.0, epsrel=1e-12, limit=400)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _phi(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def _expit(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _softplus(x: float) -> float:
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def _check_nonnegative(name: str, x: float) -> float:
    x = float(x)
    if not math.isfinite(x) or x < 0:
        raise DomainError(f"{name} must be a finite nonnegative number, got {x!r}")
    return x


# -----------------------------------------------------------------------------
# Exact evaluators (quadrature)
# -----------------------------------------------------------------------------
def mmse_gaussian(rho: float) -> float:
    """MMSE of a Gaussian symbol, exactly 1/(1+rho)."""
    rho = _check_nonnegative("rho", rho)
    return 1.0 / (1.0 + rho)


def mmse_qpsk(rho: float) -> float:
    """MMSE of a QPSK symbol at complex SNR ``rho``.

    Evaluates 1 - E[tanh(rho + sqrt(rho) Z)] as the integral of
    2 phi(z) expit(-2(rho + sqrt(rho) z)), whose mass sits near z = -sqrt(rho).
    """
    rho = _check_nonnegative("rho", rho)
    if rho == 0.0:
        return 1.0
    s = math.sqrt(rho)

    def integrand(z: float) -> float:
        return 2.0 * _phi(z) * _expit(-2.0 * (rho + s * z))

    val, _ = integrate.quad(integrand, -s - 14.0, 14.0, points=[-s], **_QUAD)
    return float(min(val, 1.0))


def j_func(sigma: float) -> float:
    """Mutual information of a consistent Gaussian LLR with standard deviation ``sigma``.

    The LLR is N(sigma^2/2, sigma^2); the result is
    1 - E[log2(1 + exp(-L))] computed through its complement so that values
    close to 1 keep their precision.
    """
    sigma = _check_nonnegative("sigma", sigma)
    return 1.0 - _j_complement(sigma)


def _j_complement(sigma: float) -> float:
    if sigma == 0.0:
        return 1.0
    mean = sigma * sigma / 2.0

    def integrand(z: float) -> float:
        return _phi(z) * _softplus(-(mean + sigma * z)) / LN2

    lo = min(-14.0, -sigma / 2.0 - 14.0)
    val, _ = integrate.quad(integrand, lo, 14.0, points=[-sigma / 2.0], **_QUAD)
    return float(min(max(val, 0.0), 1.0))


def j_inv(I: float) -> float:
    """Inverse of :func:`j_func` on [0, 1), by bisection to |dI| <= 1e-9."""
    I = float(I)
    if not math.isfinite(I) or I < 0.0 or I >= 1.0:
        raise DomainError(f"I must lie in [0, 1), got {I!r}")
    if I == 0.0:
        return 0.0
    target_c = 1.0 - I
    hi = 1.0
    while _j_complement(hi) > target_c:
        hi *= 2.0
        if hi > 1e4:
            raise DomainError(f"I={I!r} too close to 1 to invert")
    # bisect on log complement: keeps resolution when I is near 1
    log_target = math.log(target_c)

    def g(s: float) -> float:
        return math.log(max(_j_complement(s), 1e-300)) - log_target

    return float(optimize.bisect(g, 0.0 if hi == 1.0 else hi / 2.0, hi, xtol=1e-13, rtol=1e-15, maxiter=200))


# -----------------------------------------------------------------------------
# Curves
# -----------------------------------------------------------------------------
class CurveKind(str, Enum):
    GAUSSIAN = "Gaussian"
    QPSK = "QPSK"
    BPSK = "BPSK"


@dataclass(frozen=True)
class MmseCurve:
    """An MMSE curve f(rho) with exact and table-backed evaluation.

    BPSK uses one real dimension against complex noise, i.e. f_Q(2 rho).
    """

    kind: CurveKind = CurveKind.QPSK
    tol: float = 1e-10

    @classmethod
    def for_modulation(cls, modulation: Modulation) -> "MmseCurve":
        return cls(kind=CurveKind(modulation.value))

    def exact(self, rho: float) -> float:
        if self.kind is CurveKind.GAUSSIAN:
            return mmse_gaussian(rho)
        if self.kind is CurveKind.BPSK:
            return mmse_qpsk(2.0 * _check_nonnegative("rho", rho))
        return mmse_qpsk(rho)

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.kind is CurveKind.GAUSSIAN:
            return 1.0 / (1.0 + rho)
        if self.kind is CurveKind.BPSK:
            return mmse_qpsk_fast(2.0 * rho)
        return mmse_qpsk_fast(rho)

    def inverse(self, v):
        """Table-backed inverse; v = 0 maps to +inf."""
        v = np.asarray(v, dtype=float)
        if self.kind is CurveKind.GAUSSIAN:
            with np.errstate(divide="ignore"):
                return 1.0 / v - 1.0
        rho = mmse_qpsk_inverse_fast(v)
        return rho / 2.0 if self.kind is CurveKind.BPSK else rho

    def combined(self, rho, v):
        """f(rho + f^{-1}(v)): MMSE after merging an SNR-rho observation with prior variance v."""
        rho = np.asarray(rho, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.kind is CurveKind.GAUSSIAN:
            return v / (1.0 + rho * v)
        out = np.zeros(np.broadcast(rho, v).shape)
        pos = np.broadcast_to(v > 0.0, out.shape)
        rr = np.broadcast_to(rho, out.shape)[pos]
        vv = np.broadcast_to(v, out.shape)[pos]
        out[pos] = self(rr + self.inverse(vv))
        return out if out.ndim else float(out)


GAUSSIAN = MmseCurve(CurveKind.GAUSSIAN)
QPSK = MmseCurve(CurveKind.QPSK)


def mmse_inverse(curve: MmseCurve, v: float) -> float:
    """SNR rho with f(rho) = v for v in (0, 1].

    Gaussian inverts in closed form; finite alphabets bisect on a bracket grown
    geometrically from [0, 1].
    """
    v = float(v)
    if not math.isfinite(v) or v <= 0.0 or v > 1.0:
        raise DomainError(f"v must lie in (0, 1], got {v!r}")
    if curve.kind is CurveKind.GAUSSIAN:
        return 1.0 / v - 1.0
    if v == 1.0:
        return 0.0
    hi = 1.0
    while curve.exact(hi) > v:
        hi *= 2.0
        if hi > 1e6:
            raise DomainError(f"v={v!r} below the resolvable range of the {curve.kind.value} curve")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    return float(optimize.bisect(lambda r: curve.exact(r) - v, lo, hi, xtol=1e-13, rtol=1e-15, maxiter=200))


# -----------------------------------------------------------------------------
# Tables
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class _Table:
    forward: interpolate.PchipInterpolator
    inverse: interpolate.PchipInterpolator
    x_max: float
    y_max: float


@lru_cache(maxsize=None)
def _qpsk_table() -> _Table:
    # knots uniform in log1p(rho); y = -log f_Q(rho) is monotone increasing
    rho = np.expm1(np.linspace(0.0, math.log1p(RHO_TABLE_MAX), TABLE_KNOTS))
    y = np.array([-math.log(mmse_qpsk(r)) for r in rho])
    y[0] = 0.0
    y = np.maximum.accumulate(y)
    logger.info("mmse.table_built", curve="QPSK", knots=TABLE_KNOTS, rho_max=RHO_TABLE_MAX)
    return _Table(interpolate.PchipInterpolator(rho, y), interpolate.PchipInterpolator(y, rho), rho[-1], y[-1])


@lru_cache(maxsize=None)
def _j_table() -> _Table:
    # t(sigma) = sqrt(-log(1 - J(sigma))) is close to linear at both ends
    sigma = np.linspace(0.0, SIGMA_TABLE_MAX, TABLE_KNOTS)
    t = np.array([math.sqrt(-math.log(max(_j_complement(s), 1e-300))) for s in sigma])
    t[0] = 0.0
    t = np.maximum.accumulate(t)
    logger.info("mmse.table_built", curve="J", knots=TABLE_KNOTS, sigma_max=SIGMA_TABLE_MAX)
    return _Table(interpolate.PchipInterpolator(sigma, t), interpolate.PchipInterpolator(t, sigma), sigma[-1], t[-1])


def warm_tables() -> None:
    """Build every interpolation table; must happen before concurrent use."""
    _qpsk_table()
    _j_table()


def mmse_qpsk_fast(rho):
    """Vectorized table lookup of :func:`mmse_qpsk`; exact 0 beyond the table."""
    tab = _qpsk_table()
    rho = np.asarray(rho, dtype=float)
    inside = rho <= tab.x_max
    y = tab.forward(np.clip(rho, 0.0, tab.x_max))
    out = np.where(inside, np.exp(-y), 0.0)
    return out if out.ndim else float(out)


def mmse_qpsk_inverse_fast(v):
    """Vectorized inverse of :func:`mmse_qpsk_fast`; v <= 0 maps to +inf."""
    tab = _qpsk_table()
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        y = -np.log(np.clip(v, 0.0, 1.0))
    out = np.where(y >= tab.y_max, np.inf, tab.inverse(np.clip(y, 0.0, tab.y_max)))
    out = np.where(v >= 1.0, 0.0, out)
    return out if out.ndim else float(out)


def j_fast(sigma):
    """Vectorized J-function; +inf and anything past the table saturate at 1."""
    tab = _j_table()
    sigma = np.asarray(sigma, dtype=float)
    t = tab.forward(np.clip(np.nan_to_num(sigma, posinf=tab.x_max), 0.0, tab.x_max))
    out = np.where(sigma >= tab.x_max, 1.0, -np.expm1(-t * t))
    return out if out.ndim else float(out)


def j_inv_fast(I):
    """Vectorized inverse J; I >= 1 maps to +inf."""
    tab = _j_table()
    I = np.asarray(I, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.sqrt(np.maximum(-np.log1p(-np.clip(I, 0.0, 1.0)), 0.0))
    out = np.where(t >= tab.y_max, np.inf, tab.inverse(np.clip(t, 0.0, tab.y_max)))
    return out if out.ndim else float(out)
