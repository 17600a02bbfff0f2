"""ESE-side transfer functions.

The elementary signal estimator turns the feedback MSE vector ``v`` into a
per-user SNR. Along a decoding path this becomes a piecewise rational map
v_k -> rho_k (:class:`EseTransfer`); its clamped inverse is the curve a
matched decoder has to realize (:class:`DecTarget`).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import pandas as pd
import structlog
from scipy import linalg

from app.core.errors import DomainError
from app.models.path import MsePath
from app.models.system import MimoConfig, SystemConfig

logger = structlog.get_logger(__name__)


def _check_user(K: int, k: int) -> int:
    if not isinstance(k, (int, np.integer)) or not 0 <= k < K:
        raise DomainError(f"user index {k!r} outside 0..{K - 1}")
    return int(k)


def _check_mse_vector(K: int, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = np.full(K, float(v))
    if v.shape != (K,):
        raise DomainError(f"MSE vector has shape {v.shape}, expected ({K},)")
    if not np.all(np.isfinite(v)) or np.any(v < 0.0) or np.any(v > 1.0):
        raise DomainError("MSE vector coordinates must lie in [0, 1]")
    return v


def ese_snr(cfg: SystemConfig, v) -> np.ndarray:
    """Per-user SNR after soft interference cancellation.

    rho_k = g_k / (sum_{i != k} g_i v_i + sigma^2), computed from one shared
    sum with the own term subtracted per user.
    """
    v = _check_mse_vector(cfg.K, v)
    g = cfg.gains
    gv = g * v
    total = gv.sum() + cfg.noise_var
    return g / (total - gv)


def snr_bounds(cfg: SystemConfig, k: int) -> tuple[float, float]:
    """(rho_min, rho_max) of user ``k``: all others undecoded vs. all cancelled."""
    k = _check_user(cfg.K, k)
    g = cfg.g[k]
    return g / (cfg.total_power - g + cfg.noise_var), g / cfg.noise_var


def sic_thresholds(cfg: SystemConfig, order: Sequence[int]) -> np.ndarray:
    """Decoding thresholds of successive cancellation, indexed by user.

    ``order[0]`` is decoded first and sees every later user as noise.
    """
    order = [int(u) for u in order]
    if sorted(order) != list(range(cfg.K)):
        raise DomainError(f"{order!r} is not a permutation of 0..{cfg.K - 1}")
    g = cfg.gains
    out = np.empty(cfg.K)
    remaining = float(g.sum())
    for k in order:
        remaining -= g[k]
        out[k] = g[k] / (max(remaining, 0.0) + cfg.noise_var)
    return out


# -----------------------------------------------------------------------------
# Piecewise ESE transfer along a path
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class EseSegment:
    """rho = g_k / (slope * v + intercept) for v in [v_lo, v_hi]."""

    index: int
    v_lo: float
    v_hi: float
    slope: float
    intercept: float

    def rho(self, v, g_k: float):
        return g_k / (self.slope * np.asarray(v, dtype=float) + self.intercept)


@dataclass(frozen=True)
class EseJump:
    """Vertical piece: v stays put while rho climbs from rho_lo to rho_hi."""

    index: int
    v: float
    rho_lo: float
    rho_hi: float


Piece = Union[EseSegment, EseJump]


@dataclass(frozen=True)
class EseTransfer:
    user: int
    g_k: float
    rho_min: float
    rho_max: float
    pieces: tuple[Piece, ...]

    def __call__(self, v):
        """rho_k(v_k). At a jump location the lower (pre-jump) SNR is returned."""
        v = np.asarray(v, dtype=float)
        out = np.full(v.shape, np.nan)
        for p in reversed(self.pieces):
            if isinstance(p, EseSegment):
                mask = (v >= p.v_lo) & (v <= p.v_hi)
                out = np.where(mask, p.rho(np.clip(v, p.v_lo, p.v_hi), self.g_k), out)
        return out if out.ndim else float(out)

    def inverse(self, rho):
        """v_k with rho_k(v_k) = rho, clamped to 1 below rho_min and 0 above rho_max.

        Jumps become plateaus; constant-SNR stretches return their lower end.
        """
        rho = np.asarray(rho, dtype=float)
        out = np.where(rho <= self.rho_min, 1.0, 0.0)
        done = (rho <= self.rho_min) | (rho >= self.rho_max)
        for p in self.pieces:
            if isinstance(p, EseJump):
                mask = ~done & (rho >= p.rho_lo) & (rho <= p.rho_hi)
                out = np.where(mask, p.v, out)
            else:
                lo_rho = float(p.rho(p.v_hi, self.g_k))
                hi_rho = float(p.rho(p.v_lo, self.g_k))
                mask = ~done & (rho >= lo_rho) & (rho <= hi_rho)
                if p.slope > 0.0:
                    with np.errstate(divide="ignore", invalid="ignore"):
                        v = (self.g_k / rho - p.intercept) / p.slope
                    out = np.where(mask, np.clip(v, p.v_lo, p.v_hi), out)
                else:
                    out = np.where(mask, p.v_lo, out)
            done = done | mask
        return out if out.ndim else float(out)

    def sample(self, points_per_piece: int = 64) -> pd.DataFrame:
        """Sampled (v, rho) pairs in path order, for CSV export and plotting."""
        rows_v: list[np.ndarray] = []
        rows_rho: list[np.ndarray] = []
        for p in self.pieces:
            if isinstance(p, EseJump):
                rows_v.append(np.array([p.v, p.v]))
                rows_rho.append(np.array([p.rho_lo, p.rho_hi]))
            else:
                vs = np.linspace(p.v_hi, p.v_lo, points_per_piece)
                rows_v.append(vs)
                rows_rho.append(p.rho(vs, self.g_k))
        return pd.DataFrame(
            {"user": self.user + 1, "v": np.concatenate(rows_v), "rho": np.concatenate(rows_rho)}
        )


def ese_transfer_on_path(cfg: SystemConfig, path: MsePath, k: int) -> EseTransfer:
    """Piecewise v_k -> rho_k map of user ``k`` along ``path``."""
    k = _check_user(cfg.K, k)
    if path.K != cfg.K:
        raise DomainError(f"path has {path.K} coordinates, config has K={cfg.K}")
    x = path.as_array()
    g = cfg.gains
    gk = float(g[k])
    others = np.ones(cfg.K, dtype=bool)
    others[k] = False
    pieces: list[Piece] = []
    for i in range(len(x) - 1):
        a, b = x[i], x[i + 1]
        d = a[k] - b[k]
        if d == 0.0:
            rho_lo = gk / (g @ a - gk * a[k] + cfg.noise_var)
            rho_hi = gk / (g @ b - gk * b[k] + cfg.noise_var)
            pieces.append(EseJump(index=i, v=float(a[k]), rho_lo=float(rho_lo), rho_hi=float(rho_hi)))
            continue
        delta = a - b
        slope = float(g[others] @ delta[others] / d)
        intercept = float(g[others] @ (a[others] - delta[others] * a[k] / d) + cfg.noise_var)
        pieces.append(EseSegment(index=i, v_lo=float(b[k]), v_hi=float(a[k]), slope=slope, intercept=intercept))
    rho_min, rho_max = snr_bounds(cfg, k)
    return EseTransfer(user=k, g_k=gk, rho_min=rho_min, rho_max=rho_max, pieces=tuple(pieces))


@dataclass(frozen=True)
class DecTarget:
    """psi_k(rho): 1 below rho_min, the inverse ESE map in between, 0 above rho_max."""

    transfer: EseTransfer

    @property
    def user(self) -> int:
        return self.transfer.user

    @property
    def rho_min(self) -> float:
        return self.transfer.rho_min

    @property
    def rho_max(self) -> float:
        return self.transfer.rho_max

    def __call__(self, rho):
        return self.transfer.inverse(rho)

    def sample(self, rho_grid) -> pd.DataFrame:
        rho_grid = np.asarray(rho_grid, dtype=float)
        return pd.DataFrame({"user": self.user + 1, "rho": rho_grid, "v": self(rho_grid)})


def dec_target(cfg: SystemConfig, path: MsePath, k: int) -> DecTarget:
    return DecTarget(ese_transfer_on_path(cfg, path, k))


def straight_line_dec_target(cfg: SystemConfig, k: int, rho):
    """Closed-form DEC target of the straight-line path: (g_k/rho - sigma^2)/(G - g_k), clamped."""
    k = _check_user(cfg.K, k)
    rho = np.asarray(rho, dtype=float)
    gk = cfg.g[k]
    rest = cfg.total_power - gk
    if rest <= 0.0:
        out = np.where(rho < gk / cfg.noise_var, 1.0, 0.0)
    else:
        with np.errstate(divide="ignore"):
            out = np.clip((gk / rho - cfg.noise_var) / rest, 0.0, 1.0)
    return out if out.ndim else float(out)


# -----------------------------------------------------------------------------
# MIMO LMMSE
# -----------------------------------------------------------------------------
def _scaled_channels(mimo: MimoConfig) -> list[np.ndarray]:
    return [np.sqrt(p) * Hk for p, Hk in zip(mimo.P, mimo.channels())]


def lmmse_gains(mimo: MimoConfig, v) -> np.ndarray:
    """s_k = sum_i h_ki^H R^{-1} h_ki with R = sigma^2 I + sum_k v_k H_k H_k^H.

    Powers are folded into the channel columns; R is applied through a
    Cholesky factorization.
    """
    v = _check_mse_vector(mimo.K, v)
    Hs = _scaled_channels(mimo)
    R = mimo.noise_var * np.eye(mimo.n_rx, dtype=complex)
    for vk, Hk in zip(v, Hs):
        R += vk * (Hk @ Hk.conj().T)
    factor = linalg.cho_factor(R, lower=True)
    return np.array([float(np.real(np.sum(Hk.conj() * linalg.cho_solve(factor, Hk)))) for Hk in Hs])


def mimo_lmmse_snr(mimo: MimoConfig, v) -> np.ndarray:
    """Per-user SNR of the iterative LMMSE detector, rho_k = s_k / (1 - v_k s_k)."""
    v = _check_mse_vector(mimo.K, v)
    s = lmmse_gains(mimo, v)
    return s / (1.0 - v * s)


def mimo_as_siso(cfg: SystemConfig) -> MimoConfig:
    """Embed a SISO config as a 1 x 1 MIMO system with unit channels and P = g."""
    return MimoConfig.from_arrays([np.ones((1, 1))] * cfg.K, cfg.g, cfg.noise_var, seed=cfg.seed)
