"""System-level domain types: the multiple-access channel every computation reads.

All models are frozen pydantic models so they can be shared freely between
worker threads. Users are indexed from 0 in code; human-facing output
(CSV rows, messages) numbers them from 1.
"""
from __future__ import annotations

import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

U64_LIMIT = 2**64


class Modulation(str, Enum):
    GAUSSIAN = "Gaussian"
    QPSK = "QPSK"
    BPSK = "BPSK"

    @property
    def bits_per_symbol(self) -> int:
        return {"Gaussian": 2, "QPSK": 2, "BPSK": 1}[self.value]


class SystemConfig(BaseModel):
    """K-user Gaussian MAC with received powers ``g`` and noise variance ``noise_var``.

    ``g[k]`` is the product P_k|h_k|^2 on a linear scale; the transmit power and
    channel gain never appear separately.
    """

    model_config = ConfigDict(frozen=True)

    K: int = Field(..., ge=1)
    g: tuple[float, ...]
    noise_var: float = Field(..., gt=0)
    modulation: Modulation = Modulation.QPSK
    seed: int = Field(0, ge=0, lt=U64_LIMIT)

    @field_validator("g")
    @classmethod
    def _powers_nonnegative(cls, g: tuple[float, ...]) -> tuple[float, ...]:
        for i, gi in enumerate(g):
            if not math.isfinite(gi):
                raise ValueError(f"g[{i}] not finite")
            if gi < 0:
                raise ValueError(f"g[{i}] negative")
        if g and max(g) <= 0:
            raise ValueError("g needs at least one positive entry")
        return g

    @model_validator(mode="after")
    def _length_matches_k(self) -> "SystemConfig":
        if len(self.g) != self.K:
            raise ValueError(f"g has {len(self.g)} entries but K={self.K}")
        return self

    @property
    def gains(self) -> np.ndarray:
        return np.asarray(self.g, dtype=float)

    @property
    def total_power(self) -> float:
        return float(math.fsum(self.g))

    def at_snr_db(self, snr_db: float) -> "SystemConfig":
        """Same powers, noise variance rescaled so that SNR_sum equals ``snr_db``."""
        noise_var = self.total_power / 10.0 ** (snr_db / 10.0)
        return self.model_copy(update={"noise_var": noise_var})

    def with_noise(self, noise_var: float) -> "SystemConfig":
        return SystemConfig(K=self.K, g=self.g, noise_var=noise_var, modulation=self.modulation, seed=self.seed)


class RateTuple(BaseModel):
    """Per-user rates in bits per channel use."""

    model_config = ConfigDict(frozen=True)

    rates: tuple[float, ...]

    @field_validator("rates")
    @classmethod
    def _rates_nonnegative(cls, rates: tuple[float, ...]) -> tuple[float, ...]:
        for i, r in enumerate(rates):
            if not math.isfinite(r) or r < 0:
                raise ValueError(f"rates[{i}] must be a finite nonnegative number")
        return rates

    @property
    def K(self) -> int:
        return len(self.rates)

    @property
    def total(self) -> float:
        return float(math.fsum(self.rates))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rates, dtype=float)


Complex = tuple[float, float]


class MimoConfig(BaseModel):
    """Multi-antenna MAC: user k sends through ``H[k]`` (N_R x N_t,k) with power ``P[k]``.

    Complex entries are stored as ``[re, im]`` pairs, the same layout the
    configuration document uses.
    """

    model_config = ConfigDict(frozen=True)

    H: tuple[tuple[tuple[Complex, ...], ...], ...]
    P: tuple[float, ...]
    noise_var: float = Field(..., gt=0)
    seed: int = Field(0, ge=0, lt=U64_LIMIT)

    @model_validator(mode="after")
    def _shapes_agree(self) -> "MimoConfig":
        if not self.H:
            raise ValueError("H needs at least one user matrix")
        if len(self.P) != len(self.H):
            raise ValueError(f"P has {len(self.P)} entries but H has {len(self.H)} users")
        n_r = len(self.H[0])
        for k, Hk in enumerate(self.H):
            if len(Hk) != n_r:
                raise ValueError(f"H[{k}] has {len(Hk)} rows, expected {n_r}")
            if not Hk or not Hk[0]:
                raise ValueError(f"H[{k}] is empty")
            width = len(Hk[0])
            if any(len(row) != width for row in Hk):
                raise ValueError(f"H[{k}] is ragged")
        for k, pk in enumerate(self.P):
            if not math.isfinite(pk) or pk < 0:
                raise ValueError(f"P[{k}] negative")
        return self

    @property
    def K(self) -> int:
        return len(self.H)

    @property
    def n_rx(self) -> int:
        return len(self.H[0])

    def channels(self) -> list[np.ndarray]:
        out = []
        for Hk in self.H:
            a = np.asarray(Hk, dtype=float)
            out.append(a[..., 0] + 1j * a[..., 1])
        return out

    @classmethod
    def from_arrays(cls, H: list[np.ndarray], P, noise_var: float, seed: int = 0) -> "MimoConfig":
        packed = []
        for Hk in H:
            Hk = np.atleast_2d(np.asarray(Hk, dtype=complex))
            packed.append(tuple(tuple((float(z.real), float(z.imag)) for z in row) for row in Hk))
        return cls(H=tuple(packed), P=tuple(float(p) for p in P), noise_var=noise_var, seed=seed)
