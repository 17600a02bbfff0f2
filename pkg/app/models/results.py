"""Result records produced by the numerical services and persisted by the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from app.models.profile import DegreeProfile


class RateMethod(str, Enum):
    CLOSED_FORM_GAUSSIAN = "ClosedFormGaussian"
    NUMERIC_GAUSSIAN = "NumericGaussian"
    NUMERIC_QPSK = "NumericQPSK"
    NUMERIC_BPSK = "NumericBPSK"
    NUMERIC_MIMO = "NumericMIMO"


class RateReport(BaseModel):
    """Per-user rates (bpcu) achieved along a path."""

    model_config = ConfigDict(frozen=True)

    rates: tuple[float, ...]
    sum_rate: float
    path: tuple[tuple[float, ...], ...]
    method: RateMethod

    def to_frame(self) -> pd.DataFrame:
        rows = [{"user": str(k + 1), "rate_bpcu": r, "method": self.method.value} for k, r in enumerate(self.rates)]
        rows.append({"user": "sum", "rate_bpcu": self.sum_rate, "method": self.method.value})
        return pd.DataFrame(rows, columns=["user", "rate_bpcu", "method"])


class SubsetConstraint(BaseModel):
    """sum_{k in subset} R_k <= log2(1 + sum_{k in subset} g_k / sigma^2)."""

    model_config = ConfigDict(frozen=True)

    subset: tuple[int, ...]
    rate_sum: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.rate_sum

    @property
    def label(self) -> str:
        return "+".join(str(k + 1) for k in self.subset)


class RegionReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    inside: bool
    on_dominant_face: bool
    constraints: tuple[SubsetConstraint, ...]
    binding: tuple[SubsetConstraint, ...]

    def to_frame(self) -> pd.DataFrame:
        tight = {c.subset for c in self.binding}
        return pd.DataFrame(
            [
                {
                    "subset": c.label,
                    "rate_sum_bpcu": c.rate_sum,
                    "bound_bpcu": c.bound,
                    "slack_bpcu": c.slack,
                    "binding": c.subset in tight,
                }
                for c in self.constraints
            ],
            columns=["subset", "rate_sum_bpcu", "bound_bpcu", "slack_bpcu", "binding"],
        )


class OptimizedProfile(BaseModel):
    """Output of one Algorithm-1 run (or the best of an eta search)."""

    model_config = ConfigDict(frozen=True)

    user: int
    lam: dict[int, float]
    eta: dict[int, float]
    code_rate: float
    rate_bpcu: float
    converged: bool
    trials: int
    objective_history: tuple[float, ...] = ()

    @property
    def profile(self) -> DegreeProfile:
        return DegreeProfile(lam=self.lam, eta=self.eta)


@dataclass(frozen=True)
class DeTrajectory:
    """Outer-iteration history of the joint ESE/decoder density evolution.

    Arrays have one row per outer iteration (row 0 is the state before the
    first iteration) and one column per user.
    """

    v: np.ndarray
    rho: np.ndarray
    iev: np.ndarray
    converged: bool
    iterations: int
    snr_db: Optional[float] = None

    def to_frame(self) -> pd.DataFrame:
        K = self.v.shape[1]
        data: dict[str, Any] = {"iter": np.arange(self.v.shape[0])}
        for k in range(K):
            data[f"v_{k + 1}"] = self.v[:, k]
        for k in range(K):
            data[f"rho_{k + 1}"] = self.rho[:, k]
        return pd.DataFrame(data)


@dataclass(frozen=True)
class LlrHistogram:
    """Counts of +1-conditioned decoder-output LLRs at one outer iteration."""

    iteration: int
    edges: np.ndarray
    counts: np.ndarray
    skewness: float
    normality_pvalue: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def density(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.zeros_like(self.counts, dtype=float)
        return self.counts / (total * np.diff(self.edges))



def histogram_frame(histograms: Sequence[LlrHistogram]) -> pd.DataFrame:
    """Long-format densities: one row per (iteration, bin)."""
    frames = [pd.DataFrame({"iter": h.iteration, "bin_center": h.centers, "density": h.density}) for h in histograms]
    if not frames:
        return pd.DataFrame(columns=["iter", "bin_center", "density"])
    return pd.concat(frames, ignore_index=True)

@dataclass(frozen=True)
class UserErrorStats:
    user: int
    bit_errors: int
    bits: int
    frame_errors: int
    frames: int
    ci_lo: float
    ci_hi: float

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else 0.0

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else 0.0


@dataclass(frozen=True)
class LinkRun:
    """Aggregated Monte-Carlo outcome at one SNR."""

    snr_db: float
    users: tuple[UserErrorStats, ...]
    blocks: int
    outer_iterations: tuple[int, ...]
    v_trajectory: np.ndarray
    histograms: tuple[LlrHistogram, ...] = field(default=())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "snr_dB": self.snr_db,
                    "user": u.user + 1,
                    "ber": u.ber,
                    "fer": u.fer,
                    "blocks": self.blocks,
                    "ci_lo": u.ci_lo,
                    "ci_hi": u.ci_hi,
                }
                for u in self.users
            ],
            columns=["snr_dB", "user", "ber", "fer", "blocks", "ci_lo", "ci_hi"],
        )

    def histogram_frame(self) -> pd.DataFrame:
        return histogram_frame(self.histograms)

    def trajectory_frame(self) -> pd.DataFrame:
        data: dict[str, Any] = {"iter": np.arange(self.v_trajectory.shape[0])}
        for k in range(self.v_trajectory.shape[1]):
            data[f"v_{k + 1}"] = self.v_trajectory[:, k]
        return pd.DataFrame(data)


class RunManifest(BaseModel):
    """Everything needed to reproduce one CLI invocation."""

    subcommand: str
    config: dict[str, Any] = Field(default_factory=dict)
    flags: dict[str, Any] = Field(default_factory=dict)
    seed: int = 0
    inputs: dict[str, str] = Field(default_factory=dict)
    outputs: list[str] = Field(default_factory=list)
    wall_clock_s: float = 0.0
    version: str = ""
