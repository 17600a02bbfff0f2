"""LDPC ensemble descriptions and optimizer settings."""
from __future__ import annotations

import math
import re
from typing import Iterable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SUM_TOL = 1e-6


def _check_distribution(name: str, dist: dict[int, float]) -> dict[int, float]:
    if not dist:
        raise ValueError(f"{name} is empty")
    for d, frac in dist.items():
        if d < 1:
            raise ValueError(f"{name} degree {d} < 1")
        if not math.isfinite(frac) or frac < 0:
            raise ValueError(f"{name}[{d}] negative")
    total = math.fsum(dist.values())
    if abs(total - 1.0) > SUM_TOL:
        raise ValueError(f"{name} fractions sum to {total:.9g}, expected 1")
    return dict(sorted(dist.items()))


class DegreeProfile(BaseModel):
    """Edge-perspective degree distributions (lambda on variables, eta on checks)."""

    model_config = ConfigDict(frozen=True)

    lam: dict[int, float]
    eta: dict[int, float]

    @field_validator("lam")
    @classmethod
    def _lam_valid(cls, lam: dict[int, float]) -> dict[int, float]:
        return _check_distribution("lam", lam)

    @field_validator("eta")
    @classmethod
    def _eta_valid(cls, eta: dict[int, float]) -> dict[int, float]:
        return _check_distribution("eta", eta)

    @classmethod
    def from_arrays(cls, degrees: Iterable[int], fractions: Iterable[float], eta: dict[int, float],
                    drop_below: float = 1e-9) -> "DegreeProfile":
        """Build from solver output: drop negligible entries and renormalize."""
        pairs = [(int(d), float(f)) for d, f in zip(degrees, fractions) if f > drop_below]
        total = math.fsum(f for _, f in pairs)
        lam = {d: f / total for d, f in pairs}
        return cls(lam=lam, eta=dict(eta))

    @classmethod
    def regular(cls, dv: int, dc: int) -> "DegreeProfile":
        return cls(lam={dv: 1.0}, eta={dc: 1.0})

    # --- numpy views (hot loops take these once) ----------------------------
    @property
    def var_degrees(self) -> np.ndarray:
        return np.fromiter(self.lam.keys(), dtype=int)

    @property
    def var_edge_fractions(self) -> np.ndarray:
        return np.fromiter(self.lam.values(), dtype=float)

    @property
    def chk_degrees(self) -> np.ndarray:
        return np.fromiter(self.eta.keys(), dtype=int)

    @property
    def chk_edge_fractions(self) -> np.ndarray:
        return np.fromiter(self.eta.values(), dtype=float)

    @property
    def var_node_fractions(self) -> np.ndarray:
        """Lambda_i = (lambda_i / i) / sum_j (lambda_j / j)."""
        w = self.var_edge_fractions / self.var_degrees
        return w / w.sum()

    @property
    def chk_node_fractions(self) -> np.ndarray:
        w = self.chk_edge_fractions / self.chk_degrees
        return w / w.sum()

    @property
    def dv_max(self) -> int:
        return max(self.lam)

    @property
    def dc_max(self) -> int:
        return max(self.eta)

    @property
    def design_rate(self) -> float:
        """Code rate 1 - (sum eta_j/j) / (sum lambda_i/i)."""
        v = float(np.sum(self.var_edge_fractions / self.var_degrees))
        c = float(np.sum(self.chk_edge_fractions / self.chk_degrees))
        return 1.0 - c / v


_RANGE = re.compile(r"^\s*(\d+)\s*(?::\s*(\d+)\s*:\s*(\d+))?\s*$")


def parse_degree_set(text: str) -> tuple[int, ...]:
    """Parse ``"2:1:30, 35:5:50"`` (start:step:stop, inclusive) into sorted degrees."""
    degrees: set[int] = set()
    for part in text.split(","):
        if not part.strip():
            continue
        m = _RANGE.match(part)
        if m is None:
            raise ValueError(f"cannot parse degree range {part.strip()!r}")
        start = int(m.group(1))
        if m.group(2) is None:
            degrees.add(start)
            continue
        step, stop = int(m.group(2)), int(m.group(3))
        if step <= 0:
            raise ValueError(f"degree range {part.strip()!r} needs a positive step")
        degrees.update(range(start, stop + 1, step))
    if not degrees:
        raise ValueError("empty degree set")
    return tuple(sorted(degrees))


class OptimizerSettings(BaseModel):
    """Knobs of the EXIT-matching LP and its outer loop."""

    model_config = ConfigDict(frozen=True)

    degrees: tuple[int, ...] = Field(default_factory=lambda: parse_degree_set("2:1:30,35:5:50"))
    eta_candidates: tuple[dict[int, float], ...] = ({3: 1.0},)
    rho_points: int = Field(256, ge=2)
    rho_span: float = Field(4.0, ge=1.0)
    iev_points: int = Field(128, ge=2)
    iev_cap: float = Field(0.999, gt=0.0, lt=1.0)
    max_trials: int = Field(100, ge=1)
    stop_eps: float = Field(1e-3, gt=0.0)
    lp_margin: float = Field(1e-4, gt=0.0)
    allow_degree_one: bool = False

    @model_validator(mode="after")
    def _degree_set_valid(self) -> "OptimizerSettings":
        if not self.degrees:
            raise ValueError("degrees is empty")
        if min(self.degrees) < 1:
            raise ValueError("variable degrees must be >= 1")
        if 1 in self.degrees and not self.allow_degree_one:
            raise ValueError("degree 1 is excluded unless allow_degree_one is set")
        for eta in self.eta_candidates:
            _check_distribution("eta", eta)
        return self

    @property
    def dv_max(self) -> int:
        return max(self.degrees)
