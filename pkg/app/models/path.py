"""Decoding paths in the MSE vector field.

A path is a piecewise-linear curve through K-dimensional MSE vectors starting
at the all-ones vector (nothing decoded) and ending at the all-zeros vector
(everything decoded). Every coordinate must be nonincreasing along the path.
"""
from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.errors import PathError


class PathViolation(BaseModel):
    """First constraint a candidate path breaks.

    ``index`` is the breakpoint position (0 = start), ``coordinate`` the 0-based
    user; either may be ``None`` for structural problems.
    """

    model_config = ConfigDict(frozen=True)

    reason: str
    index: Optional[int] = None
    coordinate: Optional[int] = None

    def __str__(self) -> str:
        where = []
        if self.index is not None:
            where.append(f"breakpoint {self.index}")
        if self.coordinate is not None:
            where.append(f"user {self.coordinate + 1}")
        return f"{self.reason} ({', '.join(where)})" if where else self.reason


def _check_breakpoints(points: Sequence[Sequence[float]]) -> PathViolation | None:
    if len(points) < 2:
        return PathViolation(reason="a path needs at least a start and an end breakpoint")
    K = len(points[0])
    if K == 0:
        return PathViolation(reason="breakpoints must have at least one coordinate", index=0)
    for i, x in enumerate(points):
        if len(x) != K:
            return PathViolation(reason=f"breakpoint has {len(x)} coordinates, expected {K}", index=i)
        for k, xk in enumerate(x):
            if not math.isfinite(xk) or xk < 0.0 or xk > 1.0:
                return PathViolation(reason=f"coordinate {xk!r} outside [0, 1]", index=i, coordinate=k)
    for k, xk in enumerate(points[0]):
        if xk != 1.0:
            return PathViolation(reason="path must start at the all-ones vector", index=0, coordinate=k)
    last = len(points) - 1
    for k, xk in enumerate(points[last]):
        if xk != 0.0:
            return PathViolation(reason="path must end at the all-zeros vector", index=last, coordinate=k)
    for i in range(1, len(points)):
        prev, cur = points[i - 1], points[i]
        for k in range(K):
            if cur[k] > prev[k]:
                return PathViolation(
                    reason=f"coordinate increases {prev[k]:g} -> {cur[k]:g}", index=i, coordinate=k
                )
        if all(cur[k] == prev[k] for k in range(K)):
            return PathViolation(reason="consecutive breakpoints coincide", index=i)
    return None


class MsePath(BaseModel):
    """Breakpoints x_0 ... x_n of a monotone decoding path."""

    model_config = ConfigDict(frozen=True)

    breakpoints: tuple[tuple[float, ...], ...]

    @model_validator(mode="after")
    def _valid(self) -> "MsePath":
        violation = _check_breakpoints(self.breakpoints)
        if violation is not None:
            raise ValueError(str(violation))
        return self

    @classmethod
    def from_points(cls, points: Iterable[Iterable[float]]) -> "MsePath":
        """Build a path, raising :class:`PathError` with location info on failure."""
        rows = tuple(tuple(float(v) for v in x) for x in points)
        violation = _check_breakpoints(rows)
        if violation is not None:
            raise PathError(str(violation), index=violation.index, coordinate=violation.coordinate)
        return cls(breakpoints=rows)

    @property
    def K(self) -> int:
        return len(self.breakpoints[0])

    @property
    def segments(self) -> int:
        return len(self.breakpoints) - 1

    def as_array(self) -> np.ndarray:
        return np.asarray(self.breakpoints, dtype=float)


def validate_path(path: MsePath | Sequence[Sequence[float]]) -> PathViolation | None:
    """Return ``None`` for a valid path, else the first violated constraint."""
    points = path.breakpoints if isinstance(path, MsePath) else [list(map(float, x)) for x in path]
    return _check_breakpoints(points)


class PathSolveSpec(BaseModel):
    """Inputs of the rate-targeted path solver.

    ``template`` lists the intermediate breakpoints x_1 ... x_{n-1}; ``None``
    marks a free coordinate, a number fixes it. The endpoints are implicit.
    ``anchor`` is an optional starting guess for the free coordinates in
    row-major order; among the many paths reaching a target, the solver returns
    the one closest to it.
    """

    model_config = ConfigDict(frozen=True)

    target: tuple[float, ...]
    template: Optional[tuple[tuple[Optional[float], ...], ...]] = None
    anchor: Optional[tuple[float, ...]] = None
    tol: float = Field(1e-8, gt=0)
    max_starts: int = Field(64, ge=1)
    seed: int = Field(0, ge=0)

    @field_validator("target")
    @classmethod
    def _target_nonnegative(cls, target: tuple[float, ...]) -> tuple[float, ...]:
        if not target:
            raise ValueError("target needs at least one rate")
        for i, r in enumerate(target):
            if not math.isfinite(r) or r < 0:
                raise ValueError(f"target[{i}] must be a finite nonnegative rate")
        return target

    @model_validator(mode="after")
    def _template_shape(self) -> "PathSolveSpec":
        if self.template is None:
            return self
        K = len(self.target)
        for i, row in enumerate(self.template):
            if len(row) != K:
                raise ValueError(f"template row {i + 1} has {len(row)} entries, expected {K}")
            for k, v in enumerate(row):
                if v is not None and not (0.0 <= v <= 1.0):
                    raise ValueError(f"template[{i + 1}][{k}] outside [0, 1]")
        if self.anchor is not None:
            free = sum(v is None for row in self.template for v in row)
            if len(self.anchor) != free:
                raise ValueError(f"anchor has {len(self.anchor)} values for {free} free coordinates")
        return self

    @property
    def K(self) -> int:
        return len(self.target)
