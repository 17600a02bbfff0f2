"""Decoding-path construction.

Canonical paths (straight line, SIC staircases), the rate-targeted nonlinear
path solve, and superposition-coded-modulation (SCM) layer splitting.
"""
from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
import structlog
from scipy import optimize

from app.core.errors import DomainError, InfeasibleTargetError, PathSolveError
from app.models.path import MsePath, PathSolveSpec
from app.models.system import RateTuple, SystemConfig
from app.services.rates import (
    gaussian_rates,
    in_capacity_region,
    region_constraints,
    require_inside,
    sum_rate_capacity,
)

logger = structlog.get_logger(__name__)

LAYER_TOL = 1e-9
POLISH_STEPS = 30
FD_STEP = 1e-7
LIFT_ROUNDS = 60

# scipy's SLSQP wrapper is not re-entrant across threads
_SLSQP_LOCK = threading.Lock()


def straight_line_path(K: int) -> MsePath:
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    return MsePath.from_points([[1.0] * K, [0.0] * K])


def _check_permutation(K: int, order: Sequence[int]) -> list[int]:
    order = [int(u) for u in order]
    if sorted(order) != list(range(K)):
        raise DomainError(f"{order!r} is not a permutation of 0..{K - 1}")
    return order


def sic_corner_path(K: int, order: Sequence[int]) -> MsePath:
    """K-segment staircase: segment j drops user ``order[j]`` from 1 to 0."""
    order = _check_permutation(K, order)
    x = [1.0] * K
    points = [list(x)]
    for k in order:
        x[k] = 0.0
        points.append(list(x))
    return MsePath.from_points(points)


# -----------------------------------------------------------------------------
# Rate-targeted path solve
# -----------------------------------------------------------------------------
def _min_slack(cfg: SystemConfig, rates: np.ndarray, k: int) -> float:
    constraints = region_constraints(cfg, RateTuple(rates=tuple(float(r) for r in rates)))
    return max(min(c.slack for c in constraints if k in c.subset), 0.0)


def lift_to_dominant_face(cfg: SystemConfig, target: RateTuple, rounds: int = LIFT_ROUNDS) -> RateTuple:
    """Raise rates until the sum-rate constraint is tight; the result dominates ``target``.

    Each round hands every user half of its smallest subset slack, which keeps
    the lifted point away from the corner points, then a greedy pass closes
    the remaining gap exactly.
    """
    rates = target.as_array().copy()
    capacity = sum_rate_capacity(cfg)
    for _ in range(rounds):
        if capacity - math.fsum(rates) <= 1e-12:
            break
        for k in range(cfg.K):
            rates[k] += 0.5 * _min_slack(cfg, rates, k)
    for k in range(cfg.K):
        rates[k] += _min_slack(cfg, rates, k)
    return RateTuple(rates=tuple(float(r) for r in rates))


def default_template(cfg: SystemConfig) -> tuple[tuple[Optional[float], ...], ...]:
    """K-1 intermediate rows; row i zeroes the i highest-power users, the rest are free.

    Ties go to the lower index. For g = (1, 2, 4) / 7 this gives
    ((None, None, 0), (None, 0, 0)): user 3 finishes first, then user 2. A
    template that finishes the weakest user first, such as
    ((None, None, 0), (0, None, 0)), has to be passed explicitly.
    """
    order = sorted(range(cfg.K), key=lambda k: (-cfg.g[k], k))
    rows = []
    for i in range(1, cfg.K):
        zeroed = set(order[:i])
        rows.append(tuple(0.0 if k in zeroed else None for k in range(cfg.K)))
    return tuple(rows)


def _default_anchor(template) -> tuple[float, ...]:
    n = len(template) + 1
    return tuple(1.0 - (i + 1) / n for i, row in enumerate(template) for v in row if v is None)


@dataclass(frozen=True)
class _Layout:
    """Affine map from the free coordinates z to the full breakpoint array."""

    base: np.ndarray
    free: tuple[tuple[int, int], ...]

    @classmethod
    def from_template(cls, K: int, template) -> "_Layout":
        rows = [[1.0] * K] + [[0.0 if v is None else float(v) for v in row] for row in template] + [[0.0] * K]
        free = tuple((i + 1, k) for i, row in enumerate(template) for k, v in enumerate(row) if v is None)
        return cls(base=np.asarray(rows, dtype=float), free=free)

    def points(self, z: np.ndarray) -> np.ndarray:
        x = self.base.copy()
        for (i, k), val in zip(self.free, z):
            x[i, k] = val
        return x

    def monotone_system(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, c) with A z + c >= 0 encoding x_i >= x_{i+1} coordinate-wise."""
        n_rows, K = self.base.shape
        pos = {f: j for j, f in enumerate(self.free)}
        A, c = [], []
        for i in range(n_rows - 1):
            for k in range(K):
                row = np.zeros(len(self.free))
                const = 0.0
                for (r, sign) in ((i, 1.0), (i + 1, -1.0)):
                    if (r, k) in pos:
                        row[pos[(r, k)]] += sign
                    else:
                        const += sign * self.base[r, k]
                if row.any():
                    A.append(row)
                    c.append(const)
        if not A:
            return np.zeros((0, len(self.free))), np.zeros(0)
        return np.asarray(A), np.asarray(c)


def _tidy(x: np.ndarray) -> np.ndarray:
    """Clip to the box, remove round-off monotonicity breaks and repeated breakpoints."""
    x = np.minimum.accumulate(np.clip(x, 0.0, 1.0), axis=0)
    keep = [0] + [i for i in range(1, len(x)) if np.any(x[i] != x[i - 1])]
    return x[keep]


@dataclass(frozen=True)
class _StartResult:
    index: int
    z: np.ndarray
    residual: float


class _PathProblem:
    def __init__(self, cfg: SystemConfig, target: np.ndarray, layout: _Layout, anchor: np.ndarray, tol: float):
        self.cfg = cfg
        self.g = cfg.gains
        self.target = target
        self.layout = layout
        self.anchor = anchor
        self.tol = tol
        self.A, self.c = layout.monotone_system()
        self.m = len(layout.free)

    def residual(self, z: np.ndarray) -> np.ndarray:
        rates = gaussian_rates(self.g, self.cfg.noise_var, self.layout.points(z))
        # the last user's rate follows from the sum rate, which every path attains
        return (rates - self.target)[:-1]

    def full_residual(self, z: np.ndarray) -> float:
        rates = gaussian_rates(self.g, self.cfg.noise_var, _tidy(self.layout.points(z)))
        return float(np.max(np.abs(rates - self.target)))

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        J = np.empty((len(self.target) - 1, self.m))
        for j in range(self.m):
            step = np.zeros(self.m)
            step[j] = FD_STEP
            J[:, j] = (self.residual(z + step) - self.residual(z - step)) / (2.0 * FD_STEP)
        return J

    def feasible(self, z: np.ndarray) -> bool:
        if np.any(z < -1e-12) or np.any(z > 1.0 + 1e-12):
            return False
        return not len(self.c) or bool(np.all(self.A @ z + self.c >= -1e-10))

    def solve_from(self, index: int, z0: np.ndarray) -> _StartResult:
        constraints = []
        if len(self.target) > 1:
            constraints.append({"type": "eq", "fun": self.residual, "jac": self.jacobian})
        if len(self.c):
            A, c = self.A, self.c
            constraints.append({"type": "ineq", "fun": lambda z: A @ z + c, "jac": lambda z: A})
        with _SLSQP_LOCK:
            res = optimize.minimize(
                lambda z: 0.5 * float(np.sum((z - self.anchor) ** 2)),
                z0,
                jac=lambda z: z - self.anchor,
                method="SLSQP",
                bounds=[(0.0, 1.0)] * self.m,
                constraints=constraints,
                options={"ftol": 1e-14, "maxiter": 500},
            )
        z = np.clip(res.x, 0.0, 1.0)
        z = self._polish(z)
        if not self.feasible(z):
            return _StartResult(index, z, math.inf)
        return _StartResult(index, z, self.full_residual(z))

    def _polish(self, z: np.ndarray) -> np.ndarray:
        """Minimum-norm Newton steps on the rate residual."""
        r = self.residual(z)
        if not r.size:
            return z
        for _ in range(POLISH_STEPS):
            if np.max(np.abs(r)) <= 1e-13:
                break
            step, *_ = np.linalg.lstsq(self.jacobian(z), -r, rcond=None)
            z_new = np.clip(z + step, 0.0, 1.0)
            r_new = self.residual(z_new)
            if np.max(np.abs(r_new)) >= np.max(np.abs(r)):
                break
            z, r = z_new, r_new
        return z


def _random_starts(rng: np.random.Generator, layout: _Layout, count: int) -> list[np.ndarray]:
    """Free coordinates read off random monotone staircase interpolants."""
    n_rows, K = layout.base.shape
    starts = []
    for _ in range(count):
        x = np.ones((n_rows, K))
        x[1:-1] = -np.sort(-rng.uniform(size=(n_rows - 2, K)), axis=0)
        x[-1] = 0.0
        starts.append(np.array([x[i, k] for i, k in layout.free]))
    return starts


def solve_path_for_rates(cfg: SystemConfig, spec: PathSolveSpec, threads: int = 1) -> MsePath:
    """Breakpoints whose closed-form Gaussian rates equal ``spec.target``.

    Targets outside the capacity region are rejected with the violated subset
    named; interior targets are first lifted to a dominant-face tuple that
    dominates them. Among all solutions the one closest to the anchor is
    preferred; starts run concurrently and the lowest successful start index
    wins.
    """
    if spec.K != cfg.K:
        raise DomainError(f"target has {spec.K} rates, config has K={cfg.K}")
    target = RateTuple(rates=spec.target)
    region = in_capacity_region(cfg, target)
    try:
        require_inside(region)
    except InfeasibleTargetError as e:
        logger.warning("path.target_infeasible", subset=e.subset, total=e.total, bound=e.bound)
        raise
    if not region.on_dominant_face:
        lifted = lift_to_dominant_face(cfg, target)
        logger.info("path.target_lifted", original=spec.target, lifted=lifted.rates)
        target = lifted

    template = spec.template if spec.template is not None else default_template(cfg)
    layout = _Layout.from_template(cfg.K, template)
    m = len(layout.free)
    if 0 < m < cfg.K - 1:
        raise DomainError(f"template has {m} free coordinates, at least {cfg.K - 1} are needed")
    if spec.anchor is not None and spec.template is not None:
        anchor = np.asarray(spec.anchor, dtype=float)
    else:
        anchor = np.asarray(_default_anchor(template), dtype=float)

    problem = _PathProblem(cfg, target.as_array(), layout, anchor, spec.tol)

    if m == 0:
        residual = problem.full_residual(np.zeros(0))
        if residual > spec.tol:
            raise PathSolveError(f"fixed template misses the target by {residual:.3g}", best_residual=residual, starts=0)
        return MsePath.from_points(_tidy(layout.points(np.zeros(0))))

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([spec.seed, 0, 0, 3])))
    starts = [np.clip(anchor, 0.0, 1.0)] + _random_starts(rng, layout, spec.max_starts - 1)
    wave = max(1, threads)
    best: Optional[_StartResult] = None
    with ThreadPoolExecutor(max_workers=wave) as pool:
        for lo in range(0, len(starts), wave):
            batch = list(pool.map(lambda pair: problem.solve_from(*pair), enumerate(starts[lo:lo + wave], start=lo)))
            for result in batch:
                if best is None or result.residual < best.residual:
                    best = result
            winners = [r for r in batch if r.residual <= spec.tol]
            if winners:
                win = winners[0]
                x = _tidy(layout.points(win.z))
                logger.info("path.solved", start=win.index, residual=win.residual, breakpoints=len(x))
                return MsePath.from_points(x)

    residual = best.residual if best is not None else math.inf
    logger.warning("path.solve_failed", starts=len(starts), best_residual=residual)
    raise PathSolveError(
        f"no start reached tolerance {spec.tol:g} (best residual {residual:.3g})",
        best_residual=residual,
        starts=len(starts),
    )


# -----------------------------------------------------------------------------
# SCM layer splitting
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class ScmSplit:
    """Equal-power virtual system produced by splitting each user into layers."""

    config: SystemConfig
    path: MsePath
    layers: tuple[int, ...]
    owner: tuple[int, ...]

    def aggregate(self, per_layer) -> np.ndarray:
        """Sum a per-virtual-user quantity back onto the original users."""
        per_layer = np.asarray(per_layer, dtype=float)
        return np.bincount(np.asarray(self.owner), weights=per_layer, minlength=len(self.layers))


def _largest_layer_power(g: Sequence[float]) -> float:
    fracs = [Fraction(x).limit_denominator(10**6) for x in g if x > 0]
    den = 1
    for f in fracs:
        den = den * f.denominator // math.gcd(den, f.denominator)
    # gcd of p_i/q_i is gcd(p_i * L/q_i) / L for L = lcm(q_i)
    num = 0
    for f in fracs:
        num = math.gcd(num, f.numerator * (den // f.denominator))
    return num / den


def scm_layer_split(cfg: SystemConfig, path: MsePath, layer_power: float) -> ScmSplit:
    """Replace user i by L_i = g_i / layer_power equal-power layers sharing its path coordinate.

    A user with g_i = 0 gets no layers.
    """
    if path.K != cfg.K:
        raise DomainError(f"path has {path.K} coordinates, config has K={cfg.K}")
    if not layer_power > 0:
        raise DomainError(f"layer power must be positive, got {layer_power!r}")
    layers = []
    for k, gk in enumerate(cfg.g):
        ratio = gk / layer_power
        count = round(ratio)
        if (count < 1 and gk > 0.0) or abs(ratio - count) > LAYER_TOL * max(1.0, ratio):
            suggestion = _largest_layer_power(cfg.g)
            raise DomainError(
                f"g[{k}]={gk:.6g} is not an integer multiple of layer power {layer_power:.6g}; "
                f"largest valid layer power is {suggestion:.6g}"
            )
        layers.append(int(count))
    owner = tuple(k for k, count in enumerate(layers) for _ in range(count))
    L = len(owner)
    split_cfg = SystemConfig(
        K=L, g=tuple([float(layer_power)] * L), noise_var=cfg.noise_var, modulation=cfg.modulation, seed=cfg.seed
    )
    expanded = np.repeat(path.as_array(), layers, axis=1)
    logger.info("path.scm_split", users=cfg.K, layers=layers, virtual_users=L)
    return ScmSplit(config=split_cfg, path=MsePath.from_points(expanded), layers=tuple(layers), owner=owner)
