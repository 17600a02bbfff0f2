"""Shared plumbing for the subcommands: run directories, inputs, persistence, manifests."""
from __future__ import annotations

import argparse
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import pandas as pd
import structlog
from pydantic import ValidationError

from app.core.config import Settings, config_document, read_config_file
from app.core.errors import ConfigError, PathError
from app.models.path import MsePath
from app.models.profile import DegreeProfile
from app.models.results import RunManifest
from app.models.system import MimoConfig, SystemConfig
from app.services.pathfinder import straight_line_path
from app.services.report import write_json
from app.services.scenarios import Scenario, get_preset

logger = structlog.get_logger(__name__)

FLOAT_FORMAT = "%.10g"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunContext:
    """One CLI invocation: where it writes, what it read, what it produced."""

    subcommand: str
    args: argparse.Namespace
    settings: Settings
    out_dir: Path
    seed: int
    threads: int
    plots: bool = False
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)
    started: float = field(default_factory=time.perf_counter)

    @classmethod
    def create(cls, args: argparse.Namespace, settings: Settings) -> "RunContext":
        seed = int(args.seed) if args.seed is not None else 0
        threads = int(args.threads) if args.threads is not None else settings.THREADS
        name = f"{args.command}-{seed}" + (f"-{args.tag}" if args.tag else "")
        out_dir = Path(args.out or settings.OUT_DIR) / name
        out_dir.mkdir(parents=True, exist_ok=True)
        return cls(subcommand=args.command, args=args, settings=settings, out_dir=out_dir, seed=seed,
                   threads=max(1, threads), plots=bool(args.plots))

    # --- inputs --------------------------------------------------------------
    def record_input(self, label: str, path: str | Path) -> None:
        self.inputs[label] = sha256_file(path)

    def scenario(self) -> Optional[Scenario]:
        return get_preset(self.args.preset) if self.args.preset else None

    def system(self) -> SystemConfig | MimoConfig:
        """Config from ``--config`` (or the preset), with ``--seed`` applied when given."""
        if self.args.config:
            cfg = read_config_file(self.args.config)
            self.record_input("config", self.args.config)
        elif self.args.preset:
            cfg = get_preset(self.args.preset).config
        else:
            raise ConfigError("--config", "a system document (--config) or --preset is required")
        if self.args.seed is not None:
            cfg = cfg.model_copy(update={"seed": int(self.args.seed)})
        self.seed = cfg.seed
        self.config = config_document(cfg)
        return cfg

    def siso(self) -> SystemConfig:
        cfg = self.system()
        if not isinstance(cfg, SystemConfig):
            raise ConfigError("mimo", f"the {self.subcommand} subcommand needs a single-antenna system")
        return cfg

    def path_for(self, K: int, path_file: Optional[str]) -> MsePath:
        """``--path`` file, else the preset path, else the straight line."""
        if path_file:
            path = load_path_file(path_file)
            self.record_input("path", path_file)
        elif self.scenario() is not None:
            path = self.scenario().path
        else:
            path = straight_line_path(K)
        if path.K != K:
            raise PathError(f"path has {path.K} coordinates, config has K={K}")
        return path

    def profiles_for(self, cfg: SystemConfig, profiles_file: Optional[str]) -> list[DegreeProfile]:
        """``--profiles`` file, else the preset's reference profiles."""
        if profiles_file:
            profiles = load_profiles(profiles_file)
            self.record_input("profiles", profiles_file)
        elif self.scenario() is not None and self.scenario().reference_lam:
            sc = self.scenario()
            profiles = [sc.reference_profile(k) for k in range(sc.config.K)]
        else:
            raise ConfigError("--profiles", "a profile file (--profiles) or a preset with profiles is required")
        if len(profiles) != cfg.K:
            raise ConfigError("--profiles", f"{len(profiles)} profiles for K={cfg.K} users")
        return profiles

    # --- outputs -------------------------------------------------------------
    def write_csv(self, name: str, df: pd.DataFrame) -> Path:
        path = self.out_dir / name
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        self.outputs.append(name)
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        path = write_json(self.out_dir / name, payload)
        self.outputs.append(name)
        return path

    def plot(self, fn: Callable[..., Path], *args) -> None:
        if not self.plots:
            return
        try:
            path = fn(self.out_dir, *args)
            self.outputs.append(path.name)
        except Exception as e:
            logger.warning("plot.failed", chart=fn.__name__, error=str(e))

    def finish(self) -> RunManifest:
        flags = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("handler", "command")}
        manifest = RunManifest(
            subcommand=self.subcommand,
            config=self.config,
            flags=flags,
            seed=self.seed,
            inputs=dict(sorted(self.inputs.items())),
            outputs=sorted(set(self.outputs)),
            wall_clock_s=round(time.perf_counter() - self.started, 3),
            version=self.settings.VERSION,
        )
        write_json(self.out_dir / "manifest.json", manifest.model_dump(mode="json"))
        logger.info("run.finished", subcommand=self.subcommand, out_dir=str(self.out_dir),
                    outputs=len(manifest.outputs), wall_clock_s=manifest.wall_clock_s)
        return manifest


# -----------------------------------------------------------------------------
# Flag parsing
# -----------------------------------------------------------------------------
def parse_floats(flag: str, text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(flag, f"expects comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigError(flag, "is empty")
    return values


def parse_ints(flag: str, text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(flag, f"expects comma-separated integers, got {text!r}") from None


def parse_users(flag: str, text: str, K: int) -> tuple[int, ...]:
    """1-based user list on the command line, 0-based inside."""
    users = tuple(u - 1 for u in parse_ints(flag, text))
    for u in users:
        if not 0 <= u < K:
            raise ConfigError(flag, f"user {u + 1} outside 1..{K}")
    return users


def parse_eta(flag: str, text: str) -> tuple[dict[int, float], ...]:
    """``"3,4,5"`` -> single-degree check distributions eta_3, eta_4, eta_5."""
    return tuple({d: 1.0} for d in parse_ints(flag, text))


def _read_json(flag: str, text_or_file: str) -> Any:
    p = Path(text_or_file)
    try:
        raw = p.read_text(encoding="utf-8") if p.exists() else text_or_file
        return json.loads(raw)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(flag, f"is not valid JSON ({e})") from e


def parse_template(text: str) -> tuple[tuple[Optional[float], ...], ...]:
    """Inline JSON or file: rows of numbers and ``null`` (free coordinates)."""
    data = _read_json("--template", text)
    if not isinstance(data, list) or not all(isinstance(row, list) for row in data):
        raise ConfigError("--template", "must be a list of rows")
    try:
        return tuple(tuple(None if v is None else float(v) for v in row) for row in data)
    except (TypeError, ValueError):
        raise ConfigError("--template", "entries must be numbers or null") from None


def load_path_file(path: str) -> MsePath:
    """JSON with ``{"breakpoints": [[...], ...]}`` or a bare list of breakpoints."""
    data = _read_json("--path", path)
    points = data.get("breakpoints") if isinstance(data, dict) else data
    if not isinstance(points, list):
        raise PathError(f"{path}: no breakpoint list found")
    try:
        return MsePath.from_points(points)
    except (TypeError, ValueError) as e:
        if isinstance(e, PathError):
            raise
        raise PathError(f"{path}: {e}") from e


def load_profiles(path: str) -> list[DegreeProfile]:
    """JSON list of ``{"lam": {...}, "eta": {...}}`` (extra keys, e.g. from ``optimize``, are ignored)."""
    data = _read_json("--profiles", path)
    if isinstance(data, dict):
        data = data.get("profiles")
    if not isinstance(data, list):
        raise ConfigError("--profiles", "expected a list of profiles")
    try:
        return [DegreeProfile(lam=item["lam"], eta=item["eta"]) for item in data]
    except (KeyError, TypeError) as e:
        raise ConfigError("--profiles", f"entry lacks lam/eta ({e})") from e
    except ValidationError as e:
        raise ConfigError("--profiles", e.errors()[0].get("msg", "invalid profile")) from e
