# app/core/config.py
from __future__ import annotations

import os
from functools import lru_cache
from typing import Any

import tomli_w
from pydantic import Field, ValidationError
from pydantic_settings import (
    BaseSettings,
    SettingsConfigDict,
    PydanticBaseSettingsSource,
)

from app.core.errors import ConfigError
from app.models.system import MimoConfig, Modulation, SystemConfig

# toml loader (py311+ has tomllib)
try:
    import tomllib  # type: ignore[attr-defined]
except Exception:  # pragma: no cover
    import tomli as tomllib  # type: ignore


SETTINGS_FILE = "app_settings.toml"

# lowercase TOML keys -> Settings field names
_SETTINGS_KEYS = {
    "app_name": "APP_NAME",
    "version": "VERSION",
    "out_dir": "OUT_DIR",
    "threads": "THREADS",
    "log_level": "LOG_LEVEL",
    "log_json": "LOG_JSON",
    "max_trials": "MAX_TRIALS",
    "stop_eps": "STOP_EPS",
    "lp_margin": "LP_MARGIN",
    "rho_points": "RHO_POINTS",
    "iev_points": "IEV_POINTS",
    "block_length": "BLOCK_LENGTH",
    "max_outer": "MAX_OUTER",
    "target_errors": "TARGET_ERRORS",
    "block_budget": "BLOCK_BUDGET",
    "clip_llr": "CLIP_LLR",
}


class TOMLSettingsSource(PydanticBaseSettingsSource):
    """
    Read app_settings.toml and emit a flat dict of Settings fields.
    Sections [app], [run], [optimizer] and [simulation] are merged; keys may be
    written in lowercase.
    """

    def __init__(self, settings_cls, file_path: str = SETTINGS_FILE):
        super().__init__(settings_cls)
        self.file_path = file_path
        self._cache: dict[str, Any] | None = None

    def _load_raw(self) -> dict[str, Any]:
        if self._cache is not None:
            return self._cache
        data: dict[str, Any] = {}
        if os.path.exists(self.file_path):
            with open(self.file_path, "rb") as f:
                raw = tomllib.load(f)
            for section in ("app", "run", "optimizer", "simulation"):
                sec = raw.get(section, {})
                if isinstance(sec, dict):
                    data.update(sec)
            for k, v in raw.items():
                if isinstance(v, (str, int, float, bool)):
                    data[k] = v
        self._cache = data
        return data

    def __call__(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for k, v in self._load_raw().items():
            key = _SETTINGS_KEYS.get(k, k)
            if key in self.settings_cls.model_fields:
                out[key] = v
        return out

    def get_field_value(self, field, field_name):
        blob = self()
        key = field.alias or field_name
        if key in blob:
            return blob[key], field, field_name
        if key.upper() in blob:
            return blob[key.upper()], field, field_name
        return None, field, field_name


class Settings(BaseSettings):
    # --- App ---
    APP_NAME: str = Field("IDMA Workbench")
    VERSION: str = Field("0.3.0")

    # --- Runs ---
    OUT_DIR: str = Field("runs")
    THREADS: int = Field(1, ge=1)
    LOG_LEVEL: str = Field("INFO")
    LOG_JSON: bool = Field(False)

    # --- Code design ---
    MAX_TRIALS: int = Field(100, ge=1)
    STOP_EPS: float = Field(1e-3, gt=0)
    LP_MARGIN: float = Field(1e-4, gt=0)
    RHO_POINTS: int = Field(256, ge=2)
    IEV_POINTS: int = Field(128, ge=2)

    # --- Link simulation ---
    BLOCK_LENGTH: int = Field(32768, ge=8)
    MAX_OUTER: int = Field(1000, ge=1)
    TARGET_ERRORS: int = Field(100, ge=1)
    BLOCK_BUDGET: int = Field(1000, ge=1)
    CLIP_LLR: float = Field(40.0, gt=0)

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="IDMA_WB_",
        case_sensitive=True,
        extra="ignore",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls,
        init_settings,
        env_settings,
        dotenv_settings,
        file_secret_settings,
    ):
        # Priority: init kwargs -> OS env -> .env -> TOML -> secrets
        toml_source = TOMLSettingsSource(settings_cls, file_path=SETTINGS_FILE)
        return (init_settings, env_settings, dotenv_settings, toml_source, file_secret_settings)


@lru_cache
def get_settings() -> Settings:
    return Settings()


settings = get_settings()


# -----------------------------------------------------------------------------
# System documents
# -----------------------------------------------------------------------------
# model field -> dotted document key
_DOC_KEYS = {
    "K": "users.K",
    "g": "users.g",
    "noise_var": "channel.noise_var",
    "modulation": "channel.modulation",
    "seed": "run.seed",
    "H": "mimo.H",
    "P": "mimo.P",
}


def _doc_key(loc: tuple) -> str:
    if not loc:
        return ""
    key = _DOC_KEYS.get(str(loc[0]), str(loc[0]))
    for part in loc[1:]:
        key += f"[{part}]" if isinstance(part, int) else f".{part}"
    return key


def _raise_config_error(exc: ValidationError) -> None:
    err = exc.errors()[0]
    msg = str(err.get("msg", "invalid"))
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]
    raise ConfigError(_doc_key(tuple(err.get("loc", ()))), msg) from exc


def _table(doc: dict[str, Any], name: str) -> dict[str, Any]:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a table")
    return sec


def load_config(text: str) -> SystemConfig | MimoConfig:
    """Parse a TOML system document into a validated config.

    Documents with a ``[mimo]`` table produce a :class:`MimoConfig`; all others a
    :class:`SystemConfig`. Defaults: ``channel.modulation = "QPSK"``,
    ``run.seed = 0``.

    Raises
    ------
    ConfigError
        On TOML syntax errors, missing keys, or invariant violations. The error
        names the offending document key.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("", f"malformed document: {e}") from e

    users = _table(doc, "users")
    channel = _table(doc, "channel")
    run = _table(doc, "run")
    mimo = _table(doc, "mimo")

    if "noise_var" not in channel:
        raise ConfigError("channel.noise_var", "missing")
    try:
        if mimo:
            for key in ("H", "P"):
                if key not in mimo:
                    raise ConfigError(f"mimo.{key}", "missing")
            return MimoConfig(H=mimo["H"], P=mimo["P"], noise_var=channel["noise_var"], seed=run.get("seed", 0))
        for key in ("K", "g"):
            if key not in users:
                raise ConfigError(f"users.{key}", "missing")
        return SystemConfig(
            K=users["K"],
            g=users["g"],
            noise_var=channel["noise_var"],
            modulation=channel.get("modulation", Modulation.QPSK.value),
            seed=run.get("seed", 0),
        )
    except ValidationError as e:
        _raise_config_error(e)
        raise  # unreachable


def config_document(cfg: SystemConfig | MimoConfig) -> dict[str, Any]:
    if isinstance(cfg, MimoConfig):
        return {
            "channel": {"noise_var": cfg.noise_var},
            "run": {"seed": cfg.seed},
            "mimo": {
                "H": [[[list(z) for z in row] for row in Hk] for Hk in cfg.H],
                "P": list(cfg.P),
            },
        }
    return {
        "users": {"K": cfg.K, "g": list(cfg.g)},
        "channel": {"noise_var": cfg.noise_var, "modulation": cfg.modulation.value},
        "run": {"seed": cfg.seed},
    }


def dump_config(cfg: SystemConfig | MimoConfig) -> str:
    """Serialize a config back into a TOML document accepted by :func:`load_config`."""
    return tomli_w.dumps(config_document(cfg))


def read_config_file(path: str) -> SystemConfig | MimoConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError("", f"cannot read {path}: {e}") from e
    return load_config(text)
