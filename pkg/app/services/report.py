"""Run-directory summaries.

Runs are discovered by scanning the output directory for ``*/manifest.json``.
Readable manifests are grouped by subcommand; anything that fails to parse is
listed under ``unreadable`` instead of aborting the scan.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import structlog
from pydantic import ValidationError

from app.models.results import RunManifest

logger = structlog.get_logger(__name__)

MANIFEST = "manifest.json"


def _entry(run_dir: Path, manifest: RunManifest) -> dict[str, Any]:
    missing = [name for name in manifest.outputs if not (run_dir / name).exists()]
    return {
        "run": run_dir.name,
        "seed": manifest.seed,
        "flags": manifest.flags,
        "outputs": manifest.outputs,
        "missing_outputs": missing,
        "wall_clock_s": manifest.wall_clock_s,
        "version": manifest.version,
    }


def summarize_runs(root: str | Path) -> dict[str, Any]:
    """Consolidated view of every run directory below ``root``.

    Returns
    -------
    dict
        ``{"root": str, "runs": int, "by_subcommand": {name: [entry, ...]}, "unreadable": [path, ...]}``
    """
    root = Path(root)
    by_sub: dict[str, list[dict[str, Any]]] = {}
    unreadable: list[str] = []
    if root.is_dir():
        for path in sorted(root.glob(f"*/{MANIFEST}")):
            try:
                manifest = RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
            except (OSError, ValueError, ValidationError) as e:
                logger.warning("report.unreadable", path=str(path), error=str(e))
                unreadable.append(str(path.parent.name))
                continue
            by_sub.setdefault(manifest.subcommand, []).append(_entry(path.parent, manifest))
    runs = sum(len(v) for v in by_sub.values())
    logger.info("report.scanned", root=str(root), runs=runs, unreadable=len(unreadable))
    return {
        "root": str(root),
        "runs": runs,
        "by_subcommand": dict(sorted(by_sub.items())),
        "unreadable": unreadable,
    }


def write_json(path: str | Path, payload: Any) -> Path:
    """Sorted-key, 2-space JSON so reruns diff cleanly."""
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
