"""``report``: consolidated JSON summary of a run directory."""
from __future__ import annotations

import json

from app.cli.common import RunContext
from app.services.report import summarize_runs


def register(subparsers) -> None:
    p = subparsers.add_parser("report", help="summarize every run under a directory")
    p.add_argument("runs", nargs="?", help="directory to scan (default: --out / OUT_DIR)")
    p.set_defaults(handler=run)


def run(ctx: RunContext) -> int:
    root = ctx.args.runs or ctx.args.out or ctx.settings.OUT_DIR
    summary = summarize_runs(root)
    print(json.dumps(summary, indent=2, sort_keys=True))
    ctx.write_json("summary.json", summary)
    return 0
