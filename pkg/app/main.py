"""
Command-line entrypoint for the IDMA workbench.

    python -m app.main [global flags] <subcommand> [flags]

Exit codes: 0 success, 1 numeric failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import structlog
from dotenv import load_dotenv
from pydantic import ValidationError

from app.cli import COMMANDS
from app.cli.common import RunContext
from app.core.config import get_settings
from app.core.errors import NumericError, WorkbenchError
from app.core.logging import configure_logging

logger = structlog.get_logger(__name__)

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="idma-wb", description=f"{settings.APP_NAME} {settings.VERSION}")
    parser.add_argument("--config", help="system document (TOML)")
    parser.add_argument("--preset", help="named reference system (case1, case2, case3, highrate, llrhist)")
    parser.add_argument("--seed", type=int, help="64-bit seed (overrides run.seed)")
    parser.add_argument("--out", help=f"output root (default: {settings.OUT_DIR})")
    parser.add_argument("--threads", type=int, help="worker threads (fallback: IDMA_WB_THREADS)")
    parser.add_argument("--tag", help="suffix for the run directory name")
    parser.add_argument("--plots", action="store_true", help="also render PNG panels")
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--log-json", action="store_true")

    subparsers = parser.add_subparsers(dest="command", required=True)
    # ----- Subcommands ------------------------------------------------------------
    for module in COMMANDS:
        module.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    settings = get_settings()
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or settings.LOG_LEVEL, json=args.log_json or settings.LOG_JSON)

    # ----- Error handlers ---------------------------------------------------------
    ctx: Optional[RunContext] = None
    try:
        ctx = RunContext.create(args, settings)
        code = args.handler(ctx)
    except NumericError as e:
        logger.error("run.numeric_failure", error_type=type(e).__name__, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_NUMERIC
    except (WorkbenchError, ValidationError) as e:
        logger.error("run.usage_error", error_type=type(e).__name__, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_USAGE
    if ctx is not None:
        ctx.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
