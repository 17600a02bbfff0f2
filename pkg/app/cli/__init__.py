"""Subcommand modules; each exposes ``register(subparsers)`` and a ``run(ctx)`` handler."""
from app.cli import evolve, optimize, path, pipeline, rates, report, simulate

COMMANDS = (rates, path, optimize, evolve, simulate, pipeline, report)
