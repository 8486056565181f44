"""Command-line entry point: run, validate, list-experiments.

Exit codes: 0 success, 1 config/schema error, 2 numerical guard tripped.
KDVB_THREADS caps the linear-algebra thread pools when set.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from kdvb.dynamics import BlowUpError
from kdvb.experiments import (
    EXPERIMENTS,
    ConfigError,
    run_experiment,
    validate_config,
)

_GUARDS = (BlowUpError, FloatingPointError, np.linalg.LinAlgError)


def _apply_thread_cap():
    cap = os.environ.get("KDVB_THREADS")
    if not cap:
        return
    try:
        n = max(int(cap), 1)
    except ValueError:
        raise click.ClickException("KDVB_THREADS must be an integer")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=n)
    except ImportError:
        pass


def _load(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        click.echo(f"error: cannot read config: {exc}", err=True)
        sys.exit(1)
    except json.JSONDecodeError as exc:
        click.echo(f"error: config is not valid JSON: {exc}", err=True)
        sys.exit(1)


@click.group()
def main():
    """Numerical laboratory for the stochastic KdV-Burgers equation."""
    _apply_thread_cap()


@main.command()
@click.argument("config", type=click.Path())
def run(config):
    """Run the experiment described by a JSON CONFIG file."""
    cfg = _load(config)
    try:
        manifest = run_experiment(cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    except _GUARDS as exc:
        click.echo(f"numerical guard tripped: {exc}", err=True)
        sys.exit(2)
    click.echo(f"wrote {', '.join(manifest['artifacts'])} and manifest.json "
               f"to {cfg['output_dir']} ({manifest['wall_time_s']:.2f}s)")


@main.command()
@click.argument("config", type=click.Path())
def validate(config):
    """Dry-run schema and regime validation of a JSON CONFIG file."""
    cfg = _load(config)
    try:
        report = validate_config(cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"ok: experiment '{report['experiment']}' "
               f"(n_points={report['n_points']}, dt={report['dt']}, "
               f"seed={report['seed']})")
    for key, val in sorted(report["constants"].items()):
        click.echo(f"  {key} = {val}")


@main.command("list-experiments")
def list_experiments():
    """List the available experiment names."""
    for name in EXPERIMENTS:
        click.echo(name)


if __name__ == "__main__":
    main()
