"""Command-line entry point: one subcommand per pipeline stage.

Usage: ``timewarp <subcommand> --config run.toml [--seed N] [--dry-run]``.
Exit codes: 0 success, 2 config error, 3 stage failure.
"""

import json
import sys

import click

from .errors import ConfigError, TimewarpError
from .pipeline import STAGES, Pipeline, RunConfig


@click.group()
def main():
    """Temporal preference-data factory and evaluation harness."""


def _pipeline(config, seed, dry_run, output_dir=None) -> Pipeline:
    overrides = {"seed": seed, "output_dir": output_dir}
    if dry_run:
        overrides["dry_run"] = True
    try:
        cfg = RunConfig.from_toml(config, **overrides)
        return Pipeline(cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)


def _run(stage, config, seed, dry_run, output_dir=None):
    pipe = _pipeline(config, seed, dry_run, output_dir)
    try:
        status = pipe.run_stage(stage)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except TimewarpError as exc:
        click.echo(f"stage {stage} failed: {type(exc).__name__}: {exc}", err=True)
        sys.exit(3)
    click.echo(f"{stage}: {status}")


def _stage_command(stage):
    @main.command(name=stage)
    @click.option("--config", required=True, type=click.Path(exists=True), help="Run config (TOML).")
    @click.option("--seed", type=int, default=None, help="Override the run seed.")
    @click.option("--output-dir", type=click.Path(), default=None, help="Override the output directory.")
    @click.option("--dry-run", is_flag=True, default=False, help="Plan media edits without executing.")
    def _cmd(config, seed, output_dir, dry_run, _stage=stage):
        _run(_stage, config, seed, dry_run, output_dir)

    _cmd.__doc__ = f"Run the {stage} stage."
    return _cmd


for _stage in STAGES:
    if _stage != "verify-loss":
        _stage_command(_stage)


@main.command(name="verify-loss")
@click.option("--config", type=click.Path(exists=True), default=None, help="Run config (stage mode).")
@click.option("--batch", type=click.Path(exists=True), default=None,
              help='JSONL of {"lw_t","ll_t","lw_r","ll_r","lambda"}; prints loss/grad JSON.')
@click.option("--seed", type=int, default=None)
@click.option("--output-dir", type=click.Path(), default=None)
@click.option("--dry-run", is_flag=True, default=False)
def verify_loss(config, batch, seed, output_dir, dry_run):
    """Evaluate the preference loss and gradients (stage mode or --batch)."""
    if batch is not None:
        from . import verify
        from .ioutil import read_jsonl

        try:
            rows = [verify.from_jsonl_row(r) for r in read_jsonl(batch)]
            result = {"loss": verify.dpo_loss(rows), "grads": verify.dpo_grad(rows)}
        except TimewarpError as exc:
            click.echo(f"verify-loss failed: {exc}", err=True)
            sys.exit(3)
        click.echo(json.dumps(result, indent=2))
        return
    if config is None:
        click.echo("config error: provide --config or --batch", err=True)
        sys.exit(2)
    _run("verify-loss", config, seed, dry_run, output_dir)


@main.command(name="run-all")
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--output-dir", type=click.Path(), default=None)
@click.option("--dry-run", is_flag=True, default=False)
def run_all(config, seed, output_dir, dry_run):
    """Run every stage in order."""
    pipe = _pipeline(config, seed, dry_run, output_dir)
    for stage in STAGES:
        try:
            status = pipe.run_stage(stage)
        except TimewarpError as exc:
            click.echo(f"stage {stage} failed: {type(exc).__name__}: {exc}", err=True)
            sys.exit(3)
        click.echo(f"{stage}: {status}")


if __name__ == "__main__":
    main()
