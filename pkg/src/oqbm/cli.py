"""Command line interface.

Every subcommand takes the same four options: --config points at a JSON
experiment document, --out names the directory that receives the CSV table
and manifest.json, --seed overrides the seed stored in the document, and
--threads sets the worker count (falling back to the OQBM_THREADS
environment variable, then to 1). Results are byte-identical for a fixed
configuration and seed at any thread count.

Exit codes: 0 when the experiment ran and every declared tolerance passed,
1 when it ran but a tolerance failed, 2 for configuration errors, and 3
when a runtime contract was violated (step-size guards, collapse, capacity).
"""

from __future__ import annotations

import os
import sys

import click

from .config import load_config
from .errors import ConfigError
from .experiments import run_experiment, write_report

_SUBCOMMAND_KINDS = {
    "simulate-oqw": ("oqw-simulation",),
    "simulate-belavkin": ("belavkin-simulation",),
    "solve-lindblad": ("lindblad-solve",),
    "dilate": ("dilation-audit",),
    "converge": ("trajectory-convergence", "channel-convergence"),
    "regimes": ("regime-map",),
    "consistency": ("consistency-audit",),
}


def _resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return threads
    env = os.environ.get("OQBM_THREADS")
    if env is None:
        return 1
    try:
        value = int(env)
    except ValueError:
        raise ConfigError(f"OQBM_THREADS is not an integer: {env!r}", "OQBM_THREADS")
    if value < 1:
        raise ConfigError(f"OQBM_THREADS must be at least 1, got {value}", "OQBM_THREADS")
    return value


def _execute(name: str, config_path: str, out_dir: str, seed, threads) -> None:
    try:
        n_threads = _resolve_threads(threads)
        cfg = load_config(config_path)
        if cfg.kind not in _SUBCOMMAND_KINDS[name]:
            allowed = " or ".join(_SUBCOMMAND_KINDS[name])
            raise ConfigError(f"{name} expects kind {allowed}, got {cfg.kind!r}", "$.kind")
        if seed is not None:
            cfg = cfg.with_seed(seed)
        report = run_experiment(cfg, threads=n_threads)
        paths = write_report(report, out_dir, cfg)
    except ConfigError as exc:
        click.echo(f"configuration error at {exc.path}: {exc.detail}", err=True)
        sys.exit(2)
    except ValueError as exc:
        click.echo(f"runtime contract violation: {exc}", err=True)
        sys.exit(3)
    verdict = "PASS" if report.passed else "FAIL"
    click.echo(
        f"{report.kind}: {verdict} "
        f"({len(report.rows)} rows, {report.wall_clock_s:.2f}s, "
        f"seed {report.seed}, threads {report.threads})"
    )
    click.echo(f"wrote {paths['csv']} and {paths['manifest']}")
    sys.exit(0 if report.passed else 1)


def _register(group: click.Group, name: str, help_text: str) -> None:
    @group.command(name=name, help=help_text)
    @click.option("--config", "config_path", required=True,
                  type=click.Path(exists=True, dir_okay=False),
                  help="JSON experiment document.")
    @click.option("--out", "out_dir", required=True,
                  type=click.Path(file_okay=False),
                  help="Output directory for the CSV table and manifest.")
    @click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None,
                  help="Override the seed stored in the configuration.")
    @click.option("--threads", type=click.IntRange(min=1), default=None,
                  help="Worker threads (default: OQBM_THREADS, then 1).")
    def _cmd(config_path, out_dir, seed, threads, _name=name):
        _execute(_name, config_path, out_dir, seed, threads)


@click.group()
@click.version_option(package_name="oqbm")
def main() -> None:
    """Simulation and verification toolkit for open quantum walks and open
    quantum Brownian motion."""


_register(main, "simulate-oqw",
          "Sample an open quantum walk ensemble and audit the channel duality.")
_register(main, "simulate-belavkin",
          "Run the diffusive trajectory ensemble and record checkpointed moments.")
_register(main, "solve-lindblad",
          "Integrate the density and field equations against the exact semigroup.")
_register(main, "dilate",
          "Audit one-step dilations and the toy Fock register duality.")
_register(main, "converge",
          "Run a trajectory-law or channel-vs-field convergence sweep.")
_register(main, "regimes",
          "Map stationary states and ballistic speeds over a coupling grid.")
_register(main, "consistency",
          "Check record-law and pointer-readout consistency, including a broken instance.")


if __name__ == "__main__":
    main()
