"""Command-line entry point: ``uavrelay run | sweep | validate | generate``.

``run`` plans one scenario and writes ``report.json``, ``trace.csv`` and
``trajectory.svg`` to ``--out-dir``.  ``sweep`` runs a sweep file and writes
``results.csv`` and ``timings.csv``.  ``validate`` runs the self-check suites
and exits nonzero if any check fails.  ``generate`` writes a seeded random
scenario file.

Exit codes: 0 success, 1 failed checks or runtime error, 2 invalid input.
"""
from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .algorithms import SCHEMES, run_scheme
from .experiments import emit_trajectory_plot, load_sweep, run_sweep
from .scenario import GeneratorConfig, ScenarioError, load_scenario, random_scenario, save_scenario
from .validation import SUITES, run_suite

DEFAULT_SCHEME = {"fd": "FD", "hd": "HD"}


def _fail(message: str, code: int = 2):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _scenario(path, seed):
    try:
        if path is not None:
            return load_scenario(path)
        return random_scenario(seed)
    except ScenarioError as exc:
        _fail(str(exc))


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log solver progress to stderr.")
def main(verbose):
    """Plan UAV relay trajectories, bandwidth, power and cache use."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False),
              help="Scenario YAML file; a seeded random scenario is used when omitted.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the random scenario.")
@click.option("--scheme", type=click.Choice(sorted(SCHEMES)), help="Planner scheme; defaults from --duplex.")
@click.option("--duplex", type=click.Choice(["fd", "hd"]), default=None,
              help="Duplex mode; defaults to the scenario's.")
@click.option("--mode", type=click.Choice(["serve", "rate"]), default="serve", show_default=True)
@click.option("--threshold", type=float, default=None,
              help="Rate mode: minimum number of served devices (defaults to the serve result).")
@click.option("--qos-rate", type=float, default=None,
              help="Minimum full-band rate per active slot in bits/s; overrides the scenario value.")
@click.option("--out-dir", type=click.Path(file_okay=False), default="out", show_default=True)
def run(scenario_path, seed, scheme, duplex, mode, threshold, qos_rate, out_dir):
    """Plan a single scenario."""
    import dataclasses

    scen = _scenario(scenario_path, seed)
    if qos_rate is not None:
        scen = dataclasses.replace(scen, qos_threshold=qos_rate)
    if scheme is None:
        scheme = DEFAULT_SCHEME[(duplex or scen.duplex).lower()]
    elif duplex is not None and SCHEMES[scheme][0] != duplex.upper():
        _fail(f"scheme {scheme} is {SCHEMES[scheme][0]}, which conflicts with --duplex {duplex}")
    if threshold is not None and not 0 <= threshold <= scen.n_devices:
        _fail(f"--threshold must lie in [0, {scen.n_devices}]")
    rep = run_scheme(scen, scheme, mode, threshold=threshold)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep.to_json(out / "report.json")
    rep.write_trace_csv(out / "trace.csv")
    emit_trajectory_plot(rep, scen, out / "trajectory.svg")
    save_scenario(scen, out / "scenario.yaml")
    click.echo(f"{scheme} {mode}: status={rep.status} served={rep.served}/{scen.n_devices} "
               f"throughput={rep.throughput:.6g} bits iterations={len(rep.trace)} "
               f"max_residual={rep.check.max_residual:.2e}")
    click.echo(f"wrote {out}/report.json, trace.csv, trajectory.svg, scenario.yaml")


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Sweep YAML file.")
@click.option("--seed", "seeds", type=int, multiple=True, help="Override the sweep seeds (repeatable).")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default="out", show_default=True)
def sweep(spec_path, seeds, workers, out_dir):
    """Run a parameter sweep and write CSV tables."""
    import dataclasses

    try:
        spec = load_sweep(spec_path)
        if seeds:
            spec = dataclasses.replace(spec, seeds=tuple(seeds))
    except ScenarioError as exc:
        _fail(str(exc))
    rows = run_sweep(spec, workers=max(1, workers), out_dir=out_dir)
    errors = sum(1 for r in rows if r["status"].startswith("error"))
    click.echo(f"{len(rows)} rows ({errors} errors) -> {Path(out_dir) / 'results.csv'}")


@main.command()
@click.option("--suite", type=click.Choice(["all", *SUITES]), default="all", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def validate(suite, seed):
    """Run the bound, surrogate and constant self-checks."""
    checks = run_suite(suite, seed=seed)
    for c in checks:
        click.echo(c.line())
    failed = sum(not c.passed for c in checks)
    click.echo(f"{len(checks) - failed}/{len(checks)} checks passed")
    sys.exit(1 if failed else 0)


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--devices", type=int, default=None, help="Number of devices.")
@click.option("--slots", type=int, default=None, help="Number of time slots.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def generate(seed, devices, slots, out_path):
    """Write a seeded random scenario file."""
    cfg = GeneratorConfig()
    try:
        if devices is not None:
            cfg = cfg.replace(n_devices=devices)
        if slots is not None:
            cfg = cfg.replace(n_slots=slots)
        scen = random_scenario(seed, cfg)
    except (ScenarioError, ValueError) as exc:
        _fail(str(exc))
    save_scenario(scen, out_path)
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
