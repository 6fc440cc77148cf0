"""Parameter sweeps, result tables and trajectory plots.

A sweep runs every scheme on every (value, seed) pair and writes one CSV
row per run.  Rows are computed in worker processes and assembled in
(scheme, value, seed) order, so the table does not depend on completion
order.  Wall-clock times go to a separate ``timings.csv`` to keep the main
table byte-identical across repeated runs.

Sweep files are YAML::

    base:
      generator: {n_devices: 5, n_slots: 20}   # or  scenario: path/to/file.yaml
    parameter: uav.cache_cap
    values: [200 Mbit, 400 Mbit, 800 Mbit]
    schemes: [FD, HD, BFD1]
    seeds: [0, 1]
    mode: serve            # or rate
    threshold: null        # served-count floor for rate mode
"""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .algorithms import SCHEMES, PlannerConfig, RunReport, run_scheme
from .scenario import (
    GeneratorConfig,
    Scenario,
    ScenarioError,
    load_scenario,
    noise_from_bandwidth,
    parse_quantity,
    random_scenario,
)

__all__ = [
    "COLUMNS",
    "TIMING_COLUMNS",
    "SWEEPABLE",
    "SweepSpec",
    "load_sweep",
    "apply_parameter",
    "run_sweep",
    "write_rows",
    "emit_trajectory_plot",
]

#: Column order of the sweep table; part of the output contract.
COLUMNS = (
    "scheme", "parameter", "value", "seed", "mode", "status", "served", "served_pct",
    "throughput_bits", "max_throughput_bits", "iterations", "binary_gap", "max_residual",
)
TIMING_COLUMNS = ("scheme", "value", "seed", "wall_time_s")

#: Sweepable parameter -> quantity kind used to parse string values.
SWEEPABLE = {
    "uav.cache_cap": "bits",
    "uav.p_max": "power",
    "uav.v_max": "speed",
    "uav.slot_len": "time",
    "p_dev_max": "power",
    "channel.bandwidth": "frequency",
    "channel.rsi_coeff": "gain",
    "channel.pathloss_exp": "gain",
    "channel.rician_factor": "gain",
    "penalty": "gain",
    "data_scale": "gain",
    "deadline_shift": "gain",
    "n_devices": "gain",
}


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: a base scenario source, a parameter axis, schemes and seeds.

    ``generator`` holds :class:`GeneratorConfig` overrides; each seed draws a
    fresh placement.  With ``scenario_path`` set, the file is used for every
    seed and the seed only labels the row.
    """

    parameter: str
    values: tuple
    schemes: tuple = ("FD",)
    seeds: tuple = (0,)
    mode: str = "serve"
    threshold: float | None = None
    generator: dict = field(default_factory=dict)
    scenario_path: str | None = None

    def __post_init__(self):
        if self.parameter not in SWEEPABLE:
            raise ScenarioError("parameter", f"{self.parameter!r} is not sweepable; choose from {sorted(SWEEPABLE)}")
        if len(self.values) == 0:
            raise ScenarioError("values", "need at least one value")
        if len(self.seeds) == 0:
            raise ScenarioError("seeds", "need at least one seed")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ScenarioError("schemes", f"unknown scheme {s!r}")
        if self.mode not in ("serve", "rate"):
            raise ScenarioError("mode", f"must be serve or rate, got {self.mode!r}")
        bad = set(self.generator) - {f.name for f in dataclasses.fields(GeneratorConfig)}
        if bad:
            raise ScenarioError("base.generator", f"unknown keys {sorted(bad)}")

    def base_scenario(self, seed: int) -> Scenario:
        if self.scenario_path is not None:
            return load_scenario(self.scenario_path)
        gen = dict(self.generator)
        for key in ("data_size_range", "n_start_range", "n_end_range", "gateway", "start", "end"):
            if key in gen and gen[key] is not None:
                gen[key] = tuple(gen[key])
        return random_scenario(seed, GeneratorConfig(**gen))

    def numeric_values(self) -> list[float]:
        kind = SWEEPABLE[self.parameter]
        return [parse_quantity(v, kind) for v in self.values]


SWEEP_KEYS = {"base", "parameter", "values", "schemes", "seeds", "mode", "threshold"}


def load_sweep(path) -> SweepSpec:
    """Parse a sweep file (see the module docstring)."""
    path = Path(path)
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ScenarioError("<root>", "expected a mapping")
    unknown = set(data) - SWEEP_KEYS
    if unknown:
        raise ScenarioError("<root>", f"unknown keys {sorted(unknown)}")
    base = data.get("base", {}) or {}
    if not isinstance(base, dict) or set(base) - {"scenario", "generator"}:
        raise ScenarioError("base", "expected a mapping with 'scenario' or 'generator'")
    scen = base.get("scenario")
    if scen is not None and not os.path.isabs(scen):
        scen = str(path.parent / scen)
    for key in ("parameter", "values"):
        if key not in data:
            raise ScenarioError(key, "missing")
    return SweepSpec(
        parameter=data["parameter"],
        values=tuple(data["values"]),
        schemes=tuple(data.get("schemes", ("FD",))),
        seeds=tuple(int(s) for s in data.get("seeds", (0,))),
        mode=data.get("mode", "serve"),
        threshold=data.get("threshold"),
        generator=dict(base.get("generator", {}) or {}),
        scenario_path=scen,
    )


def apply_parameter(scenario: Scenario, name: str, value: float) -> Scenario:
    """Return `scenario` with the swept parameter set to `value`.

    ``data_scale`` multiplies every data size; ``deadline_shift`` adds a
    number of slots to every ``n_end`` (clipped to the horizon);
    ``n_devices`` keeps the first devices.  Changing the bandwidth also
    updates the thermal noise power.
    """
    if name not in SWEEPABLE:
        raise ScenarioError("parameter", f"{name!r} is not sweepable")
    if name == "data_scale":
        devs = tuple(dataclasses.replace(d, data_size=d.data_size * value) for d in scenario.devices)
        return scenario.replace(devices=devs)
    if name == "deadline_shift":
        n = scenario.n_slots
        devs = tuple(dataclasses.replace(d, n_end=int(min(n, max(d.n_start, d.n_end + round(value)))))
                     for d in scenario.devices)
        return scenario.replace(devices=devs)
    if name == "n_devices":
        k = int(value)
        if not 1 <= k <= scenario.n_devices:
            raise ScenarioError("n_devices", f"must lie in [1, {scenario.n_devices}]")
        return scenario.replace(devices=scenario.devices[:k])
    if name == "p_dev_max":
        return scenario.replace(p_dev_max=(float(value),) * scenario.n_slots)
    if name == "penalty":
        return scenario.replace(penalty=float(value))
    section, attr = name.split(".")
    if section == "uav":
        v = (float(value),) * scenario.n_slots if attr == "p_max" else float(value)
        return scenario.replace(uav=dataclasses.replace(scenario.uav, **{attr: v}))
    changes = {attr: float(value)}
    if attr == "bandwidth":
        changes["noise_power"] = noise_from_bandwidth(float(value))
    return scenario.replace(channel=dataclasses.replace(scenario.channel, **changes))


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _max_throughput(rep: RunReport) -> float:
    return float(np.minimum(rep.check.delivered_ul, rep.check.delivered_dl).sum())


def _run_row(spec: SweepSpec, scheme: str, value: float, seed: int, config: PlannerConfig | None):
    t0 = time.perf_counter()
    row = {c: "" for c in COLUMNS}
    row.update(scheme=scheme, parameter=spec.parameter, value=value, seed=seed, mode=spec.mode)
    try:
        scen = apply_parameter(spec.base_scenario(seed), spec.parameter, value)
        rep = run_scheme(scen, scheme, spec.mode, threshold=spec.threshold, config=config)
        row.update(
            status=rep.status, served=rep.served, served_pct=100.0 * rep.served / scen.n_devices,
            throughput_bits=rep.throughput, max_throughput_bits=_max_throughput(rep),
            iterations=rep.iterations, binary_gap=rep.binary_gap, max_residual=rep.max_residual,
        )
    except Exception as exc:  # recorded per row; the sweep continues
        row.update(status=f"error: {type(exc).__name__}: {exc}".replace("\n", " "),
                   served=0, served_pct=float("nan"), throughput_bits=float("nan"),
                   max_throughput_bits=float("nan"), iterations=0, binary_gap=float("nan"),
                   max_residual=float("nan"))
    return row, time.perf_counter() - t0


def _run_task(args):
    return _run_row(*args)


def run_sweep(spec: SweepSpec, *, workers: int = 1, out_dir=None, config: PlannerConfig | None = None):
    """Run every (scheme, value, seed) combination.

    Returns the rows as dicts keyed by :data:`COLUMNS`, ordered by scheme,
    value and seed in the order given by `spec`.  With `out_dir`, writes
    ``results.csv`` and ``timings.csv`` there.
    """
    values = spec.numeric_values()
    tasks = [(spec, s, v, seed, config) for s in spec.schemes for v in values for seed in spec.seeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_run_task, tasks))
    else:
        out = [_run_task(t) for t in tasks]
    rows = [r for r, _ in out]
    timings = [{"scheme": r["scheme"], "value": r["value"], "seed": r["seed"], "wall_time_s": t}
               for r, t in out]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "results.csv").write_text(write_rows(rows, COLUMNS))
        (out_dir / "timings.csv").write_text(write_rows(timings, TIMING_COLUMNS))
    return rows


def write_rows(rows, columns=COLUMNS) -> str:
    """CSV text with a fixed column order and round-trip float formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


# ----------------------------------------------------------------------------
# plots


def emit_trajectory_plot(reports, scenario: Scenario, path) -> Path:
    """Write an SVG with devices, gateway, start/end points and each report's path.

    `reports` is one :class:`RunReport` or a sequence of them.  Every
    element carries an SVG id: ``device-<id>``, ``gateway``, ``start``,
    ``end``, ``path-<scheme>`` (the polyline, one marker per slot) so the
    file can be checked structurally.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if isinstance(reports, RunReport):
        reports = [reports]
    path = Path(path)
    with plt.rc_context({"svg.hashsalt": "uavrelay"}):
        fig, ax = plt.subplots(figsize=(6, 6))
    try:
        pos = scenario.positions
        for d in scenario.devices:
            ax.plot(*d.position, "o", color="tab:gray", ms=6, gid=f"device-{d.id}")
            ax.annotate(str(d.id), d.position, textcoords="offset points", xytext=(4, 4), fontsize=8)
        ax.plot(*scenario.gateway, "s", color="black", ms=9, gid="gateway", label="gateway")
        ax.plot(*scenario.uav.start, "^", color="tab:green", ms=9, gid="start", label="start")
        ax.plot(*scenario.uav.end, "v", color="tab:red", ms=9, gid="end", label="end")
        colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        seen = {}
        for i, rep in enumerate(reports):
            name = rep.scheme if rep.scheme not in seen else f"{rep.scheme}-{i}"
            seen[name] = True
            q = rep.iterate.q
            ax.plot(q[:, 0], q[:, 1], "-", marker=".", ms=5, color=colors[i % len(colors)],
                    gid=f"path-{name}", label=f"{name} ({rep.served} served)")
        pts = np.vstack([pos, [scenario.gateway, scenario.uav.start, scenario.uav.end]]
                        + [r.iterate.q for r in reports])
        pad = 0.05 * max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]), 1.0)
        ax.set_xlim(pts[:, 0].min() - pad, pts[:, 0].max() + pad)
        ax.set_ylim(pts[:, 1].min() - pad, pts[:, 1].max() + pad)
        ax.set_aspect("equal")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        ax.legend(loc="best", fontsize=8)
        path.parent.mkdir(parents=True, exist_ok=True)
        with plt.rc_context({"svg.hashsalt": "uavrelay"}):
            fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return path
