"""Joint trajectory, bandwidth, power and cache planning for a UAV relay.

A rotary-wing UAV collects data from ground devices and forwards it to a
gateway, in full-duplex or half-duplex mode.  The planner maximizes the
number of devices whose data meets its deadline, or the relayed throughput,
by solving a sequence of convex conic subproblems built from surrogates
that are tight at the current iterate.

Typical use::

    from uavrelay import random_scenario, run_scheme
    report = run_scheme(random_scenario(0), "FD", "serve")
    print(report.served, report.throughput)
"""
from .algorithms import (
    SCHEMES,
    PlannerConfig,
    RunReport,
    run_benchmark,
    run_fd_rate,
    run_fd_serve,
    run_hd_rate,
    run_hd_serve,
    run_scheme,
)
from .experiments import SweepSpec, emit_trajectory_plot, load_sweep, run_sweep
from .scenario import (
    ChannelParams,
    Device,
    GeneratorConfig,
    Scenario,
    ScenarioError,
    UavParams,
    load_scenario,
    random_scenario,
    save_scenario,
)
from .subproblems import (
    build_fd_feasibility,
    build_fd_rate,
    build_fd_serve,
    build_hd_feasibility,
    build_hd_rate,
    build_hd_serve,
)

__version__ = "0.1.0"

__all__ = [
    "SCHEMES",
    "ChannelParams",
    "Device",
    "GeneratorConfig",
    "PlannerConfig",
    "RunReport",
    "Scenario",
    "ScenarioError",
    "SweepSpec",
    "UavParams",
    "build_fd_feasibility",
    "build_fd_rate",
    "build_fd_serve",
    "build_hd_feasibility",
    "build_hd_rate",
    "build_hd_serve",
    "emit_trajectory_plot",
    "load_scenario",
    "load_sweep",
    "random_scenario",
    "run_benchmark",
    "run_fd_rate",
    "run_fd_serve",
    "run_hd_rate",
    "run_hd_serve",
    "run_scheme",
    "run_sweep",
    "save_scenario",
]
