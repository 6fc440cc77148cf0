"""Inner-approximation drivers for the serve and rate problems.

Each driver repeats: build the convex subproblem around the current iterate,
solve it, take the solution as the next expansion point.  Because every
surrogate is tight at its expansion point and bounds the true function from
the safe side, the previous solution stays feasible for the next program and
the objective never decreases within a penalty stage.

The penalty weight ``mu`` follows a schedule: an optional ``mu = 0`` warm-up
stage, then the scenario's weight, multiplied by ``mu_growth`` until the
relaxed indicators are binary within ``binary_tol`` or ``mu_max`` is hit.

At exit the indicators are rounded and the plan is re-checked with the true
rate expressions; devices that fail are dropped (see :func:`verify_plan`).
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import link_windows, slot_rates
from .iterate import Iterate, Scaling, straight_line, tight_iterate
from .scenario import Scenario
from .solver import Backend, SolverOptions, solve
from .subproblems import build_program, extract_iterate, inject_iterate
from .surrogates import FLOOR, penalty_value

__all__ = [
    "PlannerConfig",
    "TraceEntry",
    "RunReport",
    "PlanCheck",
    "SCHEMES",
    "init_point",
    "guard_expansion",
    "verify_plan",
    "run_ia",
    "run_fd_serve",
    "run_fd_rate",
    "run_hd_serve",
    "run_hd_rate",
    "run_benchmark",
    "run_scheme",
]

log = logging.getLogger(__name__)

#: scheme name -> (duplex, frozen variable groups)
SCHEMES = {
    "FD": ("FD", ()),
    "HD": ("HD", ()),
    "BFD1": ("FD", ("trajectory",)),
    "BFD2": ("FD", ("allocation",)),
    "BHD1": ("HD", ("trajectory",)),
    "BHD2": ("HD", ("allocation",)),
}


@dataclass(frozen=True)
class PlannerConfig:
    """Iteration controls shared by all drivers."""

    rel_tol: float = 1e-4
    max_iter: int = 100
    warm_start_stage: bool = True
    mu_growth: float = 10.0
    mu_max: float = 1e6
    verify_tol: float = 1e-6
    accept_tol: float = 1e-7
    max_failures: int = 3
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.mu_growth > 1:
            raise ValueError("mu_growth must exceed 1")


@dataclass
class TraceEntry:
    """One subproblem solve.

    ``objective`` is the optimal value of the program; ``at_expansion`` the
    same program's objective at the (injected) expansion point and
    ``true_at_expansion`` the relaxed objective evaluated directly at the
    expansion point.  The last two agree when the surrogates are tight.
    """

    stage: int
    j: int
    mu: float
    objective: float
    at_expansion: float
    true_at_expansion: float
    relaxed_served: float
    binary_gap: float
    status: str
    iterations: int
    solve_time: float
    residual: float
    clamped: int = 0
    backend_status: str = ""

    @property
    def surrogate_gap(self) -> float:
        return abs(self.at_expansion - self.true_at_expansion) / max(1.0, abs(self.true_at_expansion))


@dataclass
class PlanCheck:
    """Outcome of re-checking a rounded plan with the true rates."""

    served: np.ndarray
    dropped: tuple
    delivered_ul: np.ndarray  # bits per device inside its UL window
    delivered_dl: np.ndarray
    residuals: dict

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


@dataclass
class RunReport:
    """Everything a driver returns; serializable via :meth:`to_dict`."""

    scheme: str
    mode: str
    duplex: str
    status: str
    served: int
    lam: np.ndarray
    relaxed_lam: np.ndarray
    binary_gap: float
    throughput: float  # bits, sum over served devices of min(UL, DL) delivery
    objective: float  # last program objective (scaled units, includes penalty)
    objective_unpenalized: float
    final_mu: float
    iterate: Iterate
    check: PlanCheck
    trace: list = field(default_factory=list)
    wall_time: float = 0.0
    threshold: float | None = None

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def max_residual(self) -> float:
        return self.check.max_residual

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "mode": self.mode,
            "duplex": self.duplex,
            "status": self.status,
            "served": self.served,
            "threshold": self.threshold,
            "lam": self.lam.tolist(),
            "relaxed_lam": self.relaxed_lam.tolist(),
            "binary_gap": self.binary_gap,
            "throughput_bits": self.throughput,
            "objective": self.objective,
            "objective_unpenalized": self.objective_unpenalized,
            "final_mu": self.final_mu,
            "iterations": self.iterations,
            "dropped": list(self.check.dropped),
            "residuals": self.check.residuals,
            "max_residual": self.max_residual,
            "delivered_ul_bits": self.check.delivered_ul.tolist(),
            "delivered_dl_bits": self.check.delivered_dl.tolist(),
            "trajectory": self.iterate.q.tolist(),
            "wall_time": self.wall_time,
        }

    def to_json(self, path=None, **kw) -> str:
        text = json.dumps(self.to_dict(), indent=2, **kw)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def write_trace_csv(self, path) -> None:
        names = [f for f in TraceEntry.__dataclass_fields__] + ["surrogate_gap"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for e in self.trace:
                row = asdict(e)
                w.writerow([row[n] if n in row else e.surrogate_gap for n in names])


# ----------------------------------------------------------------------------
# initial point and expansion guard


class InitializationError(RuntimeError):
    """Feasibility refinement ran out of iterations; ``best_margin`` is the best ``min_k tau_k``."""

    def __init__(self, message: str, best_margin: float, iterate: Iterate):
        super().__init__(message)
        self.best_margin = best_margin
        self.iterate = iterate


def service_margins(scenario: Scenario, it: Iterate, duplex: str) -> np.ndarray:
    """``tau_k = dt * min(R_1k, R_2k) - lam_k S_k`` in bits, with true lower-bound rates."""
    r1, r2 = slot_rates(scenario, it.q, it.a1, it.a2, it.p1, it.p2, duplex)
    ul, dl = link_windows(scenario, duplex)
    dt = scenario.uav.slot_len
    cap = dt * np.minimum((r1 * ul).sum(axis=1), (r2 * dl).sum(axis=1))
    return cap - np.clip(it.lam, 0.0, 1.0) * scenario.data_sizes


def init_point(scenario: Scenario, duplex: str | None = None, *, lam=0.0, freeze=(),
               max_refine: int = 20, config: PlannerConfig | None = None,
               backend: Backend | None = None) -> Iterate:
    """First expansion point of the inner-approximation loop.

    Straight-line flight, equal bandwidth shares ``1/K``, full device power
    and ``PU/K`` per downlink, indicators set to `lam`, slacks tight.  If
    some service margin ``tau_k`` is negative, the feasibility program is
    solved repeatedly with the indicators held fixed until every margin is
    nonnegative.  With the default ``lam = 0`` every margin is already
    nonnegative and no program is solved.

    Raises
    ------
    InitializationError
        When `max_refine` feasibility solves do not reach ``min tau >= 0``.
    """
    duplex = (duplex or scenario.duplex).upper()
    config = config or PlannerConfig()
    K = scenario.n_devices
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (K,)).copy()
    it = tight_iterate(scenario, straight_line(scenario), 1.0 / K, 1.0 / K,
                       np.asarray(scenario.p_dev_max), np.asarray(scenario.uav.p_max) / K, lam,
                       duplex=duplex)
    tol = config.verify_tol * max(1.0, float(scenario.data_sizes.max()))
    best = float(service_margins(scenario, it, duplex).min())
    freeze = tuple(set(freeze) | {"indicators"})
    for j in range(max_refine):
        if best >= -tol:
            return it
        guarded, _ = guard_expansion(it, scenario, duplex)
        prog = build_program(scenario, guarded, duplex=duplex, kind="feasibility", freeze=freeze)
        res = solve(prog, config.solver, backend)
        if not res.usable:
            break
        cand = extract_iterate(res, prog, j=j + 1)
        margin = float(service_margins(scenario, cand, duplex).min())
        if margin <= best:
            break
        it, best = cand, margin
        log.info("feasibility refinement %d: min margin %.6g bits", j + 1, best)
    if best >= -tol:
        return it
    raise InitializationError(f"no feasible start found; best min margin {best:.6g} bits", best, it)


def guard_expansion(it: Iterate, scenario: Scenario, duplex: str, floor: float = 1e3 * FLOOR,
                    ul_floor: float = 1e-6):
    """Raise powers that are too small to expand around.

    The log-rate surrogates divide by the expansion power.  Downlink powers
    are lifted to ``floor`` (scaled units); uplink powers, which interfere
    with nothing, to ``ul_floor`` times the device budget.  In full-duplex
    mode the interference slack is raised to stay consistent.  Raising a
    power never lowers a link's true rate, so the adjusted point remains
    feasible up to the interference change.  Returns the adjusted iterate
    and the number of lifted entries.
    """
    sc = Scaling.from_scenario(scenario)
    lo2 = floor * sc.power
    lo1 = np.maximum(ul_floor * np.asarray(scenario.p_dev_max)[None, :], lo2)
    n = int(np.sum(it.p1 < lo1) + np.sum(it.p2 < lo2))
    if n == 0:
        return it, 0
    p1 = np.maximum(it.p1, lo1)
    p2 = np.maximum(it.p2, lo2)
    changes = {"p1": p1, "p2": p2}
    if duplex == "FD":
        ch = scenario.channel
        need = ch.rsi_coeff * (p2.sum(axis=0)[None, :] - p2) + ch.noise_power
        changes["t1"] = np.maximum(it.t1, need)
    log.debug("lifted %d expansion powers", n)
    return it.copy(**changes), n


# ----------------------------------------------------------------------------
# relaxed objective evaluated directly at an iterate


def relaxed_objective(scenario: Scenario, it: Iterate, kind: str, mu: float, duplex: str) -> float:
    """Objective of the relaxed problem at `it`, in the programs' scaled units."""
    lam = np.clip(it.lam, 0.0, 1.0)
    pen = mu * penalty_value(lam)
    if kind == "serve":
        return float(lam.sum() + pen)
    if kind == "rate":
        ul, dl = link_windows(scenario, duplex)
        bw = scenario.channel.bandwidth
        R1 = (it.r1 * ul).sum(axis=1) / bw
        R2 = (it.r2 * dl).sum(axis=1) / bw
        return float(np.minimum(R1, R2).sum() + pen)
    raise ValueError(f"no relaxed objective for {kind!r}")


# ----------------------------------------------------------------------------
# exit verification


def _relative_excess(value, limit):
    value, limit = np.asarray(value, float), np.asarray(limit, float)
    if value.size == 0:
        return 0.0
    return float(np.max(np.maximum(value - limit, 0.0) / np.maximum(np.abs(limit), 1e-300)))


def verify_plan(scenario: Scenario, it: Iterate, served, duplex: str, tol: float = 1e-6) -> PlanCheck:
    """Re-check a rounded plan with the true rate expressions.

    A device stays served only if its uplink and downlink windows deliver its
    data with the true per-slot rates.  If the cache limit is then violated,
    served devices are dropped one at a time (largest data size first) until
    it holds.  Residuals are relative violations per constraint family.
    """
    uav = scenario.uav
    S = scenario.data_sizes
    served = np.asarray(served, bool).copy()
    r1, r2 = slot_rates(scenario, it.q, it.a1, it.a2, it.p1, it.p2, duplex)
    ul, dl = link_windows(scenario, duplex)
    C1 = (r1 * ul).sum(axis=1) * uav.slot_len
    C2 = (r2 * dl).sum(axis=1) * uav.slot_len
    dropped = []
    short = served & ((C1 < S * (1 - tol)) | (C2 < S * (1 - tol)))
    for k in np.flatnonzero(short):
        served[k] = False
        dropped.append(int(k))

    def cache_profile(mask):
        d1 = r1 * ul * uav.slot_len
        d2 = r2 * dl * uav.slot_len
        future = np.cumsum(d1[:, ::-1], axis=1)[:, ::-1]
        future = np.concatenate([future[:, 1:], np.zeros((len(S), 1))], axis=1)
        past = np.concatenate([np.zeros((len(S), 1)), np.cumsum(d2, axis=1)[:, :-1]], axis=1)
        stored = np.maximum(S[:, None] - future - past, 0.0)
        return (stored * mask[:, None]).sum(axis=0)

    while served.any() and _relative_excess(cache_profile(served), uav.cache_cap) > tol:
        k = int(np.flatnonzero(served)[np.argmax(S[served])])
        served[k] = False
        dropped.append(k)

    steps = np.linalg.norm(np.diff(it.q, axis=0), axis=1)
    res = {
        "speed": _relative_excess(steps, uav.max_step),
        "endpoints": float(max(np.linalg.norm(it.q[0] - uav.start), np.linalg.norm(it.q[-1] - uav.end))
                           / max(uav.max_step, 1e-300)),
        "bandwidth": max(_relative_excess(it.a1.sum(axis=0), 1.0), _relative_excess(it.a2.sum(axis=0), 1.0),
                         float(np.max(np.maximum(-np.concatenate([it.a1.ravel(), it.a2.ravel()]), 0.0)))),
        "power": max(_relative_excess(it.p1, np.broadcast_to(scenario.p_dev_max, it.p1.shape)),
                     _relative_excess(it.p2.sum(axis=0), uav.p_max)),
        "deadline-ul": _relative_excess(S[served], C1[served]) if served.any() else 0.0,
        "deadline-dl": _relative_excess(S[served], C2[served]) if served.any() else 0.0,
        "cache": _relative_excess(cache_profile(served), uav.cache_cap),
    }
    return PlanCheck(served=served, dropped=tuple(dropped), delivered_ul=C1, delivered_dl=C2, residuals=res)


# ----------------------------------------------------------------------------
# the iteration


def _binary_gap(lam) -> float:
    lam = np.clip(lam, 0.0, 1.0)
    return float(np.max(lam * (1 - lam), initial=0.0))


def _drop_candidate(lam, tol, threshold):
    """Index of the smallest fractional indicator that may be zeroed, or None."""
    lam = np.clip(lam, 0.0, 1.0)
    frac = np.flatnonzero(lam * (1 - lam) > tol)
    if frac.size == 0:
        return None
    k = int(frac[np.argmin(lam[frac])])
    if threshold is not None and lam.sum() - lam[k] < threshold - 1e-9:
        return None
    return k


def run_ia(scenario: Scenario, *, kind: str = "serve", duplex: str | None = None, freeze=(),
           threshold: float | None = None, start: Iterate | None = None,
           config: PlannerConfig | None = None, backend: Backend | None = None,
           warm_start_stage: bool | None = None):
    """Run the penalty-staged inner-approximation loop.

    Stages run the loop to convergence at a fixed ``mu``.  After a stage
    with ``mu > 0`` that ends with fractional indicators, ``mu`` grows by
    ``mu_growth``; if the indicators did not move since the previous stage
    the smallest fractional one is set to zero instead (lowering an
    indicator keeps every constraint satisfied) and the stage is repeated.

    A solve that fails, or returns a value below the (feasible) expansion
    point, ends the current stage and keeps the previous iterate.  Returns
    ``(iterate, trace, last_objective, last_mu, status)`` where ``status`` is
    ``"ok"`` when the indicators end binary within tolerance and
    ``"non-binary"`` otherwise.
    """
    config = config or PlannerConfig()
    duplex = (duplex or scenario.duplex).upper()
    it = start if start is not None else init_point(scenario, duplex)
    warm = config.warm_start_stage if warm_start_stage is None else warm_start_stage
    tol = scenario.binary_tol
    trace: list[TraceEntry] = []
    last_obj, failures, stage = float("nan"), 0, 0
    mu = 0.0 if warm else max(float(scenario.penalty), 0.0)
    stage_start_lam = None
    max_stages = 2 * scenario.n_devices + 64
    while stage < max_stages:
        lam_before = it.lam.copy()
        prev = None
        for j in range(config.max_iter):
            it, clamped = guard_expansion(it, scenario, duplex)
            prog = build_program(scenario, it, duplex=duplex, kind=kind, mu=mu, threshold=threshold,
                                 freeze=freeze)
            at_exp = prog.objective(inject_iterate(it, prog))
            true_exp = relaxed_objective(scenario, it, kind, mu, duplex)
            res = solve(prog, config.solver, backend)
            status = res.status
            # the expansion point is feasible, so a lower optimum is solver inaccuracy
            if res.usable and res.objective < at_exp - config.accept_tol * max(1.0, abs(at_exp)):
                status = "rejected"
            accepted = status in ("optimal", "inaccurate")
            lam = np.clip(res.values["lam"], 0.0, 1.0) if accepted else it.lam
            trace.append(TraceEntry(
                stage=stage, j=j, mu=mu, objective=res.objective if accepted else at_exp,
                at_expansion=at_exp, true_at_expansion=true_exp, relaxed_served=float(lam.sum()),
                binary_gap=_binary_gap(lam), status=status,
                iterations=res.iterations, solve_time=res.solve_time, residual=res.residual,
                clamped=clamped, backend_status=res.backend_status,
            ))
            last_obj = trace[-1].objective
            if not accepted:
                failures += 1
                log.info("stage %d iteration %d: %s (%s); keeping the previous iterate",
                         stage, j, status, res.backend_status)
                break
            failures = 0
            it = extract_iterate(res, prog, j=len(trace))
            if prev is not None and abs(res.objective - prev) <= config.rel_tol * max(1.0, abs(prev)):
                break
            prev = res.objective
        stage += 1
        if failures >= config.max_failures and mu > 0:
            break
        if mu == 0:
            mu = max(float(scenario.penalty), 0.0)
            continue
        if _binary_gap(it.lam) <= tol:
            break
        stalled = np.max(np.abs(it.lam - lam_before), initial=0.0) < 1e-3
        if stalled or mu * config.mu_growth > config.mu_max:
            k = _drop_candidate(it.lam, tol, threshold)
            if k is None:
                break
            lam = it.lam.copy()
            lam[k] = 0.0
            it = it.copy(lam=lam)
            log.info("indicator %d stuck at a fractional value; set to zero", k)
        else:
            mu *= config.mu_growth
    status = "ok" if _binary_gap(it.lam) <= tol else "non-binary"
    return it, trace, last_obj, mu, status


def _report(scenario, scheme, mode, duplex, it, trace, obj, mu, status, t0, threshold=None, config=None):
    config = config or PlannerConfig()
    relaxed = np.clip(it.lam, 0.0, 1.0)
    rounded = relaxed >= 1.0 - scenario.binary_tol
    check = verify_plan(scenario, it, rounded, duplex, tol=config.verify_tol)
    served = check.served
    thr = float(np.minimum(check.delivered_ul, check.delivered_dl)[served].sum())
    unpen = obj - mu * penalty_value(relaxed) if np.isfinite(obj) else obj
    return RunReport(
        scheme=scheme, mode=mode, duplex=duplex, status=status, served=int(served.sum()),
        lam=served.astype(float), relaxed_lam=relaxed, binary_gap=float(np.max(relaxed * (1 - relaxed), initial=0.0)),
        throughput=thr, objective=obj, objective_unpenalized=float(unpen), final_mu=mu, iterate=it,
        check=check, trace=trace, wall_time=time.perf_counter() - t0, threshold=threshold,
    )


def run_scheme(scenario: Scenario, scheme: str = "FD", mode: str = "serve", *, threshold=None,
               config: PlannerConfig | None = None, backend: Backend | None = None) -> RunReport:
    """Run one scheme (proposed ``FD``/``HD`` or a benchmark) in serve or rate mode.

    Rate mode first runs the serve problem and starts from its rounded plan.
    ``threshold`` is the minimum number of served devices (defaults to the
    serve result); when the serve run cannot reach it the report carries
    status ``"threshold_unreachable"`` and the serve plan.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")
    if mode not in ("serve", "rate"):
        raise ValueError(f"mode must be 'serve' or 'rate', got {mode!r}")
    config = config or PlannerConfig()
    duplex, freeze = SCHEMES[scheme]
    t0 = time.perf_counter()
    it, trace, obj, mu, status = run_ia(scenario, kind="serve", duplex=duplex, freeze=freeze,
                                        config=config, backend=backend)
    rep = _report(scenario, scheme, "serve", duplex, it, trace, obj, mu, status, t0, config=config)
    if mode == "serve":
        return rep
    need = rep.served if threshold is None else float(threshold)
    if need > scenario.n_devices:
        raise ValueError(f"threshold {need} exceeds the number of devices")
    if rep.served < need - 1e-9:
        rep.mode, rep.status, rep.threshold = "rate", "threshold_unreachable", need
        return rep
    start = rep.iterate.copy(lam=rep.lam.copy())
    it, rtrace, obj, mu, status = run_ia(scenario, kind="rate", duplex=duplex, freeze=freeze, threshold=need,
                                         start=start, config=config, backend=backend, warm_start_stage=False)
    out = _report(scenario, scheme, "rate", duplex, it, rtrace, obj, mu, status, t0, threshold=need, config=config)
    out.trace = [e for e in trace] + rtrace
    return out


def run_fd_serve(scenario, *, config=None, backend=None) -> RunReport:
    return run_scheme(scenario, "FD", "serve", config=config, backend=backend)


def run_fd_rate(scenario, threshold=None, *, config=None, backend=None) -> RunReport:
    return run_scheme(scenario, "FD", "rate", threshold=threshold, config=config, backend=backend)


def run_hd_serve(scenario, *, config=None, backend=None) -> RunReport:
    return run_scheme(scenario, "HD", "serve", config=config, backend=backend)


def run_hd_rate(scenario, threshold=None, *, config=None, backend=None) -> RunReport:
    return run_scheme(scenario, "HD", "rate", threshold=threshold, config=config, backend=backend)


def run_benchmark(scenario, scheme: str, mode: str = "serve", *, threshold=None, config=None,
                  backend=None) -> RunReport:
    """Benchmark schemes: ``B?D1`` fly the straight line, ``B?D2`` keep the fixed allocation."""
    if scheme not in ("BFD1", "BFD2", "BHD1", "BHD2"):
        raise ValueError(f"unknown benchmark {scheme!r}")
    return run_scheme(scenario, scheme, mode, threshold=threshold, config=config, backend=backend)
