"""Acceptance criteria, one test per criterion.

Each test records a ``[PASS]``/``[FAIL]`` line in :data:`LINES`; the
conftest prints them in the terminal summary.  Run standalone with
``python tests/test_acceptance.py`` to print the same lines without pytest.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import grid_oracle, grid_scenario, short_horizon_config  # noqa: E402
from uavrelay.algorithms import run_scheme  # noqa: E402
from uavrelay.algorithms import init_point  # noqa: E402
from uavrelay.scenario import GeneratorConfig, random_scenario  # noqa: E402
from uavrelay.subproblems import build_fd_serve, build_hd_serve  # noqa: E402
from uavrelay.validation import bound_checks, constant_checks, surrogate_checks  # noqa: E402

#: Pinned tolerances and budgets.
BACKEND_TOL = 1e-8
MONOTONE_TOL = 10 * BACKEND_TOL
MATCH_TOL = 1e-6
RESIDUAL_TOL = 1e-6
BINARY_TOL = 1e-3
THROUGHPUT_FRACTION = 0.95
BUDGET = {1: 5.0, 2: 30.0, 3: 60.0, 4: 600.0, 7: 900.0}

ALL_SCHEMES = ("FD", "HD", "BFD1", "BFD2", "BHD1", "BHD2")
LINES: dict[int, str] = {}


def record(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] C{number} {title}: {detail}"
    LINES[number] = line
    print(line)
    return passed


def within_budget(number, elapsed):
    return number not in BUDGET or elapsed <= BUDGET[number]


# -- C1 -----------------------------------------------------------------------------


def test_c1_count_formulas():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    bad = []
    for i in range(20):
        K, N = int(rng.integers(1, 11)), int(rng.integers(4, 31))
        s = random_scenario(i, short_horizon_config(K, N))
        fd = build_fd_serve(s, init_point(s, "FD"))
        hd = build_hd_serve(s, init_point(s, "HD"))
        got = (fd.modeling_constraint_count(), fd.modeling_variable_count(), hd.modeling_variable_count())
        want = (N * (7 + 8 * K) + 4 * K, 5 * N * (1 + 3 * K) + K, 3 * N * (1 + 4 * K) + K)
        if got != want:
            bad.append((K, N, got, want))
    dt = time.perf_counter() - t0
    ok = not bad and within_budget(1, dt)
    assert record(1, "count formulas", ok, f"20 (K, N) pairs, {len(bad)} mismatches, {dt:.2f} s"), bad


# -- C2 -----------------------------------------------------------------------------


def test_c2_rate_bound():
    t0 = time.perf_counter()
    checks = bound_checks(seed=0, samples=100_000)
    dt = time.perf_counter() - t0
    failed = [c.line() for c in checks if not c.passed]
    ok = not failed and within_budget(2, dt)
    assert record(2, "expected-rate bound", ok,
                  f"{len(checks) - len(failed)}/{len(checks)} checks, {dt:.2f} s"), failed


# -- C3 -----------------------------------------------------------------------------


def test_c3_surrogates():
    t0 = time.perf_counter()
    checks = surrogate_checks(seed=0, points=100, samples=10_000, grad_tol=1e-5)
    dt = time.perf_counter() - t0
    failed = [c.line() for c in checks if not c.passed]
    ok = not failed and within_budget(3, dt)
    assert record(3, "surrogate suite", ok,
                  f"{len(checks) - len(failed)}/{len(checks)} checks, {dt:.2f} s"), failed


# -- C4 / C5 ------------------------------------------------------------------------

C4_SEEDS = (0, 1, 2, 3, 4)
C4_CONFIG = GeneratorConfig(n_devices=5, n_slots=20)
C4_RUNS = [("FD", "serve"), ("FD", "rate"), ("HD", "serve"), ("HD", "rate"),
           ("BFD1", "serve"), ("BFD2", "serve"), ("BHD1", "serve"), ("BHD2", "serve")]


@pytest.fixture(scope="module")
def c4_reports():
    t0 = time.perf_counter()
    reports = {}
    for seed in C4_SEEDS:
        s = random_scenario(seed, C4_CONFIG)
        for scheme, mode in C4_RUNS:
            reports[(seed, scheme, mode)] = run_scheme(s, scheme, mode)
    return reports, time.perf_counter() - t0


def monotone_violation(trace):
    """Largest relative decrease between consecutive accepted solves of one stage."""
    ok = [e for e in trace if e.status in ("optimal", "inaccurate")]
    worst = 0.0
    for a, b in zip(ok, ok[1:]):
        if a.stage == b.stage:
            worst = max(worst, (a.objective - b.objective) / max(1.0, abs(a.objective)))
    return worst


def test_c4_monotone_convergence(c4_reports):
    reports, dt = c4_reports
    worst_drop = max(monotone_violation(r.trace) for r in reports.values())
    worst_gap = max(e.surrogate_gap for r in reports.values() for e in r.trace)
    ok = worst_drop <= MONOTONE_TOL and worst_gap <= MATCH_TOL and within_budget(4, dt)
    assert record(4, "monotone convergence", ok,
                  f"{len(reports)} runs, max drop {worst_drop:.1e} (<= {MONOTONE_TOL:.0e}), "
                  f"max surrogate gap {worst_gap:.1e} (<= {MATCH_TOL:.0e}), {dt:.0f} s")


def test_c5_exit_feasibility(c4_reports):
    reports, _ = c4_reports
    worst_res = max(r.max_residual for r in reports.values())
    worst_bin = max(r.binary_gap for r in reports.values())
    unserved_ok = all(
        np.all(np.minimum(r.check.delivered_ul, r.check.delivered_dl)[r.check.served]
               >= random_scenario(k[0], C4_CONFIG).data_sizes[r.check.served] * (1 - RESIDUAL_TOL))
        for k, r in reports.items())
    ok = worst_res <= RESIDUAL_TOL and worst_bin <= BINARY_TOL and unserved_ok
    assert record(5, "exit feasibility and binary recovery", ok,
                  f"max residual {worst_res:.1e} (<= {RESIDUAL_TOL:.0e}), "
                  f"max lam(1-lam) {worst_bin:.1e} (<= {BINARY_TOL:.0e})")


# -- C6 -----------------------------------------------------------------------------


def test_c6_brute_force():
    best, _, n = grid_oracle()
    mismatches, fractions = [], []
    for frac, expect in ((0.8, 1), (0.99, 1), (1.05, 0), (1.3, 0)):
        for duplex in ("FD", "HD"):
            rep = run_scheme(grid_scenario(frac * best), duplex)
            if rep.served != expect:
                mismatches.append((frac, duplex, rep.served))
    for duplex in ("FD", "HD"):
        rep = run_scheme(grid_scenario(0.8 * best), duplex, "rate", threshold=1)
        fractions.append(rep.throughput / best if rep.served else 0.0)
    ok = n <= 100_000 and not mismatches and min(fractions) >= THROUGHPUT_FRACTION
    assert record(6, "brute-force agreement", ok,
                  f"{n} candidates, {len(mismatches)} decision mismatches, "
                  f"throughput/grid {min(fractions):.4f} (>= {THROUGHPUT_FRACTION})"), mismatches


# -- C7 -----------------------------------------------------------------------------

#: Seed and data scaling of the ordering regression; 4x the reference sizes
#: so that not every device fits and the schemes separate.
C7_SEED = 1
C7_DATA = (40e6, 280e6)


def test_c7_orderings():
    t0 = time.perf_counter()
    s = random_scenario(C7_SEED, data_size_range=C7_DATA)
    served = {name: run_scheme(s, name).served for name in ALL_SCHEMES}
    dt = time.perf_counter() - t0
    pairs = [("FD", "HD"), ("FD", "BFD1"), ("FD", "BFD2"), ("HD", "BHD1"), ("HD", "BHD2")]
    broken = [f"{a}<{b}" for a, b in pairs if served[a] < served[b]]
    ok = not broken and within_budget(7, dt)
    counts = " ".join(f"{k}={v}" for k, v in served.items())
    assert record(7, "ordering regressions", ok,
                  f"K={s.n_devices} N={s.n_slots}: {counts}, {dt:.0f} s"), broken


# -- C8 -----------------------------------------------------------------------------


def test_c8_constants():
    checks = constant_checks()
    failed = [c.line() for c in checks if not c.passed]
    detail = "; ".join(c.detail for c in checks)
    assert record(8, "constants", not failed, detail), failed


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
