"""Solver contract and the bundled Clarabel backend.

A backend turns a :class:`~uavrelay.program.ConicProgram` into a
:class:`SolveResult`.  The drivers only see the :class:`Backend` protocol,
so any object with a compatible ``solve`` method can be swapped in.

The Clarabel adapter maps every block onto Clarabel's ``b - A x in K`` form:
linear rows go to the zero and nonnegative cones, convex quadratic rows to
rotated second-order cones, and power cones with exponent 1/2 collapse to
second-order cones.  Fixed variables are substituted as constants before the
problem reaches the solver.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import scipy.sparse as sp

from .program import ConicProgram

__all__ = ["OPTIMAL", "INACCURATE", "INFEASIBLE", "FAILURE", "SolverOptions", "SolveResult", "Backend", "ClarabelBackend", "solve", "default_backend"]

OPTIMAL = "optimal"
INACCURATE = "inaccurate"
INFEASIBLE = "infeasible"
FAILURE = "numerical-failure"


@dataclass(frozen=True)
class SolverOptions:
    """Backend tolerances; all relative."""

    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    verbose: bool = False
    time_limit: float = float("inf")
    usable_residual: float = 1e-6
    retry_residual: float = 1e-8

    def __post_init__(self):
        if not (self.feas_tol > 0 and self.gap_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveResult:
    """Outcome of one subproblem solve.

    ``x`` is the full primal vector (fixed variables included) and
    ``values`` the same data split by variable group.  ``residual`` is the
    largest constraint violation of the original program at ``x``.

    ``status`` is ``"optimal"`` when the backend met its tolerances,
    ``"inaccurate"`` when it stopped early but ``x`` satisfies every
    constraint to ``usable_residual``, otherwise ``"infeasible"`` or
    ``"numerical-failure"``.
    """

    status: str
    x: np.ndarray | None
    values: dict = field(default_factory=dict)
    objective: float = float("nan")
    iterations: int = 0
    solve_time: float = 0.0
    residual: float = float("nan")
    backend_status: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    @property
    def usable(self) -> bool:
        """Optimal, or a primal point that is feasible within tolerance."""
        return self.status in (OPTIMAL, INACCURATE)


class Backend(Protocol):
    name: str

    def solve(self, program: ConicProgram, options: SolverOptions) -> SolveResult: ...


# ----------------------------------------------------------------------------
# translation to standard conic form


@dataclass
class _Standard:
    A: sp.csc_matrix
    b: np.ndarray
    cones: list
    q: np.ndarray
    free: np.ndarray
    x_fixed: np.ndarray


def _quad_rows(G, h, Gs, hs, w, terms):
    """Rotated-cone rows for ``sum w*s**2 + e <= 0`` as ``(A, b)`` blocks of size 2+terms."""
    m = G.shape[0]
    sw = np.sqrt(w)
    A = sp.vstack([G * 0.5, G * 0.5, -sp.diags(sw) @ Gs], format="csr")
    b = np.concatenate([(1.0 - h) / 2, (-1.0 - h) / 2, sw * hs])
    j = np.arange(m)
    perm = np.column_stack([j, m + j] + [2 * m + j * terms + i for i in range(terms)]).ravel()
    return A[perm], b[perm]


_HALF_POW = sp.csr_matrix(np.array([[1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, 2.0]]))


def to_standard_form(program: ConicProgram):
    """Translate to Clarabel data; returns ``_Standard`` with cone specs as tuples."""
    fixed = program.fixed
    free = np.flatnonzero(~fixed)
    x_fixed = np.where(fixed, program.lb, 0.0)
    zero_A, zero_b = [], []
    nn_A, nn_b = [], []
    soc_A, soc_b, soc_dims = [], [], []
    pow_A, pow_b, pow_exps = [], [], []
    for blk in program.blocks:
        G, h = blk.G, blk.h
        if blk.kind == "eq":
            zero_A.append(G), zero_b.append(-h)
        elif blk.kind == "le":
            nn_A.append(G), nn_b.append(-h)
        elif blk.kind == "soc":
            soc_A.append(-G), soc_b.append(h)
            soc_dims += [blk.dim] * blk.count
        elif blk.kind == "pow" and abs(blk.exponent - 0.5) < 1e-15:
            M = sp.kron(sp.identity(blk.count), _HALF_POW, format="csr")
            soc_A.append(-(M @ G)), soc_b.append(M @ h)
            soc_dims += [3] * blk.count
        elif blk.kind == "pow":
            pow_A.append(-G), pow_b.append(h)
            pow_exps += [blk.exponent] * blk.count
        elif blk.kind == "quad":
            A, b = _quad_rows(G, h, blk.Gs, blk.hs, blk.weights, blk.terms)
            soc_A.append(A), soc_b.append(b)
            soc_dims += [2 + blk.terms] * blk.count
        else:
            raise ValueError(f"unsupported block kind {blk.kind!r}")
    n = program.n
    lo = np.flatnonzero(np.isfinite(program.lb) & ~fixed)
    hi = np.flatnonzero(np.isfinite(program.ub) & ~fixed)
    if lo.size:
        nn_A.append(sp.csr_matrix((-np.ones(lo.size), (np.arange(lo.size), lo)), shape=(lo.size, n)))
        nn_b.append(-program.lb[lo])
    if hi.size:
        nn_A.append(sp.csr_matrix((np.ones(hi.size), (np.arange(hi.size), hi)), shape=(hi.size, n)))
        nn_b.append(program.ub[hi])

    parts_A = zero_A + nn_A + soc_A + pow_A
    parts_b = zero_b + nn_b + soc_b + pow_b
    A = sp.vstack(parts_A, format="csc") if parts_A else sp.csc_matrix((0, n))
    b = np.concatenate(parts_b) if parts_b else np.zeros(0)
    # substitute fixed variables: b - A_free x_free - A_fixed x_fixed
    b = b - A @ x_fixed
    A = A[:, free]
    cones = []
    mz = sum(a.shape[0] for a in zero_A)
    mn = sum(a.shape[0] for a in nn_A)
    if mz:
        cones.append(("zero", mz))
    if mn:
        cones.append(("nonneg", mn))
    cones += [("soc", d) for d in soc_dims]
    cones += [("pow", a) for a in pow_exps]
    q = -program.c[free]
    return _Standard(A=A.tocsc(), b=b, cones=cones, q=q, free=free, x_fixed=x_fixed)


#: Applied to every attempt; tight refinement recovers accuracy lost to
#: flat optimal faces (e.g. indicators with zero cost).
BASE_SETTINGS = {
    "iterative_refinement_reltol": 1e-14,
    "iterative_refinement_abstol": 1e-14,
    "iterative_refinement_max_iter": 50,
}

#: Settings overrides tried in order until a solve is accurate; stronger
#: regularization and no equilibration rescue most power-cone stalls.
RETRY_SETTINGS = (
    {},
    {"static_regularization_constant": 1e-7},
    {"static_regularization_constant": 1e-7, "equilibrate_enable": False},
    {"static_regularization_constant": 1e-6},
    {"equilibrate_enable": False},
)


def _pick(program, attempts, options):
    """Last attempt if it ended the chain, else the best of the rest.

    Attempts feasible to ``retry_residual`` are preferred, then those
    feasible to ``usable_residual``; within a group the largest objective
    wins.  Without any usable attempt the smallest residual is returned.
    """
    last = attempts[-1]
    if last[3] == "PrimalInfeasible" or (last[3] == "Solved" and last[2] <= options.retry_residual):
        return last
    for limit in (options.retry_residual, options.usable_residual):
        group = [a for a in attempts if a[2] <= limit and "Infeasible" not in a[3]]
        if group:
            return max(group, key=lambda a: program.objective(a[1]))
    return min(attempts, key=lambda a: a[2])


class ClarabelBackend:
    """Adapter over the Clarabel interior-point solver."""

    name = "clarabel"

    def solve(self, program: ConicProgram, options: SolverOptions | None = None) -> SolveResult:
        import clarabel

        options = options or SolverOptions()
        t0 = time.perf_counter()
        std = to_standard_form(program)
        nf = std.free.size
        if nf == 0:
            x = std.x_fixed.copy()
            res = program.max_violation(x)
            status = OPTIMAL if res <= 1e-9 else INFEASIBLE
            return SolveResult(status, x, program.layout.split(x), program.objective(x), 0,
                               time.perf_counter() - t0, res, "AllFixed")
        make = {
            "zero": clarabel.ZeroConeT,
            "nonneg": clarabel.NonnegativeConeT,
            "soc": clarabel.SecondOrderConeT,
            "pow": clarabel.PowerConeT,
        }
        cones = [make[kind](arg) for kind, arg in std.cones]
        P = sp.csc_matrix((nf, nf))
        # unit-norm cost keeps large penalty weights from swamping the tolerances
        scale = float(np.max(np.abs(std.q), initial=0.0)) or 1.0
        attempts = []
        for tweak in RETRY_SETTINGS:
            settings = clarabel.DefaultSettings()
            settings.verbose = options.verbose
            settings.tol_feas = options.feas_tol
            settings.tol_gap_abs = options.gap_tol
            settings.tol_gap_rel = options.gap_tol
            settings.max_iter = options.max_iter
            settings.max_threads = 1
            if np.isfinite(options.time_limit):
                settings.time_limit = options.time_limit
            for key, value in {**BASE_SETTINGS, **tweak}.items():
                setattr(settings, key, value)
            sol = clarabel.DefaultSolver(P, std.q / scale, std.A, std.b, cones, settings).solve()
            x = std.x_fixed.copy()
            x[std.free] = np.asarray(sol.x, dtype=float)
            res = program.max_violation(x) if np.all(np.isfinite(x)) else float("inf")
            raw = str(sol.status)
            attempts.append((sol, x, res, raw))
            if raw == "PrimalInfeasible" or (raw == "Solved" and res <= options.retry_residual):
                break
        sol, x, res, raw = _pick(program, attempts, options)
        if raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            status = INFEASIBLE
        elif res <= options.usable_residual:
            status = OPTIMAL if raw == "Solved" else INACCURATE
        else:
            status = FAILURE
        diag = {
            "r_prim": float(sol.r_prim),
            "r_dual": float(sol.r_dual),
            "rows": int(std.A.shape[0]),
            "cols": int(nf),
            "almost": raw.startswith("Almost"),
        }
        return SolveResult(
            status=status,
            x=x,
            values=program.layout.split(x),
            objective=program.objective(x),
            iterations=int(sol.iterations),
            solve_time=time.perf_counter() - t0,
            residual=res,
            backend_status=raw,
            diagnostics=diag,
        )


_DEFAULT = ClarabelBackend()


def default_backend() -> ClarabelBackend:
    return _DEFAULT


def solve(program: ConicProgram, options: SolverOptions | None = None, backend: Backend | None = None) -> SolveResult:
    """Solve `program` with `backend` (the bundled Clarabel adapter by default)."""
    return (backend or _DEFAULT).solve(program, options or SolverOptions())
