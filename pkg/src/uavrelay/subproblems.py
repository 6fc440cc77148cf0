"""Builders for the convex subproblems solved at each iteration.

Three programs share one constraint set and differ in their objective:

``serve``        maximize the number of served devices, ``sum(lam)`` plus a
                 linearized binary penalty
``feasibility``  maximize the smallest service margin ``min_k tau_k``
``rate``         maximize ``sum_k min(R1_k, R2_k)`` plus the penalty, with a
                 floor on ``sum(lam)``

The nonconvex rate expressions are replaced by surrogates from
:mod:`uavrelay.surrogates` built around the current iterate; all remaining
nonlinear pieces are cones:

* ``u >= ||(H, q - w)||`` and ``u <= z**(1/alpha)`` for the distance slacks,
* ``s**2 <= p`` for the square-root power terms,
* ``e >= (v / v0)**2`` for the squared slacks of the uplink surrogate,
* a difference-of-squares quadratic for the bilinear ``a * phi`` terms.

Everything is expressed in the units of :class:`~uavrelay.iterate.Scaling`.
Block tags name the physical constraint they encode; :data:`FD_TAGS` and
:data:`HD_TAGS` list the ones every serve program must contain.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .iterate import Iterate, Scaling, windows
from .program import ConicProgram, ProgramBuilder, Rows, VariableLayout
from .scenario import Scenario
from .solver import SolveResult
from .surrogates import LN2, dc_lower_coefficients, h1_lower_coefficients, h2_lower_coefficients

__all__ = [
    "FD_TAGS",
    "HD_TAGS",
    "ProgramContext",
    "build_program",
    "build_fd_serve",
    "build_fd_feasibility",
    "build_fd_rate",
    "build_hd_serve",
    "build_hd_feasibility",
    "build_hd_rate",
    "inject_iterate",
    "extract_iterate",
]

#: Tags of the constraint families of the full-duplex serve program.
FD_TAGS = frozenset({
    "speed", "dl-sum", "gw-range", "bandwidth-ul", "bandwidth-dl", "dl-power-total",
    "dl-power-budget", "cache", "device-range", "device-range-pow", "gw-range-pow", "rsi",
    "rate-surrogate-ul", "rate-surrogate-dl", "bilinear-ul", "bilinear-dl", "deadline-ul",
    "deadline-dl", "service-ul", "service-dl",
})
#: Tags of the half-duplex serve program (no self-interference, no DL-sum row).
HD_TAGS = frozenset({
    "speed", "gw-range", "bandwidth-ul", "bandwidth-dl", "dl-power-budget", "cache",
    "device-range", "device-range-pow", "gw-range-pow", "rate-surrogate-ul",
    "rate-surrogate-dl", "bilinear-ul", "bilinear-dl", "deadline-ul", "deadline-dl",
    "service-ul", "service-dl",
})

_FREEZE = {"trajectory": ("q",), "allocation": ("a1", "a2", "p1", "p2"), "indicators": ("lam",)}


@dataclass
class ProgramContext:
    """Everything needed to map iterates into and out of a built program."""

    scenario: Scenario
    duplex: str
    kind: str
    mu: float
    threshold: float | None
    scaling: Scaling
    ul_mask: np.ndarray
    dl_mask: np.ndarray
    ul_len: np.ndarray
    dl_len: np.ndarray
    expansion: dict = field(default_factory=dict)
    freeze: tuple = ()
    phi_cap: float = 0.0
    r_cap: float = 0.0


def _scaled_expansion(it: Iterate, sc: Scaling, fd: bool) -> dict:
    exp = {
        "p1": it.p1 / sc.power, "p2": it.p2 / sc.power,
        "z1": it.z1 / sc.zunit, "z2": it.z2 / sc.zunit,
        "a1": it.a1, "a2": it.a2,
        "phi1": it.phi1 / sc.bandwidth, "phi2": it.phi2 / sc.bandwidth,
        "lam": it.lam,
    }
    if fd:
        exp["t1"] = it.t1 / sc.noise
    return exp


def build_program(scenario: Scenario, iterate: Iterate, *, duplex: str | None = None,
                  kind: str = "serve", mu: float | None = None, threshold: float | None = None,
                  freeze=()) -> ConicProgram:
    """Assemble one convex subproblem around `iterate`.

    Parameters
    ----------
    scenario : Scenario
    iterate : Iterate
        Expansion point; its slacks must be strictly positive where the
        surrogates divide by them.
    duplex : {"FD", "HD"}, optional
        Defaults to ``scenario.duplex``.
    kind : {"serve", "feasibility", "rate"}
    mu : float, optional
        Penalty weight; defaults to ``scenario.penalty``.  Ignored for
        ``feasibility``.
    threshold : float, optional
        Minimum ``sum(lam)`` for ``rate`` programs.
    freeze : iterable of {"trajectory", "allocation", "indicators"}
        Variable groups fixed at the iterate's values.
    """
    duplex = (duplex or scenario.duplex).upper()
    if kind not in ("serve", "feasibility", "rate"):
        raise ValueError(f"unknown program kind {kind!r}")
    fd = duplex == "FD"
    K, N = scenario.n_devices, scenario.n_slots
    if kind == "rate":
        if threshold is None:
            raise ValueError("rate programs need a served-count threshold")
        if not 0 <= threshold <= K:
            raise ValueError(f"threshold must lie in [0, K={K}], got {threshold}")
    mu = scenario.penalty if mu is None else float(mu)
    freeze = tuple(sorted(set(freeze)))
    for name in freeze:
        if name not in _FREEZE:
            raise ValueError(f"cannot freeze {name!r}")
    if fd and iterate.t1 is None:
        raise ValueError("full-duplex programs need the uplink noise slack t1")

    sc = Scaling.from_scenario(scenario)
    ul, dl, w_ul, w_dl = windows(scenario, duplex)
    exp = _scaled_expansion(iterate, sc, fd)
    S = scenario.data_sizes / sc.data
    pu = np.asarray(scenario.uav.p_max) / sc.power
    pk = np.asarray(scenario.p_dev_max) / sc.power
    phi_max = np.log2(1 + sc.gamma * max(pu.max(), pk.max()))
    phi_cap = 4.0 * (1.0 + phi_max)
    r_cap = (1.0 + phi_cap + phi_max) ** 2 + 1.0
    H = sc.length
    w0 = np.asarray(scenario.gateway) / H
    wk = scenario.positions / H

    # -- variables ---------------------------------------------------------
    L = VariableLayout()
    L.add("q", (N, 2), description="UAV position / H")
    L.add("d_gw", (N,), description="UAV-gateway range / H")
    if fd:
        L.add("p_dl", (N,), description="total downlink power")
        L.add("cache", (N,), description="cache occupancy / (B dt)")
    kn = ["a1", "a2", "p1", "p2", "z1", "z2"] + (["t1"] if fd else [])
    kn += ["phi1", "phi2", "r1", "r2", "s1", "s2"] + (["e_t", "e_z"] if fd else [])
    for name in kn:
        L.add(name, (K, N))
    L.add("lam", (K,))
    L.add("u1", (K, N), auxiliary=True, description="UAV-device range / H")
    if kind == "feasibility":
        L.add("tau", (K,), auxiliary=True)
        L.add("theta", (1,), auxiliary=True)
    if kind == "rate":
        L.add("rho", (K,), auxiliary=True)
    ix = {g.name: g.index for g in L}
    B = ProgramBuilder(L)
    kk, nn = np.indices((K, N))
    cone = kk * N + nn  # flat (k, n) index

    # -- bounds ------------------------------------------------------------
    B.fix("q", np.asarray(scenario.uav.start) / H, where=0)
    B.fix("q", np.asarray(scenario.uav.end) / H, where=N - 1)
    for name in ("a1", "a2"):
        B.bound(name, 0.0, 1.0)
    B.bound("p1", 0.0, np.broadcast_to(pk, (K, N)))
    B.bound("p2", 0.0, np.broadcast_to(pu, (K, N)))
    B.bound("lam", 0.0, 1.0)
    B.bound("s1", 0.0)
    B.bound("s2", 0.0)
    # implied caps; they keep unused links' slacks from drifting and stay slack at every iterate
    B.bound("phi1", -phi_cap, phi_max + 1e-9)
    B.bound("phi2", -phi_cap, phi_max + 1e-9)
    reach = (N - 1) * scenario.uav.max_step / H
    start = np.asarray(scenario.uav.start) / H
    far_k = np.linalg.norm(wk - start, axis=1) + reach
    far_0 = np.linalg.norm(w0 - start) + reach
    B.bound("z1", ub=np.broadcast_to(((1 + far_k**2) ** (sc.alpha / 2))[:, None], (K, N)) * (1 + 1e-9))
    B.bound("z2", ub=(1 + far_0**2) ** (sc.alpha / 2) * (1 + 1e-9))
    B.bound("r1", -r_cap)
    B.bound("r2", -r_cap)
    if fd:
        B.bound("p_dl", 0.0)
        B.bound("cache", ub=scenario.uav.cache_cap / sc.data)
        B.bound("t1", ub=np.broadcast_to(1 + sc.beta * pu, (K, N)) * (1 + 1e-9))
        B.bound("e_t", 0.0)
        B.bound("e_z", 0.0)
    if "trajectory" in freeze:
        B.fix("q", iterate.q / H)
    if "allocation" in freeze:
        for name in ("a1", "a2"):
            B.fix(name, getattr(iterate, name))
        B.fix("p1", iterate.p1 / sc.power)
        B.fix("p2", iterate.p2 / sc.power)
    if "indicators" in freeze:
        B.fix("lam", np.clip(iterate.lam, 0.0, 1.0))

    # -- trajectory --------------------------------------------------------
    i = np.arange(N - 1)
    R = Rows(3 * (N - 1)).const(3 * i, scenario.uav.max_step / H)
    for c in (0, 1):
        R.term(3 * i + 1 + c, ix["q"][1:, c], 1.0).term(3 * i + 1 + c, ix["q"][:-1, c], -1.0)
    B.soc("speed", R, 3)

    n = np.arange(N)
    R = Rows(4 * N).term(4 * n, ix["d_gw"]).const(4 * n + 1, 1.0)
    for c in (0, 1):
        R.term(4 * n + 2 + c, ix["q"][:, c]).const(4 * n + 2 + c, -w0[c])
    B.soc("gw-range", R, 4)

    R = Rows(4 * K * N).term(4 * cone, ix["u1"]).const(4 * cone + 1, 1.0)
    for c in (0, 1):
        R.term(4 * cone + 2 + c, ix["q"][nn, c]).const(4 * cone + 2 + c, -wk[kk, c])
    B.soc("device-range", R, 4)

    R = Rows(3 * K * N).term(3 * cone, ix["z1"]).const(3 * cone + 1, 1.0).term(3 * cone + 2, ix["u1"])
    B.pow("device-range-pow", R, 1.0 / sc.alpha)
    R = Rows(3 * K * N).term(3 * cone, ix["z2"]).const(3 * cone + 1, 1.0).term(3 * cone + 2, ix["d_gw"][nn])
    B.pow("gw-range-pow", R, 1.0 / sc.alpha)

    # -- bandwidth and power -------------------------------------------------
    for name, tag in (("a1", "bandwidth-ul"), ("a2", "bandwidth-dl")):
        B.le(tag, Rows(N).term(nn, ix[name]).const(n, -1.0))
    if fd:
        B.eq("dl-power-total", Rows(N).term(n, ix["p_dl"]).term(nn, ix["p2"], -1.0))
        B.le("dl-power-budget", Rows(N).term(n, ix["p_dl"]).const(n, -pu))
        R = Rows(K * N).const(cone, 1.0).term(cone, ix["p_dl"][nn], sc.beta)
        R.term(cone, ix["p2"], -sc.beta).term(cone, ix["t1"], -1.0)
        B.le("rsi", R)
    else:
        B.le("dl-power-budget", Rows(N).term(nn, ix["p2"]).const(n, -pu))

    # -- rate surrogates -------------------------------------------------------
    sg = np.sqrt(sc.gamma)
    if fd:
        c0, c_sqrt, c_x, c_sq = h1_lower_coefficients(sc.gamma * exp["p1"], exp["z1"], exp["t1"])
        R = Rows(K * N).term(cone, ix["phi1"]).const(cone, -c0 / LN2)
        R.term(cone, ix["s1"], -c_sqrt * sg / LN2).term(cone, ix["p1"], c_x * sc.gamma / LN2)
        R.term(cone, ix["e_t"], c_sq / LN2).term(cone, ix["e_z"], c_sq / LN2)
        B.le("rate-surrogate-ul", R)
        B.quad("rsi-square", Rows(K * N).term(cone, ix["e_t"], -1.0),
               Rows(K * N).term(cone, ix["t1"], 1.0 / exp["t1"]), 1.0, 1, modeling=False)
        B.quad("range-square", Rows(K * N).term(cone, ix["e_z"], -1.0),
               Rows(K * N).term(cone, ix["z1"], 1.0 / exp["z1"]), 1.0, 1, modeling=False)
    else:
        c0, c_sqrt, c_lin = h2_lower_coefficients(sc.gamma * exp["p1"], exp["z1"])
        R = Rows(K * N).term(cone, ix["phi1"]).const(cone, -c0 / LN2)
        R.term(cone, ix["s1"], -c_sqrt * sg / LN2).term(cone, ix["p1"], c_lin * sc.gamma / LN2)
        R.term(cone, ix["z1"], c_lin / LN2)
        B.le("rate-surrogate-ul", R)
    c0, c_sqrt, c_lin = h2_lower_coefficients(sc.gamma * exp["p2"], exp["z2"])
    R = Rows(K * N).term(cone, ix["phi2"]).const(cone, -c0 / LN2)
    R.term(cone, ix["s2"], -c_sqrt * sg / LN2).term(cone, ix["p2"], c_lin * sc.gamma / LN2)
    R.term(cone, ix["z2"], c_lin / LN2)
    B.le("rate-surrogate-dl", R)
    for s_name, p_name, tag in (("s1", "p1", "sqrt-power-ul"), ("s2", "p2", "sqrt-power-dl")):
        B.quad(tag, Rows(K * N).term(cone, ix[p_name], -1.0), Rows(K * N).term(cone, ix[s_name]),
               1.0, 1, modeling=False)

    for a_name, phi_name, r_name, tag in (("a1", "phi1", "r1", "bilinear-ul"),
                                          ("a2", "phi2", "r2", "bilinear-dl")):
        cc, cl = dc_lower_coefficients(exp[a_name], exp[phi_name])
        lin = Rows(K * N).term(cone, ix[r_name]).term(cone, ix[a_name], -cl).term(cone, ix[phi_name], -cl)
        lin.const(cone, -cc)
        sq = Rows(K * N).term(cone, ix[a_name]).term(cone, ix[phi_name], -1.0)
        B.quad(tag, lin, sq, 0.25, 1)

    # -- windowed totals ---------------------------------------------------------
    k_ul, n_ul = np.nonzero(ul)
    k_dl, n_dl = np.nonzero(dl)
    k_all = np.arange(K)

    # cache occupancy: stored minus delivered-in-future-UL minus sent-in-past-DL
    Rc = Rows(N).term(np.repeat(n, K), np.tile(ix["lam"], N), np.tile(S, N))
    later = n_ul[None, :] > n[:, None]
    rr, jj = np.nonzero(later)
    Rc.term(rr, ix["r1"][k_ul[jj], n_ul[jj]], -1.0)
    earlier = n_dl[None, :] < n[:, None]
    rr, jj = np.nonzero(earlier)
    Rc.term(rr, ix["r2"][k_dl[jj], n_dl[jj]], -1.0)
    if fd:
        Rc.term(n, ix["cache"], -1.0)
        B.eq("cache", Rc)
        R = Rows(1).term(0, ix["lam"], S).term(0, ix["r2"][k_dl, n_dl], -1.0)
        B.le("dl-sum", R)
    else:
        Rc.const(n, -scenario.uav.cache_cap / sc.data)
        B.le("cache", Rc)

    def demand_rows(scale_ul, scale_dl):
        R1 = Rows(K).term(k_all, ix["lam"], S)
        R1.term(k_ul, ix["r1"][k_ul, n_ul], -np.asarray(scale_ul, float)[k_ul])
        R2 = Rows(K).term(k_all, ix["lam"], S)
        R2.term(k_dl, ix["r2"][k_dl, n_dl], -np.asarray(scale_dl, float)[k_dl])
        return R1, R2

    R1, R2 = demand_rows(w_ul, w_dl)
    B.le("deadline-ul", R1)
    B.le("deadline-dl", R2)
    if kind in ("serve", "rate"):
        R1, R2 = demand_rows(np.ones(K), np.ones(K))
        B.le("service-ul", R1)
        B.le("service-dl", R2)

    if scenario.qos_threshold is not None:
        thr = scenario.qos_threshold / sc.bandwidth
        B.le("qos-ul", Rows(k_ul.size).term(np.arange(k_ul.size), ix["a1"][k_ul, n_ul], thr)
             .term(np.arange(k_ul.size), ix["r1"][k_ul, n_ul], -1.0), modeling=False)
        B.le("qos-dl", Rows(k_dl.size).term(np.arange(k_dl.size), ix["a2"][k_dl, n_dl], thr)
             .term(np.arange(k_dl.size), ix["r2"][k_dl, n_dl], -1.0), modeling=False)

    # -- objective -------------------------------------------------------------
    lam0 = np.clip(exp["lam"], 0.0, 1.0)
    if kind == "feasibility":
        # tau_k <= R_ik - lam_k S_k, theta <= tau_k
        for var, kw, nw, tag in (("r1", k_ul, n_ul, "margin-ul"), ("r2", k_dl, n_dl, "margin-dl")):
            R = Rows(K).term(k_all, ix["tau"]).term(k_all, ix["lam"], S).term(kw, ix[var][kw, nw], -1.0)
            B.le(tag, R, modeling=False)
        B.le("max-min", Rows(K).term(k_all, ix["theta"][0]).term(k_all, ix["tau"], -1.0), modeling=False)
        B.maximize(ix["theta"])
    else:
        B.maximize(ix["lam"], mu * (2 * lam0 - 1), const=-mu * float(np.sum(lam0**2)))
        if kind == "serve":
            B.maximize(ix["lam"], 1.0)
        else:
            for var, kw, nw, tag in (("r1", k_ul, n_ul, "rate-epigraph-ul"),
                                     ("r2", k_dl, n_dl, "rate-epigraph-dl")):
                R = Rows(K).term(k_all, ix["rho"]).term(kw, ix[var][kw, nw], -1.0)
                B.le(tag, R, modeling=False)
            B.le("served-threshold", Rows(1).term(0, ix["lam"], -1.0).const(0, float(threshold)))
            B.maximize(ix["rho"], 1.0)

    prog = B.build(duplex=duplex, kind=kind, mu=mu, threshold=threshold, K=K, N=N,
                   freeze=",".join(freeze) or "-")
    prog.context = ProgramContext(
        scenario=scenario, duplex=duplex, kind=kind, mu=mu, threshold=threshold, scaling=sc,
        ul_mask=ul, dl_mask=dl, ul_len=w_ul, dl_len=w_dl, expansion=exp, freeze=freeze,
        phi_cap=phi_cap, r_cap=r_cap,
    )
    return prog


def build_fd_serve(scenario, iterate, *, mu=None, freeze=()) -> ConicProgram:
    return build_program(scenario, iterate, duplex="FD", kind="serve", mu=mu, freeze=freeze)


def build_fd_feasibility(scenario, iterate, *, freeze=()) -> ConicProgram:
    return build_program(scenario, iterate, duplex="FD", kind="feasibility", freeze=freeze)


def build_fd_rate(scenario, iterate, threshold, *, mu=None, freeze=()) -> ConicProgram:
    return build_program(scenario, iterate, duplex="FD", kind="rate", mu=mu, threshold=threshold,
                         freeze=freeze)


def build_hd_serve(scenario, iterate, *, mu=None, freeze=()) -> ConicProgram:
    return build_program(scenario, iterate, duplex="HD", kind="serve", mu=mu, freeze=freeze)


def build_hd_feasibility(scenario, iterate, *, freeze=()) -> ConicProgram:
    return build_program(scenario, iterate, duplex="HD", kind="feasibility", freeze=freeze)


def build_hd_rate(scenario, iterate, threshold, *, mu=None, freeze=()) -> ConicProgram:
    return build_program(scenario, iterate, duplex="HD", kind="rate", mu=mu, threshold=threshold,
                         freeze=freeze)


# ----------------------------------------------------------------------------
# iterate <-> program vector


def _window_totals(ctx: ProgramContext, r1, r2):
    return (r1 * ctx.ul_mask).sum(axis=1), (r2 * ctx.dl_mask).sum(axis=1)


def inject_iterate(iterate: Iterate, program: ConicProgram) -> np.ndarray:
    """Map an iterate to the program's variable vector, completing auxiliaries.

    Auxiliary variables take the tightest values consistent with the
    iterate: range epigraphs equal the ranges, ``s = sqrt(p)``, squared
    slacks equal the squares, epigraph scalars equal their minima.
    """
    ctx: ProgramContext = program.context
    sc, scen = ctx.scaling, ctx.scenario
    fd = ctx.duplex == "FD"
    q = iterate.q / sc.length
    w0 = np.asarray(scen.gateway) / sc.length
    wk = scen.positions / sc.length
    p1, p2 = iterate.p1 / sc.power, iterate.p2 / sc.power
    r1, r2 = iterate.r1 / sc.bandwidth, iterate.r2 / sc.bandwidth
    S = scen.data_sizes / sc.data
    vals = {
        "q": q,
        "d_gw": np.sqrt(1 + ((q - w0) ** 2).sum(-1)),
        "a1": iterate.a1, "a2": iterate.a2, "p1": p1, "p2": p2,
        "z1": iterate.z1 / sc.zunit, "z2": iterate.z2 / sc.zunit,
        "phi1": iterate.phi1 / sc.bandwidth, "phi2": iterate.phi2 / sc.bandwidth,
        "r1": r1, "r2": r2,
        "s1": np.sqrt(np.maximum(p1, 0)), "s2": np.sqrt(np.maximum(p2, 0)),
        "lam": iterate.lam,
        "u1": np.sqrt(1 + ((q[None] - wk[:, None]) ** 2).sum(-1)),
    }
    if fd:
        t1 = iterate.t1 / sc.noise
        vals["t1"] = t1
        vals["p_dl"] = p2.sum(axis=0)
        vals["e_t"] = (t1 / ctx.expansion["t1"]) ** 2
        vals["e_z"] = (vals["z1"] / ctx.expansion["z1"]) ** 2
        ul_m, dl_m = ctx.ul_mask, ctx.dl_mask
        N = scen.n_slots
        later = np.cumsum((r1 * ul_m)[:, ::-1], axis=1)[:, ::-1]  # sum over l >= n
        future = np.concatenate([later[:, 1:], np.zeros((r1.shape[0], 1))], axis=1)  # l > n
        past = np.concatenate([np.zeros((r2.shape[0], 1)), np.cumsum(r2 * dl_m, axis=1)[:, :-1]], axis=1)
        vals["cache"] = (S[:, None] * iterate.lam[:, None] - future - past).sum(axis=0)
        assert vals["cache"].shape == (N,)
    R1, R2 = _window_totals(ctx, r1, r2)
    if ctx.kind == "feasibility":
        tau = np.minimum(R1, R2) - iterate.lam * S
        vals["tau"] = tau
        vals["theta"] = np.array([tau.min()])
    if ctx.kind == "rate":
        vals["rho"] = np.minimum(R1, R2)
    return program.layout.pack(vals)


def extract_iterate(result: SolveResult, program: ConicProgram, j: int | None = None) -> Iterate:
    """Map an optimal solution back to a physical-unit :class:`Iterate`."""
    if not result.usable:
        raise ValueError(f"cannot extract an iterate from an {result.status} solve")
    ctx: ProgramContext = program.context
    sc, scen = ctx.scaling, ctx.scenario
    v = result.values
    q = v["q"] * sc.length
    q[0], q[-1] = scen.uav.start, scen.uav.end
    return Iterate(
        q=q,
        a1=np.clip(v["a1"], 0.0, 1.0),
        a2=np.clip(v["a2"], 0.0, 1.0),
        p1=np.clip(v["p1"] * sc.power, 0.0, np.asarray(scen.p_dev_max)[None, :]),
        p2=np.clip(v["p2"] * sc.power, 0.0, np.asarray(scen.uav.p_max)[None, :]),
        lam=np.clip(v["lam"], 0.0, 1.0),
        z1=v["z1"] * sc.zunit,
        z2=v["z2"] * sc.zunit,
        t1=v["t1"] * sc.noise if "t1" in v else None,
        phi1=v["phi1"] * sc.bandwidth,
        phi2=v["phi2"] * sc.bandwidth,
        r1=v["r1"] * sc.bandwidth,
        r2=v["r2"] * sc.bandwidth,
        j=j if j is not None else 0,
    )
