"""Self-checks of the rate bounds and surrogates, run by ``uavrelay validate``.

Each check returns a :class:`Check` with a pass flag and a one-line detail.
The ``bounds`` suite compares the closed-form expected-rate bound against
Monte-Carlo estimates and the exponential-integral closed form; the
``surrogates`` suite samples random points and verifies tightness and bound
direction; the ``constants`` suite pins derived constants.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import surrogates as sg
from .channel import FadingModel, expected_log_exponential, mc_expected_rate
from .scenario import EULER_GAMMA, ChannelParams, UavParams, noise_from_bandwidth, watts_to_dbm

__all__ = ["Check", "SUITES", "run_suite", "bound_checks", "surrogate_checks", "constant_checks"]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def bound_checks(seed: int = 0, samples: int = 100_000) -> list[Check]:
    """Expected-rate lower bound versus Monte-Carlo, Rayleigh fading."""
    out = []
    fading = FadingModel(0.0, seed)
    for snr in (0.1, 1.0, 10.0, 100.0):
        est = mc_expected_rate(1.0, 1.0, snr, fading, samples)
        bound = np.log2(1 + np.exp(-EULER_GAMMA) * snr)
        exact = expected_log_exponential(snr) / np.log(2)
        z = abs(est.mean - exact) / est.std_error
        out.append(Check(f"rate-bound snr={snr:g}", est.mean >= bound,
                         f"mc={est.mean:.6f} bound={bound:.6f}"))
        out.append(Check(f"rate-closed-form snr={snr:g}", z <= 3.0,
                         f"mc={est.mean:.6f} exact={exact:.6f} z={z:.2f}"))
    return out


def _rel(a, b):
    return np.abs(a - b) / np.maximum(1.0, np.abs(b))


def _unit_channel() -> ChannelParams:
    return ChannelParams(bandwidth=1.0, noise_power=1.0, ref_gain=1.0)


def _xi_ul(p1, z1, t1, p10, z10, t10):
    one = np.ones_like(np.asarray(p1, float))
    pt = sg.ExpansionPoint(p1, z1, t1, one, one)
    e = sg.ExpansionPoint(p10, z10, t10, one, one)
    xi = sg.xi_terms_fd(pt, e, _unit_channel())
    return xi[0] + xi[1] - xi[2]


def _xi_dl(p2, z2, p20, z20):
    one = np.ones_like(np.asarray(p2, float))
    xi = sg.xi_terms_fd(sg.ExpansionPoint(one, one, one, p2, z2),
                        sg.ExpansionPoint(one, one, one, p20, z20), _unit_channel())
    return xi[3] + xi[4] - xi[5]


#: name -> (surrogate(*x, *x0), true(*x), arity, side); side +1 for upper bounds.
SURROGATES = {
    "sqrt-bilinear": (sg.sqrt_bilinear_upper, lambda x, y: np.sqrt(x * y), 2, +1),
    "log-ratio-h2": (sg.log_ratio_lower_h2, lambda x, z: np.log1p(x / z), 2, -1),
    "log-quotient-h1": (sg.log_quotient_lower_h1, lambda x, y, z: np.log1p(x / (y * z)), 3, -1),
    "xi-uplink": (_xi_ul, lambda p, z, t: np.log2(1 + np.exp(-EULER_GAMMA) * p / (z * t)), 3, -1),
    "xi-downlink": (_xi_dl, lambda p, z: np.log2(1 + np.exp(-EULER_GAMMA) * p / z), 2, -1),
    "dc-bilinear": (sg.bilinear_dc_lower, lambda x, y: x * y, 2, -1),
}


def _gradient(f, args, step=1e-6):
    """Central finite differences with a relative step, one column per argument."""
    out = []
    for i, a in enumerate(args):
        h = step * a
        up = list(args)
        dn = list(args)
        up[i] = a + h
        dn[i] = a - h
        out.append((np.asarray(f(*up)) - np.asarray(f(*dn))) / (2 * h))
    return np.stack(out, axis=-1)


def surrogate_checks(seed: int = 0, points: int = 100, samples: int = 10_000,
                     grad_tol: float = 1e-5) -> list[Check]:
    """Tightness, bound direction and gradient match of every surrogate."""
    rng = np.random.default_rng(seed)
    out = []

    def pos(size, lo=1e-2, hi=1e2):
        return np.exp(rng.uniform(np.log(lo), np.log(hi), size))

    for name, (sur, true, arity, side) in SURROGATES.items():
        x0 = [pos(points) for _ in range(arity)]
        tight = float(np.max(_rel(sur(*x0, *x0), true(*x0))))
        out.append(Check(f"{name} tightness", tight <= 1e-8, f"max rel gap {tight:.2e}"))
        idx = rng.integers(0, points, samples)
        x = [pos(samples) for _ in range(arity)]
        ref = true(*x)
        diff = side * (sur(*x, *[a[idx] for a in x0]) - ref)
        bad = int(np.sum(diff < -1e-9 * np.maximum(1.0, np.abs(ref))))
        out.append(Check(f"{name} direction", bad == 0, f"{bad} violations in {samples} samples"))
        gs = _gradient(lambda *v: sur(*v, *x0), x0)
        gf = _gradient(true, x0)
        err = np.linalg.norm(gs - gf, axis=-1) / np.linalg.norm(gf, axis=-1)
        out.append(Check(f"{name} gradient", float(err.max()) <= grad_tol,
                         f"max rel error {err.max():.2e}"))

    lam0 = rng.uniform(0.05, 0.95, (points, 5))
    lam = rng.uniform(0, 1, (samples, 5))
    pick = rng.integers(0, points, samples)
    excess = max(sg.penalty_linearized(l, lam0[i]) - sg.penalty_value(l) for l, i in zip(lam, pick))
    tight = max(abs(sg.penalty_linearized(l0, l0) - sg.penalty_value(l0)) for l0 in lam0)
    out.append(Check("penalty tightness", tight <= 1e-8, f"max gap {tight:.1e}"))
    out.append(Check("penalty direction", excess <= 1e-12, f"max excess {excess:.1e}"))
    err = 0.0
    for l0 in lam0:
        cols = np.split(l0, 5)
        gs = _gradient(lambda *v: sg.penalty_linearized(np.concatenate(v), l0), cols)
        gf = _gradient(lambda *v: sg.penalty_value(np.concatenate(v)), cols)
        err = max(err, float(np.linalg.norm(gs - gf) / np.linalg.norm(gf)))
    out.append(Check("penalty gradient", err <= grad_tol, f"max rel error {err:.2e}"))
    return out


def constant_checks() -> list[Check]:
    sigma_dbm = watts_to_dbm(noise_from_bandwidth(20e6))
    step = UavParams().max_step
    return [
        Check("noise power 20 MHz", abs(sigma_dbm - (-100.9897)) <= 1e-4, f"{sigma_dbm:.6f} dBm"),
        Check("max step", step == 25.0, f"{step} m"),
        Check("euler constant", abs(EULER_GAMMA - np.euler_gamma) < 1e-12, f"{EULER_GAMMA:.12f}"),
    ]


SUITES = {
    "bounds": bound_checks,
    "surrogates": surrogate_checks,
    "constants": constant_checks,
}


def run_suite(name: str = "all", seed: int = 0) -> list[Check]:
    """Run one suite by name, or every suite for ``"all"``."""
    names = list(SUITES) if name == "all" else [name]
    out = []
    for n in names:
        if n not in SUITES:
            raise ValueError(f"unknown suite {n!r}; choose from {sorted(SUITES)} or 'all'")
        fn = SUITES[n]
        out += fn() if n == "constants" else fn(seed=seed)
    return out
