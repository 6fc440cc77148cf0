"""The iterate of the inner-approximation loop and its unit scaling.

:class:`Iterate` holds one full point in physical units.  The subproblems are
built in scaled units (see :class:`Scaling`) so that every coefficient handed
to the solver is of moderate magnitude.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .channel import link_windows
from .scenario import Scenario

__all__ = ["Iterate", "Scaling", "tight_iterate", "straight_line", "windows"]


@dataclass
class Iterate:
    """One point of the iterative scheme, in physical units.

    Attributes
    ----------
    q : (N, 2) UAV horizontal positions, meters
    a1, a2 : (K, N) uplink / downlink bandwidth fractions
    p1, p2 : (K, N) device / UAV transmit powers, watts
    lam : (K,) relaxed service indicators
    z1, z2 : (K, N) distance slacks, ``z >= d**alpha``
    t1 : (K, N) uplink interference-plus-noise slack in watts, or None (HD)
    phi1, phi2 : (K, N) full-band rate slacks, bits/s
    r1, r2 : (K, N) per-slot rate slacks, bits/s
    j : iteration index
    """

    q: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    lam: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    t1: np.ndarray | None
    phi1: np.ndarray
    phi2: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    j: int = 0

    def copy(self, **changes) -> "Iterate":
        fields = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        fields = {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in fields.items()}
        fields.update(changes)
        return Iterate(**fields)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


@dataclass(frozen=True)
class Scaling:
    """Reference units of the scaled subproblems.

    lengths in units of the altitude ``H``; powers in milliwatts; distance
    slacks in ``H**alpha``; the uplink noise slack in units of the noise
    power; rates per hertz; data in units of ``B * slot_len`` bits.
    """

    length: float
    power: float
    zunit: float
    noise: float
    bandwidth: float
    data: float
    alpha: float
    gamma: float  # scaled SNR per unit power at unit distance slack
    beta: float  # scaled self-interference per unit power

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "Scaling":
        ch, uav = scenario.channel, scenario.uav
        H, power = uav.altitude, 1e-3
        zunit = H**ch.pathloss_exp
        return cls(
            length=H,
            power=power,
            zunit=zunit,
            noise=ch.noise_power,
            bandwidth=ch.bandwidth,
            data=ch.bandwidth * uav.slot_len,
            alpha=ch.pathloss_exp,
            gamma=np.exp(-ch.euler_const) * ch.ref_gain * power / (zunit * ch.noise_power),
            beta=ch.rsi_coeff * power / ch.noise_power,
        )


def windows(scenario: Scenario, duplex: str):
    """Uplink/downlink masks plus per-device window lengths."""
    ul, dl = link_windows(scenario, duplex)
    return ul, dl, ul.sum(axis=1), dl.sum(axis=1)


def straight_line(scenario: Scenario) -> np.ndarray:
    """Evenly spaced points from the start to the end position."""
    N = scenario.n_slots
    s = np.linspace(0.0, 1.0, N)[:, None]
    start, end = np.asarray(scenario.uav.start), np.asarray(scenario.uav.end)
    q = start + s * (end - start)
    q[0], q[-1] = start, end
    return q


def tight_iterate(scenario: Scenario, q, a1, a2, p1, p2, lam, duplex: str | None = None, j: int = 0) -> Iterate:
    """Iterate whose slacks equal their defining expressions."""
    duplex = (duplex or scenario.duplex).upper()
    ch, uav = scenario.channel, scenario.uav
    K, N = scenario.n_devices, scenario.n_slots
    q = np.asarray(q, float).reshape(N, 2)
    shape = (K, N)
    a1, a2, p1, p2 = (np.broadcast_to(np.asarray(v, float), shape).copy() for v in (a1, a2, p1, p2))
    lam = np.broadcast_to(np.asarray(lam, float), (K,)).copy()
    d1sq = uav.altitude**2 + ((q[None, :, :] - scenario.positions[:, None, :]) ** 2).sum(-1)
    d2sq = uav.altitude**2 + ((q - np.asarray(scenario.gateway)) ** 2).sum(-1)
    z1 = d1sq ** (ch.pathloss_exp / 2)
    z2 = np.broadcast_to(d2sq ** (ch.pathloss_exp / 2), shape).copy()
    c = np.exp(-ch.euler_const) * ch.ref_gain
    if duplex == "FD":
        t1 = ch.rsi_coeff * (p2.sum(axis=0)[None, :] - p2) + ch.noise_power
        phi1 = ch.bandwidth * np.log2(1 + c * p1 / (z1 * t1))
    else:
        t1 = None
        phi1 = ch.bandwidth * np.log2(1 + c * p1 / (z1 * ch.noise_power))
    phi2 = ch.bandwidth * np.log2(1 + c * p2 / (z2 * ch.noise_power))
    return Iterate(q=q.copy(), a1=a1, a2=a2, p1=p1, p2=p2, lam=lam, z1=z1, z2=z2, t1=t1,
                   phi1=phi1, phi2=phi2, r1=a1 * phi1, r2=a2 * phi2, j=j)
