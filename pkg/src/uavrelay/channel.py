"""Link geometry, expected-rate lower bounds and a Monte-Carlo rate oracle.

Rates are in bits/s, powers in watts, distances in meters.  The lower bounds
replace the small-scale fading power by ``exp(-E)`` inside the logarithm,
where ``E`` is the Euler-Mascheroni constant; this is a valid lower bound on
the ergodic rate when the fading power is unit-mean exponential.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .scenario import ChannelParams, Device, Scenario, UavParams

__all__ = [
    "link_distance",
    "ul_sinr",
    "rate_lower_bound_ul",
    "rate_lower_bound_dl",
    "rate_hd",
    "RateSummary",
    "windowed_rates",
    "link_windows",
    "slot_rates",
    "FadingModel",
    "MCEstimate",
    "mc_expected_rate",
    "expected_log_exponential",
]


def link_distance(q, w, H: float):
    """Slant range between a UAV at horizontal position `q` and ground point `w`."""
    if not H > 0:
        raise ValueError("altitude must be positive")
    diff = np.asarray(q, dtype=float) - np.asarray(w, dtype=float)
    return np.sqrt(H**2 + np.sum(diff**2, axis=-1))


def ul_sinr(p1, gain_sq, d, interf_p2_sum, params: ChannelParams):
    """Instantaneous uplink SINR with residual self-interference.

    ``p1 * gain_sq * w0 / (d**alpha * (phi * interf_p2_sum + sigma2))``
    """
    nu = params.rsi_coeff * np.asarray(interf_p2_sum, dtype=float) + params.noise_power
    return p1 * gain_sq * params.ref_gain / (np.asarray(d, dtype=float) ** params.pathloss_exp * nu)


def _bound(a, p, q, w, nu, params: ChannelParams, uav: UavParams):
    d2 = uav.altitude**2 + np.sum((np.asarray(q, float) - np.asarray(w, float)) ** 2, axis=-1)
    snr = np.exp(-params.euler_const) * np.asarray(p, float) * params.ref_gain
    snr = snr / (d2 ** (params.pathloss_exp / 2) * nu)
    return np.asarray(a, float) * params.bandwidth * np.log2(1.0 + snr)


def rate_lower_bound_ul(a1, p1, q, w_k, interf_sum, params: ChannelParams, uav: UavParams):
    """Uplink rate lower bound in bits/s; `interf_sum` is the other devices' DL power."""
    nu = params.rsi_coeff * np.asarray(interf_sum, float) + params.noise_power
    return _bound(a1, p1, q, w_k, nu, params, uav)


def rate_lower_bound_dl(a2, p2, q, w_0, params: ChannelParams, uav: UavParams):
    """Downlink (UAV to gateway) rate lower bound in bits/s."""
    return _bound(a2, p2, q, w_0, params.noise_power, params, uav)


def rate_hd(a, p, q, w, params: ChannelParams, uav: UavParams):
    """Half-duplex rate lower bound; noise only, no self-interference."""
    return _bound(a, p, q, w, params.noise_power, params, uav)


# ----------------------------------------------------------------------------
# time windows


@dataclass(frozen=True)
class RateSummary:
    """Per-slot and windowed rates of one device.

    ``raw_*`` are per-slot lower-bound rates (bits/s); ``windowed_*`` are the
    same rates zeroed outside the link's window; ``total_*`` sum the windowed
    rates and ``throughput_*`` multiply that sum by the slot length (bits).
    """

    raw_ul: np.ndarray
    raw_dl: np.ndarray
    windowed_ul: np.ndarray
    windowed_dl: np.ndarray
    total_ul: float
    total_dl: float
    throughput_ul: float
    throughput_dl: float


def windowed_rates(raw, device: Device, N: int, *, slot_len: float = 1.0,
                   dl_start: int | None = None) -> RateSummary:
    """Restrict per-slot rates to the device's uplink and downlink windows.

    Parameters
    ----------
    raw : array_like, shape (2, N)
        Per-slot uplink and downlink rates.
    device : Device
    N : int
        Number of slots.
    slot_len : float
        Slot duration used for the throughputs.
    dl_start : int, optional
        First downlink slot (1-based); defaults to ``device.n_end + 1``.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (2, N):
        raise ValueError(f"raw must have shape (2, {N}), got {raw.shape}")
    slots = np.arange(1, N + 1)
    first_dl = device.n_end + 1 if dl_start is None else dl_start
    ul = np.where((slots >= device.n_start) & (slots <= device.n_end), raw[0], 0.0)
    dl = np.where(slots >= first_dl, raw[1], 0.0)
    return RateSummary(
        raw_ul=raw[0].copy(), raw_dl=raw[1].copy(), windowed_ul=ul, windowed_dl=dl,
        total_ul=float(ul.sum()), total_dl=float(dl.sum()),
        throughput_ul=float(slot_len * ul.sum()), throughput_dl=float(slot_len * dl.sum()),
    )


def link_windows(scenario: Scenario, duplex: str | None = None):
    """Boolean masks (K, N) of the uplink and downlink slots of every device.

    In half-duplex mode with the ``after_all`` policy the downlink of every
    device starts after the last uplink deadline.
    """
    duplex = (duplex or scenario.duplex).upper()
    K, N = scenario.n_devices, scenario.n_slots
    slots = np.arange(1, N + 1)
    n_start = np.array([d.n_start for d in scenario.devices])[:, None]
    n_end = np.array([d.n_end for d in scenario.devices])[:, None]
    ul = (slots >= n_start) & (slots <= n_end)
    if duplex == "HD" and scenario.hd_dl_policy == "after_all":
        dl = np.broadcast_to(slots > n_end.max(), (K, N)).copy()
    else:
        dl = slots > n_end
    return ul, dl


def slot_rates(scenario: Scenario, q, a1, a2, p1, p2, duplex: str | None = None):
    """Per-slot lower-bound rates (bits/s) of every device, shape (K, N) each.

    Uplink rates include self-interference from the other devices' downlink
    power in full-duplex mode.
    """
    duplex = (duplex or scenario.duplex).upper()
    q = np.asarray(q, float)
    w = scenario.positions[:, None, :]
    p2 = np.asarray(p2, float)
    params, uav = scenario.channel, scenario.uav
    if duplex == "FD":
        interf = p2.sum(axis=0)[None, :] - p2
        r1 = rate_lower_bound_ul(a1, p1, q[None], w, interf, params, uav)
    else:
        r1 = rate_hd(a1, p1, q[None], w, params, uav)
    r2 = rate_lower_bound_dl(a2, p2, q[None], np.asarray(scenario.gateway), params, uav)
    return r1, r2


# ----------------------------------------------------------------------------
# Monte-Carlo oracle


@dataclass(frozen=True)
class FadingModel:
    """Rician small-scale fading with a unit-modulus LoS part.

    ``h = sqrt(G/(1+G)) * 1 + sqrt(1/(1+G)) * CN(0, 1)``, so ``E|h|^2 = 1``.
    With ``G = 0`` the power ``|h|^2`` is unit-mean exponential.
    """

    rician_factor: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.rician_factor >= 0:
            raise ValueError("rician_factor must be nonnegative")

    def stream(self, index: int) -> np.random.Generator:
        """Independent counter-based generator for chunk `index`."""
        child = np.random.SeedSequence(self.rng_seed, spawn_key=(index,))
        return np.random.Generator(np.random.Philox(child))

    def sample_gain_sq(self, size: int, index: int = 0) -> np.ndarray:
        rng = self.stream(index)
        G = self.rician_factor
        if G == 0:
            return rng.standard_exponential(size)
        nlos = (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)
        h = np.sqrt(G / (1 + G)) + np.sqrt(1 / (1 + G)) * nlos
        return np.abs(h) ** 2


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with a two-sided confidence half-width."""

    mean: float
    half_width: float
    std_error: float
    samples: int
    confidence: float = 0.99


def mc_expected_rate(a, p, mean_snr_linear, fading: FadingModel, samples: int, *,
                     bandwidth: float = 1.0, workers: int = 1,
                     chunk: int = 1 << 16, confidence: float = 0.99) -> MCEstimate:
    """Monte-Carlo estimate of ``a * B * E[log2(1 + p * snr * |h|^2)]``.

    `mean_snr_linear` is the mean SNR per unit transmit power, so the mean
    received SNR is ``p * mean_snr_linear``.  Samples are drawn in fixed
    chunks, each from its own counter-based stream, and merged in chunk
    order; the result does not depend on `workers`.
    """
    if samples < 10_000:
        raise ValueError("at least 1e4 samples are required")
    snr = float(p) * float(mean_snr_linear)
    scale = float(a) * float(bandwidth)
    sizes = [chunk] * (samples // chunk)
    if samples % chunk:
        sizes.append(samples % chunk)

    def work(i):
        x = np.log2(1.0 + snr * fading.sample_gain_sq(sizes[i], index=i))
        return x.sum(), np.square(x).sum()

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(i) for i in range(len(sizes))]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / samples
    var = max(s2 / samples - mean**2, 0.0) * samples / (samples - 1)
    se = np.sqrt(var / samples)
    z = stats.norm.ppf(0.5 + confidence / 2)
    return MCEstimate(mean=scale * mean, half_width=scale * z * se, std_error=scale * se,
                      samples=samples, confidence=confidence)


def expected_log_exponential(snr):
    """``E[ln(1 + snr * X)]`` for unit-mean exponential X, in nats.

    Closed form ``exp(1/snr) * E1(1/snr)``; below ``snr = 1/500`` the
    asymptotic series ``sum_k (-1)^k k! snr^(k+1)`` avoids overflow.
    """
    x = 1.0 / np.asarray(snr, dtype=float)
    big = x > 500.0
    xs = np.where(big, 1.0, x)
    inv = 1.0 / np.where(big, x, 1.0)
    series = inv * (1 - inv * (1 - 2 * inv * (1 - 3 * inv * (1 - 4 * inv))))
    out = np.where(big, series, np.exp(xs) * special.exp1(xs))
    return float(out) if out.ndim == 0 else out
