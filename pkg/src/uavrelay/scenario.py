"""Problem data for the UAV relay planner.

A :class:`Scenario` bundles the devices, the gateway, the UAV limits and the
channel constants.  Everything is stored in linear SI units (watts, hertz,
bits, meters, seconds); dB and dBm strings are accepted only at the file
boundary and converted once by :func:`parse_quantity`.

Scenarios are frozen dataclasses whose vector fields are tuples, so two
scenarios compare equal exactly when every field is identical.
"""
from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

__all__ = [
    "EULER_GAMMA",
    "ScenarioError",
    "Device",
    "ChannelParams",
    "UavParams",
    "Scenario",
    "GeneratorConfig",
    "noise_from_bandwidth",
    "db_to_linear",
    "dbm_to_watts",
    "watts_to_dbm",
    "parse_quantity",
    "load_scenario",
    "save_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "random_scenario",
]

#: Euler-Mascheroni constant, as used by the expected-rate lower bound.
EULER_GAMMA = 0.57721566490153286061

SCHEMA = "uavrelay-scenario/1"


class ScenarioError(ValueError):
    """Raised when scenario data violates an invariant.

    The offending field is available as ``.field``.
    """

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# ----------------------------------------------------------------------------
# unit helpers


def db_to_linear(db):
    out = 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def dbm_to_watts(dbm):
    return db_to_linear(dbm) * 1e-3


def watts_to_dbm(watts):
    out = 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0
    return float(out) if out.ndim == 0 else out


def noise_from_bandwidth(bandwidth: float) -> float:
    """Thermal noise power in watts, -174 dBm/Hz integrated over `bandwidth`."""
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth!r}")
    return dbm_to_watts(-174.0 + 10.0 * math.log10(bandwidth))


_SCALE = {
    "power": {"W": 1.0, "mW": 1e-3, "uW": 1e-6, "kW": 1e3},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "bits": {"bit": 1.0, "bits": 1.0, "kbit": 1e3, "Mbit": 1e6, "Mbits": 1e6, "Gbit": 1e9},
    "rate": {"bit/s": 1.0, "kbit/s": 1e3, "Mbit/s": 1e6},
    "length": {"m": 1.0, "km": 1e3},
    "time": {"s": 1.0, "ms": 1e-3},
    "speed": {"m/s": 1.0, "km/h": 1.0 / 3.6},
    "gain": {},
}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]*)\s*$")


def parse_quantity(value: Any, kind: str, *, bandwidth: float | None = None) -> float:
    """Convert a file value to a linear SI float.

    Parameters
    ----------
    value : float or str
        Plain numbers are taken as already linear SI.  Strings carry a unit,
        e.g. ``"18 dBm"``, ``"-30 dB"``, ``"20 MHz"`` or ``"40 Mbit"``.
    kind : str
        One of ``power``, ``gain``, ``frequency``, ``bits``, ``rate``,
        ``length``, ``time``, ``speed``.
    bandwidth : float, optional
        Needed only for rates given in ``bit/s/Hz``.
    """
    if isinstance(value, bool):
        raise ValueError(f"expected a {kind} quantity, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    m = _QUANTITY.match(str(value))
    if m is None:
        raise ValueError(f"cannot parse {kind} quantity {value!r}")
    num, unit = float(m.group(1)), m.group(2)
    if unit == "":
        return num
    if kind == "power" and unit == "dBm":
        return float(dbm_to_watts(num))
    if kind == "power" and unit == "dBW":
        return float(db_to_linear(num))
    if kind == "gain" and unit == "dB":
        return float(db_to_linear(num))
    if kind == "rate" and unit == "bit/s/Hz":
        if bandwidth is None:
            raise ValueError("bit/s/Hz rates need the channel bandwidth")
        return num * bandwidth
    scale = _SCALE.get(kind, {}).get(unit)
    if scale is None:
        raise ValueError(f"unknown unit {unit!r} for a {kind} quantity")
    return num * scale


# ----------------------------------------------------------------------------
# data types


def _vec2(value, name) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ScenarioError(name, f"expected a 2-vector, got {value!r}") from None
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ScenarioError(name, "must be finite")
    return (x, y)


def _per_slot(value, n_slots: int, name: str) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(n_slots, float(arr[0]))
    if arr.shape != (n_slots,):
        raise ScenarioError(name, f"expected a scalar or {n_slots} per-slot values")
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ScenarioError(name, "must be finite and nonnegative")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class Device:
    """A ground device with a latency window.

    Slots are 1-based: the uplink window is ``n_start..n_end`` and, in
    full-duplex mode, the downlink window is ``n_end+1..N``.
    """

    id: int
    position: tuple[float, float]
    data_size: float  # bits
    n_start: int
    n_end: int

    def __post_init__(self):
        object.__setattr__(self, "position", _vec2(self.position, f"device {self.id} position"))
        object.__setattr__(self, "data_size", float(self.data_size))
        if not self.data_size > 0:
            raise ScenarioError(f"device {self.id} data_size", "must be positive")
        if not 1 <= self.n_start <= self.n_end:
            raise ScenarioError(
                f"device {self.id} n_end",
                f"need 1 <= n_start <= n_end, got n_start={self.n_start}, n_end={self.n_end}",
            )


@dataclass(frozen=True)
class ChannelParams:
    bandwidth: float = 20e6  # Hz
    noise_power: float = field(default_factory=lambda: noise_from_bandwidth(20e6))  # W
    ref_gain: float = 1e-3  # linear, -30 dB
    pathloss_exp: float = 2.4
    rician_factor: float = 0.0
    rsi_coeff: float = 1e-8  # linear, -80 dB; loop-channel gain fixed to 1
    euler_const: float = EULER_GAMMA

    def __post_init__(self):
        for name in ("bandwidth", "noise_power", "ref_gain"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"channel.{name}", "must be positive")
        if not self.pathloss_exp >= 2:
            raise ScenarioError("channel.pathloss_exp", "must be >= 2")
        if not 0 <= self.rsi_coeff < 1:
            raise ScenarioError("channel.rsi_coeff", "must lie in [0, 1)")
        if not self.rician_factor >= 0:
            raise ScenarioError("channel.rician_factor", "must be nonnegative")
        if abs(self.euler_const - EULER_GAMMA) > 1e-10:
            raise ScenarioError("channel.euler_const", "must equal the Euler-Mascheroni constant")


@dataclass(frozen=True)
class UavParams:
    altitude: float = 100.0
    v_max: float = 50.0
    slot_len: float = 0.5
    n_slots: int = 30
    cache_cap: float = 1000e6  # bits
    p_max: tuple[float, ...] | float = float(dbm_to_watts(18.0))  # W per slot
    start: tuple[float, float] = (500.0, 200.0)
    end: tuple[float, float] = (300.0, 0.0)

    def __post_init__(self):
        if not (isinstance(self.n_slots, (int, np.integer)) and self.n_slots >= 2):
            raise ScenarioError("uav.n_slots", "must be an integer >= 2")
        object.__setattr__(self, "n_slots", int(self.n_slots))
        for name in ("altitude", "v_max", "slot_len"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"uav.{name}", "must be positive")
        if not self.cache_cap >= 0:
            raise ScenarioError("uav.cache_cap", "must be nonnegative")
        object.__setattr__(self, "cache_cap", float(self.cache_cap))
        object.__setattr__(self, "p_max", _per_slot(self.p_max, self.n_slots, "uav.p_max"))
        object.__setattr__(self, "start", _vec2(self.start, "uav.start"))
        object.__setattr__(self, "end", _vec2(self.end, "uav.end"))
        gap = math.dist(self.start, self.end)
        if gap > (self.n_slots - 1) * self.max_step * (1 + 1e-12):
            raise ScenarioError(
                "uav.end",
                f"unreachable: |start-end| = {gap:.3f} m > (N-1)*max_step = "
                f"{(self.n_slots - 1) * self.max_step:.3f} m",
            )

    @property
    def max_step(self) -> float:
        """Largest horizontal move per slot, v_max * slot_len."""
        return self.v_max * self.slot_len

    @property
    def horizon(self) -> float:
        return self.n_slots * self.slot_len


@dataclass(frozen=True)
class Scenario:
    """Immutable description of one planning instance.

    Attributes
    ----------
    devices : tuple of Device
    gateway : (x, y) in meters
    channel, uav : parameter bundles
    p_dev_max : per-slot device power limit in watts, shared by all devices
    duplex : ``"FD"`` or ``"HD"``
    penalty : initial penalty weight for the binary relaxation
    binary_tol : tolerance used when rounding service indicators
    qos_threshold : optional minimum full-band rate in bits/s
    hd_dl_policy : ``"after_all"`` (downlink starts after the last uplink
        deadline) or ``"per_device"`` (downlink right after each deadline)
    area : optional side length of the square deployment area in meters
    """

    devices: tuple[Device, ...]
    gateway: tuple[float, float] = (0.0, 500.0)
    channel: ChannelParams = field(default_factory=ChannelParams)
    uav: UavParams = field(default_factory=UavParams)
    p_dev_max: tuple[float, ...] | float = float(dbm_to_watts(10.0))
    duplex: str = "FD"
    penalty: float = 1.0
    binary_tol: float = 1e-3
    qos_threshold: float | None = None
    hd_dl_policy: str = "after_all"
    area: float | None = None

    def __post_init__(self):
        devices = tuple(self.devices)
        if not devices:
            raise ScenarioError("devices", "at least one device is required")
        ids = [d.id for d in devices]
        if len(set(ids)) != len(ids):
            raise ScenarioError("devices", f"device ids must be unique, got {ids}")
        n = self.uav.n_slots
        for d in devices:
            if d.n_end > n:
                raise ScenarioError(f"device {d.id} n_end", f"must be <= N = {n}")
            if self.area is not None and not all(0 <= c <= self.area for c in d.position):
                raise ScenarioError(f"device {d.id} position", f"outside the {self.area} m area")
        object.__setattr__(self, "devices", devices)
        object.__setattr__(self, "gateway", _vec2(self.gateway, "gateway"))
        object.__setattr__(self, "p_dev_max", _per_slot(self.p_dev_max, n, "p_dev_max"))
        duplex = str(self.duplex).upper()
        if duplex not in ("FD", "HD"):
            raise ScenarioError("duplex", f"must be FD or HD, got {self.duplex!r}")
        object.__setattr__(self, "duplex", duplex)
        if not self.penalty > 0:
            raise ScenarioError("penalty", "must be positive")
        if not 0 < self.binary_tol < 0.5:
            raise ScenarioError("binary_tol", "must lie in (0, 0.5)")
        if self.qos_threshold is not None and not self.qos_threshold >= 0:
            raise ScenarioError("qos_threshold", "must be nonnegative")
        if self.hd_dl_policy not in ("after_all", "per_device"):
            raise ScenarioError("hd_dl_policy", "must be 'after_all' or 'per_device'")
        if self.area is not None and not self.area > 0:
            raise ScenarioError("area", "must be positive")

    # convenience views -----------------------------------------------------

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    @property
    def n_slots(self) -> int:
        return self.uav.n_slots

    @property
    def positions(self) -> np.ndarray:
        return np.array([d.position for d in self.devices], dtype=float)

    @property
    def data_sizes(self) -> np.ndarray:
        return np.array([d.data_size for d in self.devices], dtype=float)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def with_duplex(self, duplex: str) -> "Scenario":
        return dataclasses.replace(self, duplex=duplex)


# ----------------------------------------------------------------------------
# file I/O


def _get(section: dict, key: str, where: str, default=dataclasses.MISSING):
    if key in section:
        return section[key]
    if default is dataclasses.MISSING:
        raise ScenarioError(f"{where}.{key}", "missing")
    return default


def _quantity(section, key, kind, where, default=dataclasses.MISSING, **kw):
    raw = _get(section, key, where, default)
    if raw is None:
        return None
    try:
        if isinstance(raw, (list, tuple)):
            return [parse_quantity(v, kind, **kw) for v in raw]
        return parse_quantity(raw, kind, **kw)
    except ValueError as exc:
        raise ScenarioError(f"{where}.{key}", str(exc)) from None


def scenario_from_dict(data: dict) -> Scenario:
    """Build a validated :class:`Scenario` from a parsed scenario document."""
    if not isinstance(data, dict):
        raise ScenarioError("<root>", "expected a mapping")
    schema = data.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ScenarioError("schema", f"unsupported schema {schema!r}, expected {SCHEMA!r}")
    ch = data.get("channel", {}) or {}
    bandwidth = _quantity(ch, "bandwidth", "frequency", "channel", 20e6)
    noise = ch.get("noise_power", "auto")
    noise = (
        noise_from_bandwidth(bandwidth)
        if noise in (None, "auto")
        else _quantity(ch, "noise_power", "power", "channel")
    )
    channel = ChannelParams(
        bandwidth=bandwidth,
        noise_power=noise,
        ref_gain=_quantity(ch, "ref_gain", "gain", "channel", 1e-3),
        pathloss_exp=_quantity(ch, "pathloss_exp", "gain", "channel", 2.4),
        rician_factor=_quantity(ch, "rician_factor", "gain", "channel", 0.0),
        rsi_coeff=_quantity(ch, "rsi", "gain", "channel", 1e-8),
    )
    u = _get(data, "uav", "<root>")
    uav = UavParams(
        altitude=_quantity(u, "altitude", "length", "uav", 100.0),
        v_max=_quantity(u, "v_max", "speed", "uav", 50.0),
        slot_len=_quantity(u, "slot_len", "time", "uav", 0.5),
        n_slots=int(_get(u, "n_slots", "uav")),
        cache_cap=_quantity(u, "cache_cap", "bits", "uav"),
        p_max=_quantity(u, "p_max", "power", "uav"),
        start=_get(u, "start", "uav"),
        end=_get(u, "end", "uav"),
    )
    dev = _get(data, "devices", "<root>")
    items = _get(dev, "items", "devices")
    devices = []
    for i, item in enumerate(items):
        where = f"devices.items[{i}]"
        devices.append(
            Device(
                id=int(_get(item, "id", where)),
                position=_get(item, "position", where),
                data_size=_quantity(item, "data_size", "bits", where),
                n_start=int(_get(item, "n_start", where)),
                n_end=int(_get(item, "n_end", where)),
            )
        )
    plan = data.get("planner", {}) or {}
    return Scenario(
        devices=tuple(devices),
        gateway=_get(data, "gateway", "<root>"),
        channel=channel,
        uav=uav,
        p_dev_max=_quantity(dev, "p_max", "power", "devices"),
        duplex=data.get("duplex", "FD"),
        penalty=float(plan.get("penalty", 1.0)),
        binary_tol=float(plan.get("binary_tol", 1e-3)),
        qos_threshold=_quantity(plan, "qos_threshold", "rate", "planner", None, bandwidth=bandwidth),
        hd_dl_policy=plan.get("hd_dl_policy", "after_all"),
        area=_quantity(data, "area", "length", "<root>", None),
    )


def _compact(values: tuple[float, ...]):
    return values[0] if len(set(values)) == 1 else list(values)


def scenario_to_dict(scenario: Scenario) -> dict:
    """Serialize to a plain mapping holding linear SI numbers only."""
    ch, u = scenario.channel, scenario.uav
    return {
        "schema": SCHEMA,
        "duplex": scenario.duplex,
        "area": scenario.area,
        "gateway": list(scenario.gateway),
        "channel": {
            "bandwidth": ch.bandwidth,
            "noise_power": ch.noise_power,
            "ref_gain": ch.ref_gain,
            "pathloss_exp": ch.pathloss_exp,
            "rician_factor": ch.rician_factor,
            "rsi": ch.rsi_coeff,
        },
        "uav": {
            "altitude": u.altitude,
            "v_max": u.v_max,
            "slot_len": u.slot_len,
            "n_slots": u.n_slots,
            "cache_cap": u.cache_cap,
            "p_max": _compact(u.p_max),
            "start": list(u.start),
            "end": list(u.end),
        },
        "devices": {
            "p_max": _compact(scenario.p_dev_max),
            "items": [
                {
                    "id": d.id,
                    "position": list(d.position),
                    "data_size": d.data_size,
                    "n_start": d.n_start,
                    "n_end": d.n_end,
                }
                for d in scenario.devices
            ],
        },
        "planner": {
            "penalty": scenario.penalty,
            "binary_tol": scenario.binary_tol,
            "qos_threshold": scenario.qos_threshold,
            "hd_dl_policy": scenario.hd_dl_policy,
        },
    }


def load_scenario(path) -> Scenario:
    """Read and validate a YAML scenario file."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError("<file>", f"parse failure in {path}: {exc}") from None
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path) -> None:
    """Write `scenario` as YAML in linear SI units."""
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False))


# ----------------------------------------------------------------------------
# seeded generator


#: Horizon the reference deadline ranges were stated for.
REFERENCE_SLOTS = 70


@dataclass(frozen=True)
class GeneratorConfig:
    """Recipe for a random scenario; devices are placed uniformly in the area.

    Defaults reproduce the constants of the numerical study with a 30-slot
    horizon.  ``data_size_range`` is in bits.  When the slot ranges are left
    as None they are scaled from the reference ranges ``[2, 15]`` and
    ``[25, 50]`` of a 70-slot horizon, so every device keeps a downlink window.
    """

    n_devices: int = 10
    n_slots: int = 30
    area: float = 500.0
    gateway: tuple[float, float] = (0.0, 500.0)
    start: tuple[float, float] = (500.0, 200.0)
    end: tuple[float, float] = (300.0, 0.0)
    altitude: float = 100.0
    v_max: float = 50.0
    slot_len: float = 0.5
    bandwidth: float = 20e6
    ref_gain_db: float = -30.0
    pathloss_exp: float = 2.4
    rsi_db: float = -80.0
    rician_factor: float = 0.0
    p_uav_dbm: float = 18.0
    p_dev_dbm: float = 10.0
    cache_cap: float = 1000e6
    data_size_range: tuple[float, float] = (10e6, 70e6)
    n_start_range: tuple[int, int] | None = None
    n_end_range: tuple[int, int] | None = None
    duplex: str = "FD"
    penalty: float = 1.0
    binary_tol: float = 1e-3
    hd_dl_policy: str = "after_all"

    def replace(self, **changes) -> "GeneratorConfig":
        return dataclasses.replace(self, **changes)

    def slot_ranges(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """Resolved ``(n_start_range, n_end_range)`` for this horizon."""
        n = self.n_slots

        def scaled(lo, hi):
            return (max(1, round(lo * n / REFERENCE_SLOTS)), max(1, round(hi * n / REFERENCE_SLOTS)))

        start = self.n_start_range or scaled(2, 15)
        end = self.n_end_range or scaled(25, 50)
        return tuple(start), tuple(end)


def random_scenario(seed: int, config: GeneratorConfig | None = None, **overrides) -> Scenario:
    """Draw a scenario from `config` with a seeded generator.

    Positions are uniform on ``[0, area]^2``; data sizes uniform on
    ``data_size_range``; ``n_start`` and ``n_end`` uniform integers on their
    ranges, clipped so that ``n_start <= n_end <= N``.
    """
    cfg = (config or GeneratorConfig()).replace(**overrides)
    rng = np.random.default_rng(seed)
    k, n = cfg.n_devices, cfg.n_slots
    pos = rng.uniform(0.0, cfg.area, size=(k, 2))
    sizes = rng.uniform(*cfg.data_size_range, size=k)
    (s_lo, s_hi), (e_lo, e_hi) = cfg.slot_ranges()
    n_start = rng.integers(s_lo, s_hi + 1, size=k)
    n_end = rng.integers(e_lo, e_hi + 1, size=k)
    n_start = np.clip(n_start, 1, n)
    n_end = np.clip(np.maximum(n_end, n_start), 1, n)
    devices = tuple(
        Device(id=i + 1, position=tuple(pos[i]), data_size=float(sizes[i]),
               n_start=int(n_start[i]), n_end=int(n_end[i]))
        for i in range(k)
    )
    return Scenario(
        devices=devices,
        gateway=cfg.gateway,
        channel=ChannelParams(
            bandwidth=cfg.bandwidth,
            noise_power=noise_from_bandwidth(cfg.bandwidth),
            ref_gain=float(db_to_linear(cfg.ref_gain_db)),
            pathloss_exp=cfg.pathloss_exp,
            rician_factor=cfg.rician_factor,
            rsi_coeff=float(db_to_linear(cfg.rsi_db)),
        ),
        uav=UavParams(
            altitude=cfg.altitude,
            v_max=cfg.v_max,
            slot_len=cfg.slot_len,
            n_slots=n,
            cache_cap=cfg.cache_cap,
            p_max=float(dbm_to_watts(cfg.p_uav_dbm)),
            start=cfg.start,
            end=cfg.end,
        ),
        p_dev_max=float(dbm_to_watts(cfg.p_dev_dbm)),
        duplex=cfg.duplex,
        penalty=cfg.penalty,
        binary_tol=cfg.binary_tol,
        hd_dl_policy=cfg.hd_dl_policy,
        area=cfg.area,
    )
