"""Independent brute-force oracles used by the test suite.

Rates here are written out from the expected-rate lower bound directly and
do not call into the package.
"""
import itertools
import math

import numpy as np

EULER = 0.5772156649015329


def lower_bound_rate(a, p, q, w, *, H, B, w0, alpha, s2, interference=0.0, rsi=0.0):
    d2 = H * H + (q[0] - w[0]) ** 2 + (q[1] - w[1]) ** 2
    snr = math.exp(-EULER) * p * w0 / (d2 ** (alpha / 2) * (rsi * interference + s2))
    return a * B * math.log2(1 + snr)


def grid_single_device(start, end, n_slots, max_step, device, gateway, n_end, *, H, B, w0, alpha,
                       s2, p_dev, p_uav, slot_len, spacing, limit=100_000):
    """Best ``min(C_ul, C_dl)`` in bits over lattice trajectories for one device.

    With a single device the full bandwidth and both power budgets are
    optimal in every slot (there is no competing link and no
    self-interference from other devices), so only the trajectory is
    searched.  Waypoints 2..N-1 range over lattice points reachable from
    both endpoints; consecutive points must be within `max_step`.

    Returns ``(best_value, best_path, n_candidates)``.
    """
    start, end = np.asarray(start, float), np.asarray(end, float)
    lo = np.minimum(start, end) - n_slots * max_step
    hi = np.maximum(start, end) + n_slots * max_step
    xs = np.arange(lo[0], hi[0] + 1e-9, spacing)
    ys = np.arange(lo[1], hi[1] + 1e-9, spacing)
    lattice = np.array([(x, y) for x in xs for y in ys])
    options = []
    for n in range(2, n_slots):
        ok = (np.linalg.norm(lattice - start, axis=1) <= (n - 1) * max_step + 1e-9) & \
             (np.linalg.norm(lattice - end, axis=1) <= (n_slots - n) * max_step + 1e-9)
        options.append(lattice[ok])
    total = math.prod(len(o) for o in options)
    if total > limit:
        raise ValueError(f"{total} candidates exceed the limit {limit}")
    kw = dict(H=H, B=B, w0=w0, alpha=alpha, s2=s2)
    ul_rate = [np.array([lower_bound_rate(1.0, p_dev, q, device, **kw) for q in o]) for o in options]
    dl_rate = [np.array([lower_bound_rate(1.0, p_uav, q, gateway, **kw) for q in o]) for o in options]
    first = (lower_bound_rate(1.0, p_dev, start, device, **kw), lower_bound_rate(1.0, p_uav, start, gateway, **kw))
    last = (lower_bound_rate(1.0, p_dev, end, device, **kw), lower_bound_rate(1.0, p_uav, end, gateway, **kw))
    best, best_path = -1.0, None
    for idx in itertools.product(*[range(len(o)) for o in options]):
        path = [start] + [options[i][j] for i, j in enumerate(idx)] + [end]
        if any(np.linalg.norm(path[i + 1] - path[i]) > max_step + 1e-9 for i in range(n_slots - 1)):
            continue
        ul = [first[0]] + [ul_rate[i][j] for i, j in enumerate(idx)] + [last[0]]
        dl = [first[1]] + [dl_rate[i][j] for i, j in enumerate(idx)] + [last[1]]
        c_ul = slot_len * sum(ul[:n_end])
        c_dl = slot_len * sum(dl[n_end:])
        value = min(c_ul, c_dl)
        if value > best:
            best, best_path = value, np.array(path)
    return best, best_path, total
