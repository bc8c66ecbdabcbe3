"""Pure-Python crossing-time kernel (reference and fallback).

Mirrors ``_ckernels.pyx`` operation for operation so both backends give
bit-identical results.
"""
import math

import numpy as np


def crossing_times(offsets, durations, slopes, t_max):
    """First zero-crossing of engagement for a batch of users.

    User ``i`` owns sections ``offsets[i]:offsets[i + 1]``. Engagement starts
    at 1 and moves with ``slopes[k]`` for ``durations[k]`` seconds; each
    user's last section continues indefinitely. Returns
    ``(durations_from_arrival, capped)`` where a user is capped when the
    crossing would happen after ``t_max`` or never.
    """
    n_users = len(offsets) - 1
    out = np.empty(n_users, dtype=np.float64)
    capped = np.zeros(n_users, dtype=np.uint8)
    offsets = [int(o) for o in offsets]
    durations = [float(d) for d in durations]
    slopes = [float(a) for a in slopes]
    for i in range(n_users):
        lo, hi = offsets[i], offsets[i + 1]
        el = 1.0
        t = 0.0
        hit = math.inf
        for k in range(lo, hi):
            a = slopes[k]
            d = durations[k]
            if a < 0.0:
                tc = t + el / -a
                if k == hi - 1 or tc <= t + d:
                    hit = tc
                    break
            el = el + a * d
            t = t + d
        if hit > t_max:
            out[i] = t_max
            capped[i] = 1
        else:
            out[i] = hit
    return out, capped
