from hri_engagement.timeline import InteractionSession, UserRecord


def make_session(users: dict, session_id: str = "s1") -> InteractionSession:
    """``users`` maps user id to a list of (behavior name, start, end)."""
    return InteractionSession(
        session_id, tuple(UserRecord.from_intervals(uid, ivs) for uid, ivs in users.items())
    )


def split_interval(session: InteractionSession, user_index: int, interval_index: int, frac: float):
    """Copy of ``session`` with one interval cut in two, same behavior on both sides."""
    users = list(session.users)
    u = users[user_index]
    ivs = [(iv.behavior, iv.start, iv.end) for iv in u.intervals]
    b, s, e = ivs[interval_index]
    m = s + frac * (e - s)
    ivs[interval_index : interval_index + 1] = [(b, s, m), (b, m, e)]
    users[user_index] = UserRecord.from_intervals(u.user_id, ivs)
    return InteractionSession(session.session_id, tuple(users))


def integrated_product_moments(factors):
    """Mean and variance of the normalized product of Gaussian densities by
    trapezoid quadrature. ``factors`` is a list of (mean, variance).

    The grid is built without the closed form: the product's mass lies
    between the smallest and largest factor mean, and its spread is at most
    the narrowest factor's. Spacing is fine enough that trapezoid error on a
    Gaussian is far below double precision.
    """
    import numpy as np

    means = np.array([m for m, _ in factors], dtype=float)
    sds = np.sqrt([v for _, v in factors])
    s_min = sds.min()
    h = s_min / (6.0 * np.sqrt(len(factors)))
    lo, hi = means.min() - 8.0 * s_min, means.max() + 8.0 * s_min
    x = np.linspace(lo, hi, int(np.ceil((hi - lo) / h)) + 1)
    logp = sum(-0.5 * (x - m) ** 2 / (s * s) for m, s in zip(means, sds))
    p = np.exp(logp - logp.max())

    def trap(f):
        return float(f.sum() - 0.5 * (f[0] + f[-1]))  # uniform spacing cancels

    z = trap(p)
    mu = trap(x * p) / z
    var = trap((x - mu) ** 2 * p) / z
    return float(mu), float(var)


def brute_mae(errors):
    from fractions import Fraction

    return float(sum(Fraction(abs(e)) for e in errors) / len(errors))


def brute_median(errors):
    s = sorted(errors)
    n = len(s)
    return s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2


def brute_mode(errors, width=5.0):
    """Count every candidate bin ``[c - w/2, c + w/2)`` exhaustively."""
    import math

    lo = math.floor(min(errors) / width) - 2
    hi = math.ceil(max(errors) / width) + 2
    counts = {}
    for k in range(lo, hi + 1):
        c = k * width
        counts[c] = sum(1 for e in errors if c - width / 2 <= e < c + width / 2)
    top = max(counts.values())
    tied = [c for c, n in counts.items() if n == top]
    return min(tied, key=lambda c: (abs(c), c))
