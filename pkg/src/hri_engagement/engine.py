"""Piecewise-linear engagement trajectories and duration estimates.

Engagement starts at 1 on arrival and changes linearly inside each section
with a slope taken from the section's effective slope distribution. The
estimated interaction duration is the first time engagement reaches 0.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .behaviors import BEHAVIORS, N_BEHAVIORS, BehaviorCategory, GaussianParams, ParameterSet
from .timeline import InteractionSession, Section, check, segment


def gaussian_product(factors: Sequence[GaussianParams]) -> GaussianParams:
    """Normalized product of Gaussian densities.

    Precisions add; the mean is the precision-weighted average of the factor
    means.
    """
    if not factors:
        raise ValueError("gaussian_product needs at least one factor")
    if len(factors) == 1:
        return factors[0]
    precision = math.fsum(1.0 / f.variance for f in factors)
    weighted = math.fsum(f.mean / f.variance for f in factors)
    return GaussianParams(weighted / precision, 1.0 / precision)


def effective_slope(
    target_behavior: BehaviorCategory,
    co_behaviors: Sequence[BehaviorCategory],
    params: ParameterSet,
) -> GaussianParams:
    """Slope distribution for a section.

    Independent behaviors, and any behavior without co-present users, use
    their own distribution. A dependent behavior is multiplied with the raw
    distribution of every co-present user's behavior (one level deep).
    """
    own = params[target_behavior]
    if not target_behavior.dependent or not co_behaviors:
        return own
    return gaussian_product([own, *(params[b] for b in co_behaviors)])


@dataclass(frozen=True)
class SectionSlope:
    section: Section
    effective: GaussianParams
    applied: float


@dataclass(frozen=True)
class EngagementTrace:
    """Breakpoints are absolute ``(time, engagement)`` pairs; the estimated
    duration is measured from the user's arrival."""

    session_id: str
    user_id: str
    arrival: float
    breakpoints: tuple[tuple[float, float], ...]
    section_slopes: tuple[SectionSlope, ...]
    estimated_duration: float
    capped: bool

    def engagement_at(self, t: float) -> float:
        """Linear interpolation between breakpoints (valid up to the last one)."""
        times = [p[0] for p in self.breakpoints]
        if t < times[0] or t > times[-1]:
            raise ValueError(f"t={t} outside trace [{times[0]}, {times[-1]}]")
        k = max(0, min(np.searchsorted(times, t, side="right") - 1, len(times) - 2))
        (t0, e0), (t1, e1) = self.breakpoints[k], self.breakpoints[k + 1]
        if t1 == t0:
            return e0
        return e0 + (e1 - e0) * (t - t0) / (t1 - t0)


def trajectory(
    session: InteractionSession,
    target: str,
    params: ParameterSet,
    mode: str = "deterministic",
    seed: int | None = None,
    dependence: bool = True,
) -> EngagementTrace:
    """Integrate engagement for ``target`` until it first reaches zero.

    ``mode="sampled"`` draws each section's slope from its effective
    distribution using ``seed``; the default uses the distribution mean.
    With ``dependence=False`` co-present users are ignored (all behaviors
    treated as independent).
    """
    if mode not in ("deterministic", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sampled" and seed is None:
        raise ValueError("sampled mode requires a seed")
    sections = segment(session, target)
    rng = np.random.default_rng(seed) if mode == "sampled" else None

    slopes = []
    for sec in sections:
        eff = effective_slope(sec.target_behavior, sec.co_behaviors if dependence else (), params)
        a = eff.mean if rng is None else float(rng.normal(eff.mean, eff.std))
        slopes.append(SectionSlope(sec, eff, a))

    arrival = sections[0].start
    points = [(arrival, 1.0)]
    el, t = 1.0, 0.0
    hit = math.inf
    used = []
    for k, ss in enumerate(slopes):
        a = ss.applied
        d = ss.section.end - ss.section.start
        last = k == len(slopes) - 1
        used.append(ss)
        if a < 0.0:
            tc = t + el / -a
            if last or tc <= t + d:
                hit = tc
                break
        if t + d > params.t_max:
            break
        el = el + a * d
        t = t + d
        points.append((ss.section.end, el))

    if hit > params.t_max:
        # engagement still positive at the cap; close the trace there
        while len(points) > 1 and points[-1][0] - arrival > params.t_max:
            points.pop()
        t0, e0 = points[-1]
        a = used[-1].applied
        points.append((arrival + params.t_max, e0 + a * (arrival + params.t_max - t0)))
        return EngagementTrace(
            session.session_id, target, arrival, tuple(points), tuple(used), params.t_max, True
        )
    points.append((arrival + hit, 0.0))
    return EngagementTrace(session.session_id, target, arrival, tuple(points), tuple(used), hit, False)


def estimate_duration(
    session: InteractionSession, target: str, params: ParameterSet, dependence: bool = True
) -> float:
    return trajectory(session, target, params, dependence=dependence).estimated_duration


def write_trace(trace: EngagementTrace, path) -> None:
    """One CSV row per breakpoint, tagged with the section that starts (or
    for the final row, ends) there."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["time", "engagement", "section", "behavior", "slope_mean", "slope_variance", "applied_slope"]
        )
        n = len(trace.section_slopes)
        for i, (t, el) in enumerate(trace.breakpoints):
            ss = trace.section_slopes[min(i, n - 1)]
            w.writerow(
                [
                    repr(t),
                    repr(el),
                    ss.section.index,
                    ss.section.target_behavior.value,
                    repr(ss.effective.mean),
                    repr(ss.effective.variance),
                    repr(ss.applied),
                ]
            )


def read_trace(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("time", "engagement", "slope_mean", "slope_variance", "applied_slope"):
            r[k] = float(r[k])
        r["section"] = int(r["section"])
    return rows


class CompiledDataset:
    """Flat, array-backed view of a corpus for fast repeated evaluation.

    Segmentation is done once. Each section stores a count of how many times
    each behavior's distribution enters its effective-slope product, once
    with dependence coupling and once without.
    """

    def __init__(self, sessions: Sequence[InteractionSession]):
        keys, observed, offsets, durations, coupled, own = [], [], [0], [], [], []
        for s in sessions:
            check(s)
            for u in s.users:
                for sec in segment(s, u.user_id):
                    durations.append(sec.end - sec.start)
                    own.append(sec.target_behavior.index)
                    row = [0] * N_BEHAVIORS
                    row[sec.target_behavior.index] += 1
                    if sec.target_behavior.dependent:
                        for b in sec.co_behaviors:
                            row[b.index] += 1
                    coupled.append(row)
                offsets.append(len(durations))
                keys.append((s.session_id, u.user_id))
                observed.append(u.observed_duration)
        self.keys = keys
        self.observed = np.asarray(observed, dtype=np.float64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.durations = np.asarray(durations, dtype=np.float64)
        self.own = np.asarray(own, dtype=np.int64)
        self.coupled = np.asarray(coupled, dtype=np.float64).reshape(-1, N_BEHAVIORS)
        self._single = self.coupled.sum(axis=1) == 1
        self.n_sessions = len(sessions)

    @property
    def n_users(self) -> int:
        return len(self.keys)

    def slopes(self, means, variances, dependence: bool) -> np.ndarray:
        means = np.asarray(means, dtype=np.float64)
        own = means[self.own]
        if not dependence or self._single.all():
            return own
        variances = np.asarray(variances, dtype=np.float64)
        precision = self.coupled @ (1.0 / variances)
        weighted = self.coupled @ (means / variances)
        return np.where(self._single, own, weighted / precision)

    def estimate(self, means, variances, dependence: bool, t_max: float):
        """Estimated durations and capped flags for every user, in corpus order."""
        return kernels.crossing_times(
            self.offsets, self.durations, self.slopes(means, variances, dependence), t_max
        )

    def estimate_params(self, params: ParameterSet, dependence: bool):
        return self.estimate(params.means(), params.variances(), dependence, params.t_max)


__all__ = [
    "BEHAVIORS",
    "CompiledDataset",
    "EngagementTrace",
    "SectionSlope",
    "effective_slope",
    "estimate_duration",
    "gaussian_product",
    "read_trace",
    "trajectory",
    "write_trace",
]
