"""Seeded synthetic corpora with known ground-truth slope parameters.

Behavior sequences come from a dwell-time / transition model. Each user's
departure is set so that the observed duration equals the model's own
estimate under the ground truth (dependence enabled), times a jitter factor.
Because a user's estimate depends on when co-users leave, departures are
solved by fixed-point iteration over the whole group.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .behaviors import BEHAVIORS, BehaviorCategory, GaussianParams, ParameterSet, save_parameters
from .engine import trajectory
from .timeline import BehaviorInterval, InteractionSession, UserRecord, occurrence_counts, save_corpus

GROUP_SIZES = (1, 2, 3, 4)


class SynthesisError(ValueError):
    pass


def synthetic_ground_truth(alpha: float = 0.1, t_max: float = 1800.0) -> ParameterSet:
    """Default ground truth: dependent behaviors drain engagement fast and
    carry wide slope distributions, so co-users pull them strongly."""
    values = {
        BehaviorCategory.PROWL: (-0.020, 1e-4),
        BehaviorCategory.GAZE: (-0.006, 2e-5),
        BehaviorCategory.LOOK_AROUND: (-0.025, 1e-4),
        BehaviorCategory.DOING_OTHERS: (-0.030, 1e-4),
        BehaviorCategory.POINTING: (-0.008, 2e-5),
        BehaviorCategory.TALK_TO_ROBOT: (-0.006, 2e-5),
        BehaviorCategory.TOUCH: (-0.008, 2e-5),
        BehaviorCategory.WAVE_HANDS: (-0.010, 2e-5),
    }
    return ParameterSet({b: GaussianParams(m, v) for b, (m, v) in values.items()}, alpha=alpha, t_max=t_max)


def _uniform_weights(exclude: BehaviorCategory | None = None) -> dict[BehaviorCategory, float]:
    return {b: (0.0 if b is exclude else 1.0) for b in BEHAVIORS}


@dataclass(frozen=True)
class ScenarioConfig:
    n_sessions: int = 200
    group_size_weights: tuple[float, float, float, float] = (0.25, 0.35, 0.30, 0.10)
    dwell: Mapping[BehaviorCategory, tuple[float, float]] = field(
        default_factory=lambda: {b: (5.0, 40.0) for b in BEHAVIORS}
    )
    transitions: Mapping[BehaviorCategory, Mapping[BehaviorCategory, float]] = field(
        default_factory=lambda: {b: _uniform_weights(exclude=b) for b in BEHAVIORS}
    )
    initial_weights: Mapping[BehaviorCategory, float] = field(default_factory=_uniform_weights)
    ground_truth: ParameterSet = field(default_factory=synthetic_ground_truth)
    jitter: tuple[float, float] = (0.9, 1.1)
    arrival_spread: float = 20.0
    seed: int = 0
    max_fixed_point_iterations: int = 200

    def __post_init__(self):
        if self.n_sessions < 1:
            raise SynthesisError("n_sessions must be >= 1")
        _check_weights("group_size_weights", self.group_size_weights, 4)
        _check_weights("initial_weights", [self.initial_weights.get(b, 0.0) for b in BEHAVIORS], 8)
        for b in BEHAVIORS:
            lo, hi = self.dwell[b]
            if not 0 < lo < hi:
                raise SynthesisError(f"dwell for {b.value} must satisfy 0 < min < max")
            _check_weights(f"transitions[{b.value}]", [self.transitions[b].get(c, 0.0) for c in BEHAVIORS], 8)
        lo, hi = self.jitter
        if not 0 < lo <= hi:
            raise SynthesisError("jitter must satisfy 0 < low <= high")
        if self.arrival_spread < 0:
            raise SynthesisError("arrival_spread must be >= 0")

    @property
    def mean_group_size(self) -> float:
        w = np.asarray(self.group_size_weights, dtype=float)
        return float(np.dot(w / w.sum(), GROUP_SIZES))

    def replace(self, **changes) -> "ScenarioConfig":
        kwargs = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kwargs.update(changes)
        return ScenarioConfig(**kwargs)

    def to_dict(self) -> dict:
        return {
            "n_sessions": self.n_sessions,
            "group_size_weights": list(self.group_size_weights),
            "dwell": {b.value: list(self.dwell[b]) for b in BEHAVIORS},
            "transitions": {
                b.value: {c.value: self.transitions[b].get(c, 0.0) for c in BEHAVIORS} for b in BEHAVIORS
            },
            "initial_weights": {b.value: self.initial_weights.get(b, 0.0) for b in BEHAVIORS},
            "ground_truth": self.ground_truth.to_dict(),
            "jitter": list(self.jitter),
            "arrival_spread": self.arrival_spread,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScenarioConfig":
        """Missing keys fall back to defaults."""
        kwargs = {}
        try:
            if "n_sessions" in data:
                kwargs["n_sessions"] = int(data["n_sessions"])
            if "group_size_weights" in data:
                kwargs["group_size_weights"] = tuple(float(w) for w in data["group_size_weights"])
            if "dwell" in data:
                dwell = {b: (5.0, 40.0) for b in BEHAVIORS}
                for name, (lo, hi) in data["dwell"].items():
                    dwell[BehaviorCategory.from_name(name)] = (float(lo), float(hi))
                kwargs["dwell"] = dwell
            if "transitions" in data:
                trans = {b: _uniform_weights(exclude=b) for b in BEHAVIORS}
                for name, row in data["transitions"].items():
                    trans[BehaviorCategory.from_name(name)] = {
                        BehaviorCategory.from_name(k): float(v) for k, v in row.items()
                    }
                kwargs["transitions"] = trans
            if "initial_weights" in data:
                kwargs["initial_weights"] = {
                    BehaviorCategory.from_name(k): float(v) for k, v in data["initial_weights"].items()
                }
            if "ground_truth" in data:
                kwargs["ground_truth"] = ParameterSet.from_dict(data["ground_truth"])
            if "jitter" in data:
                lo, hi = data["jitter"]
                kwargs["jitter"] = (float(lo), float(hi))
            for key in ("arrival_spread",):
                if key in data:
                    kwargs[key] = float(data[key])
            if "seed" in data:
                kwargs["seed"] = int(data["seed"])
        except (TypeError, ValueError, KeyError) as exc:
            raise SynthesisError(f"malformed scenario: {exc}") from None
        return cls(**kwargs)


def _check_weights(name, weights, n):
    w = list(weights)
    if len(w) != n:
        raise SynthesisError(f"{name} needs {n} weights")
    if any(x < 0 for x in w) or not any(x > 0 for x in w):
        raise SynthesisError(f"{name} must be non-negative with at least one positive weight")


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SynthesisError(f"malformed scenario {path}: {exc}") from None
    return ScenarioConfig.from_dict(data)


def save_scenario(config: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")


class _BehaviorStream:
    """Lazily extended behavior sequence for one user.

    Draws come from a private generator, so the realized prefix does not
    depend on how far the sequence is extended.
    """

    def __init__(self, config: ScenarioConfig, rng: np.random.Generator, arrival: float):
        self.config = config
        self.rng = rng
        self.intervals: list[tuple[BehaviorCategory, float, float]] = []
        self.arrival = arrival
        self._next = self._pick(config.initial_weights)

    def _pick(self, weights) -> BehaviorCategory:
        w = np.array([weights.get(b, 0.0) for b in BEHAVIORS], dtype=float)
        return BEHAVIORS[int(self.rng.choice(len(BEHAVIORS), p=w / w.sum()))]

    def extend_to(self, t_end: float) -> None:
        t = self.intervals[-1][2] if self.intervals else self.arrival
        while t < t_end:
            b = self._next
            lo, hi = self.config.dwell[b]
            d = float(self.rng.uniform(lo, hi))
            self.intervals.append((b, t, t + d))
            t += d
            self._next = self._pick(self.config.transitions[b])

    def truncated(self, user_id: str, departure: float) -> UserRecord:
        ivs = []
        for b, s, e in self.intervals:
            if s >= departure:
                break
            ivs.append(BehaviorInterval(user_id, b, s, min(e, departure)))
        return UserRecord(user_id, tuple(ivs), departure - self.arrival)


def _draw_session(config: ScenarioConfig, index: int, attempt: int) -> InteractionSession | None:
    """One draw of session ``index``; ``None`` if departures never settle."""
    tag = [] if attempt == 0 else [attempt]
    rng = np.random.default_rng([config.seed, index, *tag])
    w = np.asarray(config.group_size_weights, dtype=float)
    size = int(GROUP_SIZES[rng.choice(4, p=w / w.sum())])
    arrivals = [0.0] + [float(rng.uniform(0.0, config.arrival_spread)) for _ in range(size - 1)]
    lo, hi = config.jitter
    jitters = [lo if lo == hi else float(rng.uniform(lo, hi)) for _ in range(size)]
    user_ids = [f"u{k + 1}" for k in range(size)]
    streams = [
        _BehaviorStream(config, np.random.default_rng([config.seed, index, k + 1, *tag]), arrivals[k])
        for k in range(size)
    ]
    session_id = f"s{index:05d}"
    gt = config.ground_truth

    horizon = 300.0
    limit = gt.t_max * hi + config.arrival_spread
    while True:
        for st in streams:
            st.extend_to(st.arrival + horizon)
        ends = [st.intervals[-1][2] for st in streams]
        departures = list(ends)
        settled = overflow = False
        for _ in range(config.max_fixed_point_iterations):
            truncated = [st.truncated(uid, d) for st, uid, d in zip(streams, user_ids, departures)]
            new = []
            overflow = False
            for k, (st, uid, j, end) in enumerate(zip(streams, user_ids, jitters, ends)):
                # a user's own estimate runs on their full stream, so their
                # departure cannot feed back into it; co-users are truncated
                users = list(truncated)
                users[k] = st.truncated(uid, end)
                tr = trajectory(InteractionSession(session_id, tuple(users)), uid, gt, dependence=True)
                if tr.capped:
                    raise SynthesisError(
                        f"session {session_id} user {uid}: ground truth never reaches zero engagement "
                        f"before t_max={gt.t_max}"
                    )
                d = st.arrival + j * tr.estimated_duration
                overflow |= d > end
                new.append(min(d, end))
            if new == departures:
                settled = True
                break
            departures = new
        if not settled:
            return None
        if not overflow:
            break
        if horizon >= limit:
            raise SynthesisError(f"session {session_id}: departures exceed the generation horizon")
        horizon = min(2.0 * horizon, limit)

    return InteractionSession(
        session_id, tuple(st.truncated(uid, d) for st, uid, d in zip(streams, user_ids, departures))
    )


MAX_REDRAWS = 100


def _generate_session(config: ScenarioConfig, index: int) -> InteractionSession:
    """Departures are a fixed point: each user's ground-truth duration depends
    on when co-users leave. Draws whose departures cycle are redrawn from a
    derived seed."""
    for attempt in range(MAX_REDRAWS):
        session = _draw_session(config, index, attempt)
        if session is not None:
            return session
    raise SynthesisError(f"session s{index:05d}: departures did not settle after {MAX_REDRAWS} draws")


def generate(config: ScenarioConfig) -> list[InteractionSession]:
    """Generate ``config.n_sessions`` sessions; session ``i`` depends only on
    ``(config.seed, i)``."""
    if all(g.mean >= 0 for g in config.ground_truth.per_behavior.values()):
        raise SynthesisError("ground truth has no negative slope; no behavior mix can end an interaction")
    return [_generate_session(config, i) for i in range(config.n_sessions)]


@dataclass(frozen=True)
class CorpusStats:
    n_users: int
    n_groups: int
    mean_group_size: float
    frequencies: dict[BehaviorCategory, int]
    duration_quartiles: tuple[float, float, float, float, float]

    def to_dict(self) -> dict:
        return {
            "users": self.n_users,
            "groups": self.n_groups,
            "mean_group_size": self.mean_group_size,
            "frequencies": {b.value: self.frequencies[b] for b in BEHAVIORS},
            "duration_quartiles": list(self.duration_quartiles),
        }

    def format(self) -> str:
        lines = [
            f"users {self.n_users}  groups {self.n_groups}  mean group size {self.mean_group_size:.2f}",
            "duration min/q1/median/q3/max: " + " / ".join(f"{q:.1f}" for q in self.duration_quartiles),
            "behavior frequencies:",
        ]
        lines += [f"  {b.value:<12} {self.frequencies[b]}" for b in BEHAVIORS]
        return "\n".join(lines)


def corpus_stats(sessions: Sequence[InteractionSession]) -> CorpusStats:
    if not sessions:
        raise ValueError("empty corpus")
    durations = np.array([u.observed_duration for s in sessions for u in s.users], dtype=float)
    n_users = int(durations.size)
    q = np.percentile(durations, [0, 25, 50, 75, 100])
    return CorpusStats(
        n_users,
        len(sessions),
        n_users / len(sessions),
        occurrence_counts(sessions),
        tuple(float(v) for v in q),
    )


def write_corpus(sessions: Sequence[InteractionSession], out_dir, config: ScenarioConfig) -> list[Path]:
    """Session files under ``sessions/`` plus ground-truth and scenario sidecars."""
    out_dir = Path(out_dir)
    paths = save_corpus(sessions, out_dir / "sessions")
    save_parameters(config.ground_truth, out_dir / "ground_truth.json")
    save_scenario(config, out_dir / "scenario.json")
    return paths
