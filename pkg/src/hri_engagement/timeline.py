"""Annotated interaction sessions and their segmentation into sections.

A session is one group in front of the robot. Each user has a contiguous,
single-label sequence of behavior intervals running from arrival to
departure. A target user's timeline is cut wherever the target or any
co-present user changes behavior; inside a section every behavior involved
is constant.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .behaviors import BehaviorCategory, ParameterError

# Slack for comparing annotated times that went through arithmetic.
TIME_TOL = 1e-9


class SessionError(ValueError):
    """Raised for malformed session files or invalid sessions."""


class UnknownUserError(SessionError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else "unknown user"


@dataclass(frozen=True)
class BehaviorInterval:
    user_id: str
    behavior: BehaviorCategory
    start: float
    end: float

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    intervals: tuple[BehaviorInterval, ...]
    observed_duration: float

    @classmethod
    def from_intervals(cls, user_id: str, intervals: Iterable[tuple]) -> "UserRecord":
        """Build from ``(behavior, start, end)`` triples; duration is the span."""
        ivs = tuple(
            BehaviorInterval(
                user_id,
                b if isinstance(b, BehaviorCategory) else BehaviorCategory.from_name(b),
                float(s),
                float(e),
            )
            for b, s, e in intervals
        )
        duration = ivs[-1].end - ivs[0].start if ivs else 0.0
        return cls(user_id, ivs, duration)

    @property
    def arrival(self) -> float:
        return self.intervals[0].start

    @property
    def departure(self) -> float:
        return self.intervals[-1].end

    def behavior_at(self, t: float) -> BehaviorCategory:
        """Behavior active at ``t``; half-open intervals, last one closed."""
        for iv in self.intervals:
            if iv.start <= t < iv.end:
                return iv.behavior
        if self.intervals and t == self.intervals[-1].end:
            return self.intervals[-1].behavior
        raise SessionError(f"user {self.user_id} has no annotation at t={t}")


@dataclass(frozen=True)
class InteractionSession:
    session_id: str
    users: tuple[UserRecord, ...]

    def user(self, user_id: str) -> UserRecord:
        for u in self.users:
            if u.user_id == user_id:
                return u
        raise UnknownUserError(f"unknown user {user_id!r} in session {self.session_id!r}")

    @property
    def user_ids(self) -> list[str]:
        return [u.user_id for u in self.users]


@dataclass(frozen=True)
class Section:
    """One span of constant joint behavior. ``open_ended`` marks the final
    section, whose configuration is extrapolated past ``end``."""

    index: int
    start: float
    end: float
    target_behavior: BehaviorCategory
    co_behaviors: tuple[BehaviorCategory, ...]
    open_ended: bool = False

    @property
    def length(self) -> float:
        return self.end - self.start


def validate(session: InteractionSession) -> list[str]:
    """Return every invariant violation found; an empty list means valid."""
    problems = []
    if not session.users:
        problems.append(f"session {session.session_id}: no users")
    seen = set()
    for u in session.users:
        if u.user_id in seen:
            problems.append(f"duplicate user_id {u.user_id}")
        seen.add(u.user_id)
        if not u.intervals:
            problems.append(f"user {u.user_id}: no intervals")
            continue
        prev = None
        for iv in u.intervals:
            if not (math.isfinite(iv.start) and math.isfinite(iv.end)):
                problems.append(f"user {u.user_id}: non-finite time in interval {iv.start}-{iv.end}")
                continue
            if iv.start < 0:
                problems.append(f"user {u.user_id}: negative time at t={iv.start}")
            if not iv.start < iv.end:
                problems.append(f"user {u.user_id}: non-monotone interval at t={iv.start} (end {iv.end})")
            if iv.user_id != u.user_id:
                problems.append(f"user {u.user_id}: interval tagged with user {iv.user_id}")
            if prev is not None:
                if iv.start < prev.end:
                    problems.append(f"user {u.user_id}: overlap at t={iv.start}")
                elif iv.start > prev.end:
                    problems.append(f"user {u.user_id}: gap at t={prev.end}")
            prev = iv
        span = u.intervals[-1].end - u.intervals[0].start
        if not abs(u.observed_duration - span) <= TIME_TOL:
            problems.append(
                f"user {u.user_id}: observed_duration {u.observed_duration} != annotated span {span}"
            )
    return problems


def check(session: InteractionSession) -> InteractionSession:
    problems = validate(session)
    if problems:
        raise SessionError(f"invalid session {session.session_id}: " + "; ".join(problems))
    return session


def segment(session: InteractionSession, target: str) -> list[Section]:
    """Split the target user's annotated span at every joint behavior change.

    Co-users contribute only while their own annotation covers a section.
    The last section is flagged ``open_ended``.
    """
    check(session)
    me = session.user(target)
    lo, hi = me.arrival, me.departure
    cuts = {lo, hi}
    cuts.update(iv.end for iv in me.intervals)
    others = [u for u in session.users if u.user_id != target]
    for u in others:
        for iv in u.intervals:
            for t in (iv.start, iv.end):
                if lo < t < hi:
                    cuts.add(t)
    bounds = sorted(cuts)

    sections = []
    for j, (a, b) in enumerate(zip(bounds[:-1], bounds[1:]), start=1):
        mid = 0.5 * (a + b)
        co = tuple(
            u.behavior_at(mid) for u in others if u.arrival <= a and b <= u.departure
        )
        sections.append(Section(j, a, b, me.behavior_at(mid), co))
    last = sections[-1]
    sections[-1] = Section(last.index, last.start, last.end, last.target_behavior, last.co_behaviors, True)
    return sections


def occurrence_counts(sessions: Iterable[InteractionSession]) -> dict[BehaviorCategory, int]:
    """Number of annotated intervals per behavior across all users."""
    counts = {b: 0 for b in BehaviorCategory}
    for s in sessions:
        for u in s.users:
            for iv in u.intervals:
                counts[iv.behavior] += 1
    return counts


# -- file formats -----------------------------------------------------------

def session_to_dict(session: InteractionSession) -> dict:
    return {
        "session_id": session.session_id,
        "users": [
            {
                "user_id": u.user_id,
                "observed_duration": u.observed_duration,
                "intervals": [
                    {"behavior": iv.behavior.value, "start": iv.start, "end": iv.end}
                    for iv in u.intervals
                ],
            }
            for u in session.users
        ],
    }


def session_from_dict(data) -> InteractionSession:
    try:
        users = []
        for ud in data["users"]:
            uid = str(ud["user_id"])
            rec = UserRecord.from_intervals(
                uid, ((iv["behavior"], iv["start"], iv["end"]) for iv in ud["intervals"])
            )
            if "observed_duration" in ud:
                rec = UserRecord(uid, rec.intervals, float(ud["observed_duration"]))
            users.append(rec)
        return InteractionSession(str(data["session_id"]), tuple(users))
    except ParameterError as exc:
        raise SessionError(str(exc)) from None
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SessionError(f"malformed session document: {exc!r}") from None


def save_session(session: InteractionSession, path) -> None:
    Path(path).write_text(json.dumps(session_to_dict(session), indent=2) + "\n")


def load_session(path) -> InteractionSession:
    """Read a JSON session file, or a tab-separated interval export (``.tsv``)."""
    path = Path(path)
    if not path.exists():
        raise SessionError(f"session file not found: {path}")
    if path.suffix.lower() in (".tsv", ".txt"):
        return read_tsv(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SessionError(f"malformed session file {path}: {exc}") from None
    return session_from_dict(data)


def read_tsv(path, session_id: str | None = None) -> InteractionSession:
    """Convert tab-separated rows ``user_id, behavior, start, end``.

    Rows may arrive in any order (tier exports are grouped by tier, not by
    time). A header row whose third column is not numeric is skipped.
    """
    path = Path(path)
    rows: dict[str, list[tuple]] = {}
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
            if not row or all(not c.strip() for c in row) or row[0].startswith("#"):
                continue
            if len(row) < 4:
                raise SessionError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            uid, behavior, start, end = (c.strip() for c in row[:4])
            try:
                start_f, end_f = float(start), float(end)
            except ValueError:
                if lineno == 1:
                    continue
                raise SessionError(f"{path}:{lineno}: non-numeric time") from None
            try:
                b = BehaviorCategory.from_name(behavior)
            except ParameterError as exc:
                raise SessionError(f"{path}:{lineno}: {exc}") from None
            rows.setdefault(uid, []).append((b, start_f, end_f))
    users = tuple(
        UserRecord.from_intervals(uid, sorted(ivs, key=lambda r: r[1])) for uid, ivs in rows.items()
    )
    return InteractionSession(session_id or path.stem, users)


def write_tsv(session: InteractionSession, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["user_id", "behavior", "start", "end"])
        for u in session.users:
            for iv in u.intervals:
                w.writerow([u.user_id, iv.behavior.value, repr(iv.start), repr(iv.end)])


def load_corpus(directory) -> list[InteractionSession]:
    """Load every session file in ``directory`` (or its ``sessions/`` child), sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise SessionError(f"data directory not found: {directory}")
    if (directory / "sessions").is_dir():
        directory = directory / "sessions"
    files = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in (".json", ".tsv") and p.is_file()
    )
    return [load_session(p) for p in files]


def save_corpus(sessions: Sequence[InteractionSession], directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in sessions:
        p = directory / f"{s.session_id}.json"
        save_session(s, p)
        paths.append(p)
    return paths
