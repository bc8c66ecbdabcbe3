"""Duration-prediction error metrics and the method comparison harness.

Errors are signed, estimated minus observed, so a negative median means the
model ends interactions too early.
"""
from __future__ import annotations

import csv
import json
import math
from fractions import Fraction
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .behaviors import ParameterSet
from .engine import CompiledDataset
from .timeline import InteractionSession

BIN_WIDTH = 5.0
MIN_OBSERVED_DURATION = 30.0


class EvaluationError(ValueError):
    pass


def mae(errors) -> float:
    """Mean absolute error, correctly rounded (exact rational sum)."""
    errors = [abs(float(e)) for e in errors]
    if not errors:
        raise EvaluationError("mae of an empty error list")
    return float(sum(map(Fraction, errors)) / len(errors))


def median(errors) -> float:
    s = sorted(float(e) for e in errors)
    if not s:
        raise EvaluationError("median of an empty error list")
    k = len(s) // 2
    return s[k] if len(s) % 2 else (s[k - 1] + s[k]) / 2


def bin_center(value: float, width: float = BIN_WIDTH) -> float:
    """Nearest multiple of ``width``; bins are ``[c - w/2, c + w/2)``."""
    k = math.floor(value / width + 0.5)
    # the division can round across a bin edge; settle it with exact comparisons
    if value >= k * width + width / 2:
        k += 1
    elif value < k * width - width / 2:
        k -= 1
    return k * width


def histogram(errors, width: float = BIN_WIDTH) -> list[tuple[float, int]]:
    """Occupied bins as ``(center, count)``, sorted by center."""
    counts: dict[float, int] = {}
    for e in errors:
        c = bin_center(float(e), width)
        counts[c] = counts.get(c, 0) + 1
    return sorted(counts.items())


def mode(errors, width: float = BIN_WIDTH) -> float:
    """Center of the fullest bin; ties go to the center nearest zero, then
    to the negative side."""
    hist = histogram(errors, width)
    if not hist:
        raise EvaluationError("mode of an empty error list")
    top = max(n for _, n in hist)
    return min((c for c, n in hist if n == top), key=lambda c: (abs(c), c))


def five_number_summary(values) -> tuple[float, float, float, float, float]:
    q = np.percentile(np.asarray(values, dtype=float), [0, 25, 50, 75, 100])
    return tuple(float(v) for v in q)


@dataclass(frozen=True)
class EvalMetrics:
    label: str
    dependence_enabled: bool
    per_user_errors: tuple[tuple[str, str, float], ...]  # (session_id, user_id, error)
    observed: tuple[float, ...]
    estimated: tuple[float, ...]
    mae: float
    median: float
    mode: float
    histogram: tuple[tuple[float, int], ...]
    observed_summary: tuple[float, float, float, float, float]
    estimated_summary: tuple[float, float, float, float, float]
    n_excluded: int = 0

    @property
    def errors(self) -> list[float]:
        return [e for _, _, e in self.per_user_errors]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "dependence": self.dependence_enabled,
            "users": len(self.per_user_errors),
            "excluded_short_users": self.n_excluded,
            "mae": self.mae,
            "median": self.median,
            "mode": self.mode,
            "histogram": [[c, n] for c, n in self.histogram],
            "observed_summary": list(self.observed_summary),
            "estimated_summary": list(self.estimated_summary),
            "per_user_errors": [
                {"session_id": s, "user_id": u, "error": e} for s, u, e in self.per_user_errors
            ],
        }


def evaluate(
    dataset: Sequence[InteractionSession],
    params: ParameterSet,
    dependence_enabled: bool = True,
    label: str | None = None,
    min_duration: float = MIN_OBSERVED_DURATION,
) -> EvalMetrics:
    """Score deterministic duration estimates for every user who stayed at
    least ``min_duration`` seconds. Users are ordered by (session, user) id,
    so the result does not depend on session order."""
    ordered = sorted(dataset, key=lambda s: s.session_id)
    data = CompiledDataset(ordered)
    keep = data.observed >= min_duration
    if not keep.any():
        raise EvaluationError(f"no users ≥ {min_duration:g} s")
    t_hat, _ = data.estimate_params(params, dependence_enabled)
    rows = sorted(
        (data.keys[i][0], data.keys[i][1], float(t_hat[i]), float(data.observed[i]))
        for i in np.flatnonzero(keep)
    )
    errors = [est - obs for _, _, est, obs in rows]
    observed = [obs for *_, obs in rows]
    estimated = [est for _, _, est, _ in rows]
    return EvalMetrics(
        label=label or ("method 2" if dependence_enabled else "method 1"),
        dependence_enabled=dependence_enabled,
        per_user_errors=tuple((s, u, e) for (s, u, _, _), e in zip(rows, errors)),
        observed=tuple(observed),
        estimated=tuple(estimated),
        mae=mae(errors),
        median=median(errors),
        mode=mode(errors),
        histogram=tuple(histogram(errors)),
        observed_summary=five_number_summary(observed),
        estimated_summary=five_number_summary(estimated),
        n_excluded=int((~keep).sum()),
    )


@dataclass(frozen=True)
class MethodComparison:
    method1: EvalMetrics
    method2: EvalMetrics

    @property
    def mae_difference(self) -> float:
        """Method 2 MAE minus method 1 MAE; negative favors method 2."""
        return self.method2.mae - self.method1.mae

    def table(self) -> str:
        return format_table([self.method1, self.method2]) + f"\nMAE difference (2 - 1): {self.mae_difference:.2f} s"

    def to_dict(self) -> dict:
        return {
            "methods": [self.method1.to_dict(), self.method2.to_dict()],
            "mae_difference": self.mae_difference,
        }


def compare_methods(
    dataset: Sequence[InteractionSession], params1: ParameterSet, params2: ParameterSet
) -> MethodComparison:
    """Method 1 ignores co-present users; method 2 couples dependent behaviors."""
    return MethodComparison(
        evaluate(dataset, params1, dependence_enabled=False, label="method 1"),
        evaluate(dataset, params2, dependence_enabled=True, label="method 2"),
    )


def format_table(metrics: Sequence[EvalMetrics]) -> str:
    lines = [f"{'method':<12}{'MAE s':>10}{'median s':>12}{'mode s':>10}{'users':>8}"]
    for m in metrics:
        lines.append(f"{m.label:<12}{m.mae:>10.1f}{m.median:>12.2f}{m.mode:>10.1f}{len(m.errors):>8d}")
    return "\n".join(lines)


def write_report(metrics: Sequence[EvalMetrics] | MethodComparison, path) -> None:
    if isinstance(metrics, MethodComparison):
        doc = metrics.to_dict()
    else:
        doc = {"methods": [m.to_dict() for m in metrics]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _require(metrics: EvalMetrics) -> None:
    if not metrics.per_user_errors:
        raise EvaluationError("metrics contain no users")


def export_histogram(metrics: EvalMetrics, path) -> None:
    _require(metrics)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_center", "count"])
        for c, n in metrics.histogram:
            w.writerow([repr(c), n])


def read_histogram(path) -> list[tuple[float, int]]:
    with Path(path).open(newline="") as fh:
        return [(float(r["bin_center"]), int(r["count"])) for r in csv.DictReader(fh)]


def export_violin_data(metrics: EvalMetrics, path) -> None:
    """Raw observed and estimated durations, one labeled row per sample."""
    _require(metrics)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "duration"])
        for v in metrics.observed:
            w.writerow(["observed", repr(v)])
        for v in metrics.estimated:
            w.writerow(["estimated", repr(v)])


def read_violin_data(path) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    with Path(path).open(newline="") as fh:
        for r in csv.DictReader(fh):
            out.setdefault(r["series"], []).append(float(r["duration"]))
    return out
