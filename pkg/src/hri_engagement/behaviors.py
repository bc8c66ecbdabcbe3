"""Behavior taxonomy and the trainable slope parameters.

Every observable behavior category carries a Gaussian over the engagement
slope (engagement units per second). Three categories are *dependent*: their
slope is coupled to what co-present users are doing at the same time.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping


class ParameterError(ValueError):
    """Raised when a parameter set or parameter file is invalid."""


class BehaviorCategory(enum.Enum):
    """The eight annotated behavior labels, in canonical table order."""

    PROWL = "Prowl"
    GAZE = "Gaze"
    LOOK_AROUND = "LookAround"
    DOING_OTHERS = "DoingOthers"
    POINTING = "Pointing"
    TALK_TO_ROBOT = "TalkToRobot"
    TOUCH = "Touch"
    WAVE_HANDS = "WaveHands"

    @property
    def dependent(self) -> bool:
        return self in _DEPENDENT

    @property
    def index(self) -> int:
        return _INDEX[self]

    @classmethod
    def from_name(cls, name: str) -> "BehaviorCategory":
        try:
            return cls(name)
        except ValueError:
            raise ParameterError(f"unknown behavior category {name!r}") from None

    def __str__(self) -> str:
        return self.value


BEHAVIORS: tuple[BehaviorCategory, ...] = tuple(BehaviorCategory)
N_BEHAVIORS = len(BEHAVIORS)
_INDEX = {b: i for i, b in enumerate(BEHAVIORS)}
_DEPENDENT = frozenset(
    {BehaviorCategory.PROWL, BehaviorCategory.LOOK_AROUND, BehaviorCategory.DOING_OTHERS}
)


@dataclass(frozen=True)
class GaussianParams:
    """Normal distribution over a slope; ``variance`` is sigma squared."""

    mean: float
    variance: float

    def __post_init__(self):
        if not math.isfinite(self.mean):
            raise ParameterError("mean must be finite")
        if not (self.variance > 0) or not math.isfinite(self.variance):
            raise ParameterError("variance must be positive")

    @property
    def precision(self) -> float:
        return 1.0 / self.variance

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class ParameterSet:
    """Slope distributions for all eight behaviors plus likelihood settings.

    ``alpha`` scales the duration-residual standard deviation
    (``sigma_t = alpha * observed``); ``t_max`` caps estimated durations when
    engagement never reaches zero.
    """

    per_behavior: Mapping[BehaviorCategory, GaussianParams]
    alpha: float = 0.1
    t_max: float = 1800.0

    def __post_init__(self):
        for b in BEHAVIORS:
            if b not in self.per_behavior:
                raise ParameterError(f"missing category {b.value}")
        extra = set(self.per_behavior) - set(BEHAVIORS)
        if extra:
            raise ParameterError(f"unknown categories {sorted(map(str, extra))}")
        if not (self.alpha > 0) or not math.isfinite(self.alpha):
            raise ParameterError("alpha must be positive")
        if not (self.t_max > 0) or not math.isfinite(self.t_max):
            raise ParameterError("t_max must be positive")
        ordered = {b: self.per_behavior[b] for b in BEHAVIORS}
        object.__setattr__(self, "per_behavior", MappingProxyType(ordered))

    def __getitem__(self, behavior: BehaviorCategory) -> GaussianParams:
        return self.per_behavior[behavior]

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return (
            dict(self.per_behavior) == dict(other.per_behavior)
            and self.alpha == other.alpha
            and self.t_max == other.t_max
        )

    def __hash__(self):
        return hash((tuple(self.per_behavior.values()), self.alpha, self.t_max))

    def replace(self, **changes) -> "ParameterSet":
        kwargs = {"per_behavior": dict(self.per_behavior), "alpha": self.alpha, "t_max": self.t_max}
        kwargs.update(changes)
        return ParameterSet(**kwargs)

    def means(self) -> list[float]:
        return [self.per_behavior[b].mean for b in BEHAVIORS]

    def variances(self) -> list[float]:
        return [self.per_behavior[b].variance for b in BEHAVIORS]

    @classmethod
    def from_arrays(cls, means, variances, alpha: float = 0.1, t_max: float = 1800.0) -> "ParameterSet":
        return cls(
            {b: GaussianParams(float(m), float(v)) for b, m, v in zip(BEHAVIORS, means, variances)},
            alpha=alpha,
            t_max=t_max,
        )

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "t_max": self.t_max,
            "behaviors": {
                b.value: {"mean": g.mean, "variance": g.variance} for b, g in self.per_behavior.items()
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ParameterSet":
        if not isinstance(data, Mapping):
            raise ParameterError("parameter document must be a mapping")
        for key in ("alpha", "t_max", "behaviors"):
            if key not in data:
                raise ParameterError(f"missing field {key}")
        behaviors = data["behaviors"]
        if not isinstance(behaviors, Mapping):
            raise ParameterError("field behaviors must be a mapping")
        unknown = [name for name in behaviors if name not in {b.value for b in BEHAVIORS}]
        if unknown:
            raise ParameterError(f"unknown category {unknown[0]}")
        per_behavior = {}
        for b in BEHAVIORS:
            if b.value not in behaviors:
                raise ParameterError(f"missing category {b.value}")
            entry = behaviors[b.value]
            try:
                mean = float(entry["mean"])
                variance = float(entry["variance"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParameterError(f"malformed entry for {b.value}: {exc}") from None
            try:
                per_behavior[b] = GaussianParams(mean, variance)
            except ParameterError as exc:
                raise ParameterError(f"{b.value}: {exc}") from None
        try:
            alpha, t_max = float(data["alpha"]), float(data["t_max"])
        except (TypeError, ValueError):
            raise ParameterError("alpha and t_max must be numbers") from None
        return cls(per_behavior, alpha=alpha, t_max=t_max)


def default_parameter_set(alpha: float = 0.1, t_max: float = 1800.0) -> ParameterSet:
    """Uniform starting point for training: mean -0.15, variance 0.1."""
    return ParameterSet({b: GaussianParams(-0.15, 0.1) for b in BEHAVIORS}, alpha=alpha, t_max=t_max)


# Trained values reported for the coupled model, stored as (mean, variance).
_REFERENCE = {
    BehaviorCategory.PROWL: (-0.012, 0.279e-6),
    BehaviorCategory.GAZE: (-0.800e-2, 0.180e-2),
    BehaviorCategory.LOOK_AROUND: (-0.011, 1.000e-6),
    BehaviorCategory.DOING_OTHERS: (-0.010, 0.347e-3),
    BehaviorCategory.POINTING: (-0.130, 0.095),
    BehaviorCategory.TALK_TO_ROBOT: (-0.128, 0.095),
    BehaviorCategory.TOUCH: (-0.118, 0.115),
    BehaviorCategory.WAVE_HANDS: (-0.157, 0.093),
}

# Interval counts that accompanied the reference values.
REFERENCE_FREQUENCIES = {
    BehaviorCategory.PROWL: 290,
    BehaviorCategory.GAZE: 271,
    BehaviorCategory.LOOK_AROUND: 161,
    BehaviorCategory.DOING_OTHERS: 53,
    BehaviorCategory.POINTING: 27,
    BehaviorCategory.TALK_TO_ROBOT: 18,
    BehaviorCategory.TOUCH: 9,
    BehaviorCategory.WAVE_HANDS: 7,
}


def reference_parameter_set(alpha: float = 0.1, t_max: float = 1800.0) -> ParameterSet:
    return ParameterSet(
        {b: GaussianParams(m, v) for b, (m, v) in _REFERENCE.items()}, alpha=alpha, t_max=t_max
    )


def save_parameters(params: ParameterSet, path, extra: Mapping | None = None) -> None:
    """Write ``params`` as indented JSON. Floats are written with ``repr`` precision."""
    doc = params.to_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_parameters(path) -> ParameterSet:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ParameterError(f"parameter file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParameterError(f"malformed parameter file {path}: {exc}") from None
    return ParameterSet.from_dict(data)


__all__ = [
    "BEHAVIORS",
    "N_BEHAVIORS",
    "REFERENCE_FREQUENCIES",
    "BehaviorCategory",
    "GaussianParams",
    "ParameterError",
    "ParameterSet",
    "default_parameter_set",
    "load_parameters",
    "reference_parameter_set",
    "save_parameters",
]
