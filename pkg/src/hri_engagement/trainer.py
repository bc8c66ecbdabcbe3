"""Maximum-likelihood fitting of the per-behavior slope distributions.

Each user's observed duration is treated as Gaussian around the model's
estimated duration with standard deviation ``alpha * observed``. The negative
log-likelihood is minimized over 8 means and 8 log-variances with a BFGS
iteration, finite-difference gradients and a backtracking line search.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .behaviors import BEHAVIORS, N_BEHAVIORS, BehaviorCategory, ParameterSet
from .engine import CompiledDataset
from .timeline import InteractionSession, occurrence_counts

log = logging.getLogger(__name__)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class TrainingError(RuntimeError):
    """Numerical failure during training (non-finite objective, bad data)."""


@dataclass(frozen=True)
class TrainConfig:
    max_iterations: int = 200
    gradient_step: float = 1e-4
    convergence_tolerance: float = 1e-9
    mean_bounds: tuple[float, float] = (-1.0, 1.0)
    log_variance_bounds: tuple[float, float] = (math.log(1e-8), math.log(10.0))
    dependence_enabled: bool = True
    max_backtracks: int = 60
    max_mean_change: float = 0.5
    min_mean_change: float = 1e-6
    max_log_variance_change: float = 2.0
    damping: float = 1e-3
    means_first: bool = True
    restarts: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.gradient_step > 0 or not self.convergence_tolerance > 0:
            raise ValueError("gradient_step and convergence_tolerance must be positive")
        for lo, hi in (self.mean_bounds, self.log_variance_bounds):
            if not lo < hi:
                raise ValueError(f"bounds not well-ordered: ({lo}, {hi})")

    def lower(self) -> np.ndarray:
        return np.r_[np.full(N_BEHAVIORS, self.mean_bounds[0]), np.full(N_BEHAVIORS, self.log_variance_bounds[0])]

    def upper(self) -> np.ndarray:
        return np.r_[np.full(N_BEHAVIORS, self.mean_bounds[1]), np.full(N_BEHAVIORS, self.log_variance_bounds[1])]


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    gradient_norm: float
    step_size: float
    restart: int = 0


@dataclass
class TrainReport:
    params: ParameterSet
    objective_trajectory: list[float]
    occurrences: dict[BehaviorCategory, int]
    converged: bool
    iterations: list[IterationRecord] = field(default_factory=list)
    message: str = ""
    restart_objectives: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        doc = self.params.to_dict()
        doc["training"] = {
            "converged": self.converged,
            "message": self.message,
            "restart_objectives": self.restart_objectives,
            "final_objective": self.objective_trajectory[-1],
            "objective_trajectory": self.objective_trajectory,
            "occurrences": {b.value: self.occurrences[b] for b in BEHAVIORS},
            "iterations": [
                {
                    "iteration": r.iteration,
                    "objective": r.objective,
                    "gradient_norm": r.gradient_norm,
                    "step_size": r.step_size,
                    "restart": r.restart,
                }
                for r in self.iterations
            ],
        }
        return doc


def _as_compiled(dataset) -> CompiledDataset:
    return dataset if isinstance(dataset, CompiledDataset) else CompiledDataset(dataset)


def _user_terms(data: CompiledDataset, t_hat: np.ndarray, alpha: float) -> np.ndarray:
    sigma = alpha * data.observed
    resid = t_hat - data.observed
    # non-finite terms are reported by the caller
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return resid * resid / (2.0 * sigma * sigma) + np.log(sigma) + _HALF_LOG_2PI


def _check_observed(data: CompiledDataset) -> None:
    bad = np.flatnonzero(~(data.observed > 0))
    if bad.size:
        sid, uid = data.keys[bad[0]]
        raise TrainingError(f"user {uid} in session {sid} has non-positive observed duration")


def negative_log_likelihood(
    dataset: Sequence[InteractionSession] | CompiledDataset,
    params: ParameterSet,
    dependence_enabled: bool = True,
) -> float:
    """Sum over users of the Gaussian duration-residual negative log density.

    Users are reduced in corpus order (session order, then user order).
    """
    data = _as_compiled(dataset)
    if data.n_users == 0:
        return 0.0
    _check_observed(data)
    t_hat, _ = data.estimate_params(params, dependence_enabled)
    return float(math.fsum(_user_terms(data, t_hat, params.alpha)))


def pack(params: ParameterSet) -> np.ndarray:
    return np.r_[params.means(), np.log(params.variances())]


def unpack(x: np.ndarray, template: ParameterSet) -> ParameterSet:
    return ParameterSet.from_arrays(
        x[:N_BEHAVIORS], np.exp(x[N_BEHAVIORS:]), alpha=template.alpha, t_max=template.t_max
    )


class Objective:
    """NLL as a function of the packed vector ``[means, log-variances]``."""

    def __init__(self, data: CompiledDataset, alpha: float, t_max: float, dependence: bool):
        _check_observed(data)
        self.data = data
        self.alpha = alpha
        self.t_max = t_max
        self.dependence = dependence
        self.evaluations = 0

    def estimates(self, x: np.ndarray) -> np.ndarray:
        self.evaluations += 1
        t_hat, _ = self.data.estimate(x[:N_BEHAVIORS], np.exp(x[N_BEHAVIORS:]), self.dependence, self.t_max)
        return t_hat

    def terms(self, x: np.ndarray) -> np.ndarray:
        return _user_terms(self.data, self.estimates(x), self.alpha)

    def __call__(self, x: np.ndarray) -> float:
        return float(math.fsum(self.terms(x)))

    @staticmethod
    def steps(x: np.ndarray, rel_step: float) -> np.ndarray:
        # relative step with a floor so coordinates near zero still move
        return rel_step * np.maximum(np.abs(x), 1e-2)

    def gradient(self, x: np.ndarray, rel_step: float) -> tuple[np.ndarray, np.ndarray]:
        """NLL gradient and the central-difference Jacobian of the estimated
        durations (users x 16).

        The durations are differenced, not the NLL: the chain rule through
        the quadratic residual then gives a gradient that is exactly zero
        wherever every residual is zero, free of the O(h^2) curvature bias
        that differencing the squared residual would add.
        """
        h = self.steps(x, rel_step)
        jac = np.empty((self.data.n_users, x.size))
        for i in range(x.size):
            xp = x.copy()
            xm = x.copy()
            xp[i] += h[i]
            xm[i] -= h[i]
            jac[:, i] = (self.estimates(xp) - self.estimates(xm)) / (xp[i] - xm[i])
        sigma = self.alpha * self.data.observed
        resid = self.estimates(x) - self.data.observed
        return jac.T @ (resid / (sigma * sigma)), jac

    def gauss_newton_inverse(self, jac: np.ndarray, damping: float) -> np.ndarray:
        """Inverse of the damped Gauss-Newton matrix; coordinates the data
        never touches get an identity block."""
        w = 1.0 / (self.alpha * self.data.observed) ** 2
        a = jac.T @ (w[:, None] * jac)
        d = np.diag(a).copy()
        idle = d == 0
        # relative damping plus a floor tied to the stiffest direction, so
        # noise-level columns cannot produce huge steps
        a[np.diag_indices_from(a)] += damping * d + 1e-6 * d.max()
        a[idle, idle] = 1.0
        return np.linalg.inv(a)


def _max_step(x: np.ndarray, p: np.ndarray, config: TrainConfig) -> float:
    """Largest step length keeping every coordinate change inside its limit.

    Crossing a mean through zero swaps a finite crossing time for the cap, so
    a mean may move at most a fraction of its magnitude (plus a floor) per step.
    """
    limit = np.r_[
        np.maximum(config.max_mean_change * np.abs(x[:N_BEHAVIORS]), config.min_mean_change),
        np.full(N_BEHAVIORS, config.max_log_variance_change),
    ]
    moving = np.abs(p) > 0
    if not moving.any():
        return 1.0
    return float(np.min(limit[moving] / np.abs(p[moving])))


def _bfgs_update(H: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    sy = float(s @ y)
    if not sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
        return H
    rho = 1.0 / sy
    Hy = H @ y
    return H + ((sy + y @ Hy) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))


class _Run:
    """Mutable state shared by the optimization stages of one ``train`` call."""

    def __init__(self, f: Objective, x: np.ndarray, fx: float, config: TrainConfig, callback, restart=0):
        self.restart = restart
        self.f = f
        self.x = x
        self.fx = fx
        self.config = config
        self.callback = callback
        self.iteration = 0
        self.history = [fx]
        self.records: list[IterationRecord] = []
        self.best_x, self.best_f = x.copy(), fx
        self.converged = False
        self.message = ""

    def record(self, g: np.ndarray, step: float) -> None:
        rec = IterationRecord(self.iteration, self.fx, float(np.linalg.norm(g)), step, self.restart)
        self.records.append(rec)
        if self.callback:
            self.callback(rec)
        log.debug(
            "restart %d iter %d objective %.10g |grad| %.4g step %.4g",
            rec.restart, rec.iteration, rec.objective, rec.gradient_norm, rec.step_size,
        )

    def minimize(self, free: np.ndarray, budget: int) -> tuple[bool, str]:
        """BFGS over the coordinates flagged in ``free``; others stay put."""
        f, config = self.f, self.config
        lo, hi = config.lower(), config.upper()

        def restrict(g, jac):
            return np.where(free, g, 0.0), jac * free

        def curvature(jac):
            H = f.gauss_newton_inverse(jac, config.damping)
            return H * np.outer(free, free)

        g, jac = restrict(*f.gradient(self.x, config.gradient_step))
        H = curvature(jac)
        fresh = True
        used = 0
        while used < budget:
            p = -H @ g
            if not g @ p < 0:
                if fresh:
                    H = np.diag(free.astype(float))
                    p = -g
                else:
                    H, fresh = curvature(jac), True
                    continue

            t = min(1.0, _max_step(self.x, p, config))
            accepted = False
            for _ in range(config.max_backtracks):
                x_new = np.clip(self.x + t * p, lo, hi)
                s = x_new - self.x
                if not np.any(s):
                    break
                f_new = f(x_new)
                if math.isfinite(f_new) and f_new <= self.fx + 1e-4 * min(float(g @ s), 0.0):
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                if not fresh:
                    # curvature went stale across a kink; rebuild it here
                    H, fresh = curvature(jac), True
                    continue
                if not np.any(g):
                    return True, "zero gradient"
                return False, "line search failed"

            used += 1
            self.iteration += 1
            g_new, jac = restrict(*f.gradient(x_new, config.gradient_step))
            H = _bfgs_update(H, s, g_new - g)
            fresh = False
            decrease = self.fx - f_new
            self.x, self.fx, g = x_new, f_new, g_new
            self.history.append(f_new)
            self.record(g, t)
            if f_new < self.best_f:
                self.best_x, self.best_f = x_new.copy(), f_new
            if decrease < config.convergence_tolerance:
                return True, "objective decrease below tolerance"
        return False, "max_iterations reached"


def train(
    dataset: Sequence[InteractionSession] | CompiledDataset,
    init: ParameterSet,
    config: TrainConfig = TrainConfig(),
    sessions: Sequence[InteractionSession] | None = None,
    callback: Callable[[IterationRecord], None] | None = None,
) -> TrainReport:
    """Fit all means and variances; ``alpha`` and ``t_max`` stay fixed.

    BFGS on the inverse Hessian. The approximation starts from (and is reset
    to) the damped Gauss-Newton matrix built from the finite-difference
    Jacobian of the estimated durations. With ``means_first`` the means are
    fitted alone before all 16 coordinates are released. ``sessions``
    supplies the raw sessions for occurrence counting when ``dataset`` is
    already compiled.
    """
    if isinstance(dataset, CompiledDataset):
        data = dataset
        counts = occurrence_counts(sessions) if sessions is not None else {b: -1 for b in BEHAVIORS}
    else:
        if not dataset:
            raise TrainingError("training dataset is empty")
        data = CompiledDataset(dataset)
        counts = occurrence_counts(dataset)
    if data.n_users == 0:
        raise TrainingError("training dataset has no users")

    f = Objective(data, init.alpha, init.t_max, config.dependence_enabled)
    x = np.clip(pack(init), config.lower(), config.upper())
    fx = f(x)
    if not math.isfinite(fx):
        terms = f.terms(x)
        k = int(np.flatnonzero(~np.isfinite(terms))[0])
        sid, uid = data.keys[k]
        raise TrainingError(f"non-finite objective at init for user {uid} in session {sid}")

    runs = [_staged_fit(f, x, fx, config, callback, 0)]
    if config.restarts:
        rng = np.random.default_rng(config.seed)
        mean_active, var_active = _exercised(data, config.dependence_enabled)
        for k in range(1, config.restarts + 1):
            x0 = x.copy()
            x0[:N_BEHAVIORS] *= np.where(mean_active, np.exp(rng.normal(0.0, 0.5, N_BEHAVIORS)), 1.0)
            x0[N_BEHAVIORS:] += np.where(var_active, rng.normal(0.0, 2.0, N_BEHAVIORS), 0.0)
            x0 = np.clip(x0, config.lower(), config.upper())
            f0 = f(x0)
            if math.isfinite(f0):
                runs.append(_staged_fit(f, x0, f0, config, callback, k))
    best = min(runs, key=lambda r: r.best_f)
    return TrainReport(
        unpack(best.best_x, init),
        best.history,
        counts,
        best.converged,
        best.records,
        best.message,
        restart_objectives=[r.best_f for r in runs],
    )


def _staged_fit(f: Objective, x: np.ndarray, fx: float, config: TrainConfig, callback, restart: int) -> _Run:
    run = _Run(f, x, fx, config, callback, restart)
    run.record(f.gradient(x, config.gradient_step)[0], 0.0)
    stages = [np.ones(x.size, dtype=bool)]
    if config.means_first:
        stages.insert(0, np.r_[np.ones(N_BEHAVIORS, dtype=bool), np.zeros(N_BEHAVIORS, dtype=bool)])
    for free in stages:
        budget = config.max_iterations - run.iteration
        if budget <= 0:
            run.converged, run.message = False, "max_iterations reached"
            break
        run.converged, run.message = run.minimize(free, budget)
    return run


def _exercised(data: CompiledDataset, dependence: bool) -> tuple[np.ndarray, np.ndarray]:
    """Behaviors whose mean, and whose variance, can influence any estimate."""
    means = np.bincount(data.own, minlength=N_BEHAVIORS) > 0
    if not dependence:
        return means, np.zeros(N_BEHAVIORS, dtype=bool)
    multi = data.coupled[data.coupled.sum(axis=1) > 1]
    return means | (data.coupled.sum(axis=0) > 0), multi.sum(axis=0) > 0


class DatasetSplit(NamedTuple):
    train: list[InteractionSession]
    validation: list[InteractionSession]
    train_user_fraction: float


def split_dataset(
    sessions: Sequence[InteractionSession], train_fraction: float = 0.79, seed: int = 0
) -> DatasetSplit:
    """Shuffle whole sessions with ``seed`` and cut at ``train_fraction``.

    Groups are never divided, so the achieved user-level fraction is only
    approximately ``train_fraction``.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = len(sessions)
    if n < 2:
        raise ValueError(f"need at least 2 sessions to split, got {n}")
    n_train = min(max(int(round(train_fraction * n)), 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    train_idx = sorted(order[:n_train])
    val_idx = sorted(order[n_train:])
    train_set = [sessions[i] for i in train_idx]
    val_set = [sessions[i] for i in val_idx]
    n_users_train = sum(len(s.users) for s in train_set)
    n_users = n_users_train + sum(len(s.users) for s in val_set)
    return DatasetSplit(train_set, val_set, n_users_train / n_users)
