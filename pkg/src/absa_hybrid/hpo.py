"""Hyperparameter search with a tree-structured Parzen estimator.

The four tuned dimensions (learning rate, momentum, L2, dropout) are
unconditional, so the estimator degenerates to a per-dimension product of
1-D Parzen mixtures.  Past trials are split at a quantile of the objective
(higher objective = better) into a good set and a bad set; candidates are
drawn from the good-set density l(x) and ranked by the density ratio
l(x) / g(x).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigError, ContractError

logger = logging.getLogger(__name__)

_TINY = 1e-300


@dataclass(frozen=True)
class Dimension:
    name: str
    lower: float
    upper: float
    scale: str = "linear"          # "linear" | "log"

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ConfigError(f"{self.name}: lower bound must be below upper")
        if self.scale not in ("linear", "log"):
            raise ConfigError(f"{self.name}: unknown scale {self.scale!r}")
        if self.scale == "log" and self.lower <= 0.0:
            raise ConfigError(f"{self.name}: log scale needs a positive lower bound")

    def transform(self, x: float) -> float:
        return math.log(x) if self.scale == "log" else x

    def untransform(self, u: float) -> float:
        return math.exp(u) if self.scale == "log" else u

    @property
    def bounds_transformed(self) -> tuple[float, float]:
        return self.transform(self.lower), self.transform(self.upper)

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dimension, ...]

    def __post_init__(self):
        if not self.dims:
            raise ConfigError("search space has no dimensions")

    def contains(self, point: dict[str, float]) -> bool:
        return all(d.name in point and d.contains(point[d.name]) for d in self.dims)


def default_space() -> SearchSpace:
    """Shipped search ranges for the four trained hyperparameters."""
    return SearchSpace((
        Dimension("learning_rate", 1e-4, 1e-1, "log"),
        Dimension("momentum", 0.5, 0.99),
        Dimension("l2", 1e-6, 1e-2, "log"),
        Dimension("dropout", 0.0, 0.7),
    ))


@dataclass
class Trial:
    point: dict[str, float]
    value: float | None = None     # objective (higher is better); None if failed
    status: str = "ok"             # "ok" | "failed"


@dataclass(frozen=True)
class TpeConfig:
    gamma: float = 0.25            # quantile defining the good set
    startup: int = 10              # uniform trials before the estimator kicks in
    candidates: int = 24           # draws from l(x) per suggestion
    bandwidth_floor: float = 0.01  # as a fraction of the (transformed) range

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.startup < 2:
            raise ConfigError(f"startup trials must be >= 2, got {self.startup}")
        if self.candidates < 1:
            raise ConfigError("need at least one candidate draw")


class History:
    """Append-only trial log; order is the execution order."""

    def __init__(self, trials: list[Trial] | None = None):
        self.trials: list[Trial] = list(trials or [])

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def ok_trials(self) -> list[Trial]:
        return [t for t in self.trials if t.status == "ok" and t.value is not None]

    def best(self) -> Trial | None:
        ok = self.ok_trials()
        if not ok:
            return None
        return max(ok, key=lambda t: t.value)


def observe(history: History, trial: Trial, space: SearchSpace) -> History:
    if not space.contains(trial.point):
        raise ContractError(f"trial point {trial.point} is out of bounds")
    history.trials.append(trial)
    return history


class ParzenMixture:
    """1-D mixture of bounds-truncated Gaussians centred at observed points.

    Each point's bandwidth is its distance to the farthest adjacent
    neighbour (after sorting), floored at a fraction of the range; a lone
    point gets the full range.
    """

    def __init__(self, points: np.ndarray, lo: float, hi: float, floor_fraction: float):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 1 or points.shape[0] == 0:
            raise ContractError("Parzen mixture needs at least one point")
        self.lo, self.hi = lo, hi
        order = np.argsort(points)
        sorted_pts = points[order]
        n = points.shape[0]
        span = hi - lo
        bw_sorted = np.empty(n)
        if n == 1:
            bw_sorted[0] = span
        else:
            gaps_prev = np.empty(n)
            gaps_next = np.empty(n)
            gaps_prev[1:] = sorted_pts[1:] - sorted_pts[:-1]
            gaps_prev[0] = 0.0
            gaps_next[:-1] = sorted_pts[1:] - sorted_pts[:-1]
            gaps_next[-1] = 0.0
            bw_sorted = np.maximum(gaps_prev, gaps_next)
        bw_sorted = np.maximum(bw_sorted, floor_fraction * span)
        self.mu = sorted_pts
        self.sigma = bw_sorted
        # truncation mass of each component on [lo, hi]
        self._cdf_lo = ndtr((lo - self.mu) / self.sigma)
        self._cdf_hi = ndtr((hi - self.mu) / self.sigma)
        self._mass = self._cdf_hi - self._cdf_lo

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        z = (x[:, None] - self.mu[None, :]) / self.sigma[None, :]
        comp = np.exp(-0.5 * z * z) / (self.sigma[None, :] * math.sqrt(2.0 * math.pi))
        comp = comp / self._mass[None, :]
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, comp.mean(axis=1), 0.0)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Inverse-CDF draws from uniformly chosen components."""
        idx = rng.integers(0, self.mu.shape[0], size=count)
        u = rng.random(count)
        lo_cdf = self._cdf_lo[idx]
        hi_cdf = self._cdf_hi[idx]
        return self.mu[idx] + self.sigma[idx] * ndtri(lo_cdf + u * (hi_cdf - lo_cdf))


def _split_good_bad(ok: list[Trial], gamma: float) -> tuple[list[Trial], list[Trial]]:
    """Top ceil(gamma * N) trials by objective form the good set."""
    n_good = math.ceil(gamma * len(ok))
    order = sorted(range(len(ok)), key=lambda i: (-ok[i].value, i))
    good_idx = set(order[:n_good])
    good = [ok[i] for i in range(len(ok)) if i in good_idx]
    bad = [ok[i] for i in range(len(ok)) if i not in good_idx]
    return good, bad


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> dict[str, float]:
    """One point uniform per dimension (uniform in the exponent on log scale)."""
    point = {}
    for dim in space.dims:
        lo, hi = dim.bounds_transformed
        point[dim.name] = dim.untransform(rng.uniform(lo, hi))
    return point


def suggest(space: SearchSpace, history: History, config: TpeConfig,
            rng: np.random.Generator) -> dict[str, float]:
    """Next configuration to try.

    Uniform during startup; afterwards the candidate with the best
    good-to-bad density ratio among draws from the good-set mixture.
    """
    ok = history.ok_trials()
    if len(ok) < config.startup:
        return sample_uniform(space, rng)
    good, bad = _split_good_bad(ok, config.gamma)

    candidate_columns = []
    score = np.zeros(config.candidates)
    for dim in space.dims:
        lo, hi = dim.bounds_transformed
        good_pts = np.array([dim.transform(t.point[dim.name]) for t in good])
        l_mix = ParzenMixture(good_pts, lo, hi, config.bandwidth_floor)
        draws = np.clip(l_mix.sample(rng, config.candidates), lo, hi)
        l_pdf = np.maximum(l_mix.pdf(draws), _TINY)
        if bad:
            bad_pts = np.array([dim.transform(t.point[dim.name]) for t in bad])
            g_pdf = np.maximum(ParzenMixture(bad_pts, lo, hi,
                                             config.bandwidth_floor).pdf(draws), _TINY)
        else:
            g_pdf = np.full(config.candidates, 1.0 / (hi - lo))
        score += np.log(l_pdf) - np.log(g_pdf)
        candidate_columns.append(draws)
    best = int(np.argmax(score))
    return {dim.name: dim.untransform(float(col[best]))
            for dim, col in zip(space.dims, candidate_columns)}


def tune(space: SearchSpace, objective, budget: int,
         config: TpeConfig = TpeConfig(), seed: int = 0,
         sampler: str = "tpe",
         history: History | None = None) -> tuple[Trial | None, History]:
    """Run suggest -> evaluate -> observe for ``budget`` trials.

    ``objective(point) -> float`` returns a higher-is-better score; an
    exception marks the trial failed and the loop continues.  ``sampler``
    may be ``"random"`` for a pure uniform baseline.  Passing a previously
    saved ``history`` resumes on top of it (the budget counts new trials).
    """
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    if sampler not in ("tpe", "random"):
        raise ConfigError(f"unknown sampler {sampler!r}")
    rng = np.random.default_rng(seed)
    if history is None:
        history = History()
    for _ in range(budget):
        if sampler == "random":
            point = sample_uniform(space, rng)
        else:
            point = suggest(space, history, config, rng)
        try:
            value = float(objective(point))
        except Exception as exc:       # objective failures must not kill the loop
            logger.warning("trial failed at %s: %s", point, exc)
            observe(history, Trial(point, None, "failed"), space)
            continue
        observe(history, Trial(point, value, "ok"), space)
    return history.best(), history


def save_history(history: History, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in history:
            fh.write(json.dumps({"point": t.point, "value": t.value,
                                 "status": t.status}, sort_keys=True) + "\n")


def load_history(path) -> History:
    trials = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            trials.append(Trial(obj["point"], obj["value"], obj["status"]))
    return History(trials)
