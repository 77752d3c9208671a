"""Pluggable sequential search engines over a finite grid.

Every engine implements ``suggest(history) -> arm``: given the ordered
(arm, validation score) pairs pulled so far, propose the next arm. Engines
never see test scores. Proposals are deterministic given the engine config,
its seed, and the history prefix.

Engine families:

- ``random``: uniform without replacement over unpulled arms.
- ``grid_sweep``: exhaustive enumeration in linear-index order.
- ``space_filling``: greedy maximin design in normalized coordinates.
- ``parzen``: categorical good/bad density ratio after a space-filling
  warm start (TPE-flavored).
- ``gp_ei``: Gaussian-process surrogate with grid-resolution length scales
  and expected-improvement acquisition.
- ``local_restart``: hill climbing on grid neighbors with uniform restarts.
- ``blended``: interleaves local_restart and space_filling on a fixed
  schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .grid import Arm, GridSpec

History = list[tuple[Arm, float]]

ENGINE_KINDS = (
    "random",
    "grid_sweep",
    "space_filling",
    "parzen",
    "gp_ei",
    "local_restart",
    "blended",
)


class Exhausted(Exception):
    """The engine cannot produce another proposal (proposal set used up)."""


class EngineConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    """Engine kind plus kind-specific parameters and a seed.

    ``name`` labels the engine in reports; it defaults to the kind so two
    differently-parameterized engines of one kind can coexist in a campaign.
    """

    kind: str
    seed: int = 0
    params: Mapping[str, Any] = field(default_factory=dict)
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ENGINE_KINDS:
            raise EngineConfigError(
                f"unknown engine kind {self.kind!r}; choose from {ENGINE_KINDS}"
            )

    @property
    def label(self) -> str:
        return self.name or self.kind

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.label,
            "seed": self.seed,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EngineConfig":
        return cls(
            kind=d["kind"],
            seed=int(d.get("seed", 0)),
            params=d.get("params", {}),
            name=d.get("name"),
        )


def _normalized_grid(spec: GridSpec) -> np.ndarray:
    """All arms as rows of normalized coordinates in [0, 1]^D."""
    coords = np.array([spec.from_linear(k) for k in range(spec.size)], dtype=float)
    span = np.maximum(np.array(spec.sizes, dtype=float) - 1.0, 1.0)
    return (coords - 1.0) / span


def _pulled_linear(spec: GridSpec, history: History) -> set[int]:
    return {spec.to_linear(arm) for arm, _ in history}


class Engine:
    """Base class; subclasses override :meth:`suggest`."""

    def __init__(self, spec: GridSpec, rng: np.random.Generator, budget: int,
                 **params):
        if params:
            raise EngineConfigError(f"unknown parameters {sorted(params)}")
        self.spec = spec
        self.rng = rng
        self.budget = budget

    def suggest(self, history: History) -> Arm:
        raise NotImplementedError


class RandomEngine(Engine):
    """Uniform sampling without replacement over all arms."""

    def __init__(self, spec, rng, budget, **params):
        super().__init__(spec, rng, budget, **params)
        self._order = list(rng.permutation(spec.size))
        self._pos = 0

    def suggest(self, history: History) -> Arm:
        pulled = _pulled_linear(self.spec, history)
        while self._pos < len(self._order):
            k = int(self._order[self._pos])
            self._pos += 1
            if k not in pulled:
                return self.spec.from_linear(k)
        raise Exhausted


class GridSweepEngine(Engine):
    """Exhaustive enumeration in linear-index order."""

    def __init__(self, spec, rng, budget, **params):
        super().__init__(spec, rng, budget, **params)
        self._next = 0

    def suggest(self, history: History) -> Arm:
        if self._next >= self.spec.size:
            raise Exhausted
        arm = self.spec.from_linear(self._next)
        self._next += 1
        return arm


class SpaceFillingEngine(Engine):
    """Greedy maximin design: each proposal maximizes the minimum distance
    (in normalized coordinates) to all previous proposals.

    The first proposal is uniform random; ties break by ascending linear
    index. Without replacement by construction.
    """

    def __init__(self, spec, rng, budget, **params):
        super().__init__(spec, rng, budget, **params)
        self._points = _normalized_grid(spec)
        self._min_dist = np.full(spec.size, np.inf)
        self._chosen: set[int] = set()

    def suggest(self, history: History) -> Arm:
        if len(self._chosen) >= self.spec.size:
            raise Exhausted
        if not self._chosen:
            k = int(self.rng.integers(self.spec.size))
        else:
            dist = self._min_dist.copy()
            dist[list(self._chosen)] = -np.inf
            k = int(np.argmax(dist))  # argmax takes the lowest index on ties
        self._chosen.add(k)
        d = np.linalg.norm(self._points - self._points[k], axis=1)
        np.minimum(self._min_dist, d, out=self._min_dist)
        return self.spec.from_linear(k)


def default_warm_start(budget: int) -> int:
    """Initial space-filling pulls for model-based engines."""
    return max(2, math.ceil(budget / 4))


class ParzenEngine(Engine):
    """Categorical density-ratio engine.

    After the warm start, history is split at the top-``gamma`` quantile of
    validation scores. Each axis gets add-one-smoothed categorical
    distributions for the good and bad groups; the proposal is the candidate
    arm maximizing the product of per-axis good/bad probability ratios over
    a uniform candidate sample. May re-propose pulled arms.
    """

    def __init__(self, spec, rng, budget, *, gamma: float = 0.25,
                 n_candidates: int = 64, warm_start: int | None = None, **params):
        super().__init__(spec, rng, budget, **params)
        if not 0 < gamma < 1:
            raise EngineConfigError("gamma must be in (0, 1)")
        if n_candidates < 1:
            raise EngineConfigError("n_candidates must be >= 1")
        self.gamma = gamma
        self.n_candidates = n_candidates
        self.warm_start = (
            default_warm_start(budget) if warm_start is None else warm_start
        )
        self._warm = SpaceFillingEngine(spec, rng, budget)

    def _axis_ratios(self, history: History) -> list[np.ndarray]:
        order = sorted(
            range(len(history)), key=lambda i: (-history[i][1], i)
        )
        n_good = max(1, math.ceil(self.gamma * len(history)))
        good = set(order[:n_good])
        ratios = []
        for j, n in enumerate(self.spec.sizes):
            cg = np.zeros(n)
            cb = np.zeros(n)
            for i, (arm, _) in enumerate(history):
                (cg if i in good else cb)[arm[j] - 1] += 1
            pg = (cg + 1.0) / (cg.sum() + n)
            pb = (cb + 1.0) / (cb.sum() + n)
            ratios.append(pg / pb)
        return ratios

    def suggest(self, history: History) -> Arm:
        if len(history) < self.warm_start:
            return self._warm.suggest(history)
        ratios = self._axis_ratios(history)
        cand = np.column_stack(
            [self.rng.integers(1, n + 1, size=self.n_candidates)
             for n in self.spec.sizes]
        )
        score = np.ones(self.n_candidates)
        for j, r in enumerate(ratios):
            score *= r[cand[:, j] - 1]
        keys = [self.spec.to_linear(tuple(row)) for row in cand]
        # prefer unpulled candidates so duplicates don't eat the budget;
        # fall back to the full sample when everything sampled is pulled
        pulled = _pulled_linear(self.spec, history)
        pool = [i for i in range(self.n_candidates) if keys[i] not in pulled]
        if not pool:
            pool = list(range(self.n_candidates))
        best = min(pool, key=lambda i: (-score[i], keys[i]))
        return self.spec.from_linear(keys[best])


class GpEiEngine(Engine):
    """Discrete Gaussian-process surrogate with expected improvement.

    Squared-exponential kernel on normalized coordinates with the length
    scale fixed to one grid step per axis; only the noise variance is fit,
    by maximum marginal likelihood over a log-spaced grid. The proposal is
    the unpulled arm with the highest expected improvement (ties by
    ascending linear index).
    """

    NOISE_GRID = np.logspace(-8, 1, 28)

    def __init__(self, spec, rng, budget, *, warm_start: int | None = None,
                 **params):
        super().__init__(spec, rng, budget, **params)
        self.warm_start = (
            default_warm_start(budget) if warm_start is None else warm_start
        )
        self._warm = SpaceFillingEngine(spec, rng, budget)
        self._points = _normalized_grid(spec)
        span = np.maximum(np.array(spec.sizes, dtype=float) - 1.0, 1.0)
        self._length_scales = 1.0 / span  # one grid step per axis

    def _kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        diff = (a[:, None, :] - b[None, :, :]) / self._length_scales
        return np.exp(-0.5 * np.sum(diff**2, axis=-1))

    def _fit(self, history: History):
        """Standardize targets and pick the ML noise variance."""
        x = np.array(
            [self._points[self.spec.to_linear(arm)] for arm, _ in history]
        )
        y = np.array([score for _, score in history])
        mu, sd = y.mean(), y.std()
        if sd == 0:
            sd = 1.0
        z = (y - mu) / sd
        k_xx = self._kernel(x, x)
        n = len(z)
        best = (-np.inf, None, None)
        for noise in self.NOISE_GRID:
            try:
                chol = np.linalg.cholesky(k_xx + noise * np.eye(n))
            except np.linalg.LinAlgError:
                continue
            alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, z))
            loglik = (
                -0.5 * z @ alpha
                - np.log(np.diag(chol)).sum()
                - 0.5 * n * math.log(2 * math.pi)
            )
            if loglik > best[0]:
                best = (loglik, noise, (chol, alpha))
        if best[1] is None:
            raise RuntimeError("no noise level produced a valid factorization")
        _, noise, (chol, alpha) = best
        return x, z, mu, sd, noise, chol, alpha

    def posterior(self, history: History, arms: Sequence[Arm]):
        """Posterior mean and variance at arbitrary arms, in score units."""
        x, z, mu, sd, noise, chol, alpha = self._fit(history)
        q = np.array([self._points[self.spec.to_linear(a)] for a in arms])
        k_star = self._kernel(q, x)
        mean = k_star @ alpha
        v = np.linalg.solve(chol, k_star.T)
        var = np.maximum(1.0 - np.sum(v**2, axis=0), 0.0)
        return mean * sd + mu, var * sd**2

    def fitted_noise(self, history: History) -> float:
        return self._fit(history)[4]

    def suggest(self, history: History) -> Arm:
        if len(history) < self.warm_start:
            return self._warm.suggest(history)
        pulled = _pulled_linear(self.spec, history)
        free = [k for k in range(self.spec.size) if k not in pulled]
        if not free:
            raise Exhausted
        x, z, mu, sd, noise, chol, alpha = self._fit(history)
        q = self._points[free]
        k_star = self._kernel(q, x)
        mean = k_star @ alpha
        v = np.linalg.solve(chol, k_star.T)
        var = np.maximum(1.0 - np.sum(v**2, axis=0), 0.0)
        std = np.sqrt(var)
        best = z.max()
        improve = mean - best
        ei = np.zeros(len(free))
        pos = std > 0
        u = improve[pos] / std[pos]
        ei[pos] = improve[pos] * norm.cdf(u) + std[pos] * norm.pdf(u)
        ei[~pos] = np.maximum(improve[~pos], 0.0)
        # argmax over free arms; free is ascending so ties pick lowest index
        return self.spec.from_linear(free[int(np.argmax(ei))])


class LocalRestartEngine(Engine):
    """First-improvement hill climbing on grid neighbors.

    When the current arm's full neighborhood has been evaluated without
    improvement, restart uniformly at random among unpulled arms.
    """

    def __init__(self, spec, rng, budget, **params):
        super().__init__(spec, rng, budget, **params)
        self._current: Arm | None = None

    def _restart(self, pulled: set[int]) -> Arm:
        free = [k for k in range(self.spec.size) if k not in pulled]
        if not free:
            raise Exhausted
        self._current = self.spec.from_linear(int(self.rng.choice(free)))
        return self._current

    def suggest(self, history: History) -> Arm:
        memo: dict[Arm, float] = {}
        for arm, score in history:
            memo.setdefault(arm, score)
        pulled = _pulled_linear(self.spec, history)
        if self._current is None:
            return self._restart(pulled)
        if self._current not in memo:
            # restart proposal not recorded yet (shouldn't happen mid-run)
            return self._current
        while True:
            nbrs = self.spec.neighbors(self._current)
            moved = False
            for b in nbrs:
                if b in memo and memo[b] > memo[self._current]:
                    self._current = b
                    moved = True
                    break
            if moved:
                continue
            for b in nbrs:
                if b not in memo:
                    return b
            return self._restart(pulled)


class BlendedEngine(Engine):
    """Interleaves local hill climbing with global space-filling proposals.

    Every ``period``-th call (starting with the first) comes from the
    space-filling component; the rest from the local component. Both
    components see the full history.
    """

    def __init__(self, spec, rng, budget, *, period: int = 3, **params):
        super().__init__(spec, rng, budget, **params)
        if period < 2:
            raise EngineConfigError("period must be >= 2")
        self.period = period
        self._global = SpaceFillingEngine(spec, rng, budget)
        self._local = LocalRestartEngine(spec, rng, budget)
        self._calls = 0

    def suggest(self, history: History) -> Arm:
        step = self._calls
        self._calls += 1
        if step % self.period == 0:
            try:
                return self._global.suggest(history)
            except Exhausted:
                return self._local.suggest(history)
        return self._local.suggest(history)


_ENGINE_CLASSES = {
    "random": RandomEngine,
    "grid_sweep": GridSweepEngine,
    "space_filling": SpaceFillingEngine,
    "parzen": ParzenEngine,
    "gp_ei": GpEiEngine,
    "local_restart": LocalRestartEngine,
    "blended": BlendedEngine,
}


def make_engine(
    config: EngineConfig, spec: GridSpec, budget: int, run_seed: int = 0
) -> Engine:
    """Instantiate an engine with a deterministic stream from (config seed,
    run seed)."""
    rng = np.random.default_rng([config.seed, run_seed])
    cls = _ENGINE_CLASSES[config.kind]
    try:
        return cls(spec, rng, budget, **dict(config.params))
    except TypeError as exc:
        raise EngineConfigError(
            f"bad parameters for engine {config.kind!r}: {exc}"
        ) from exc
