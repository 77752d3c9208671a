"""The sequential search loop: budgets, protocols, and run records.

A run replays one engine against one score table for exactly L pulls.
Under the single-fold protocol the engine is served validation scores from
one fold; under the cross-validated protocol it is served the K-fold mean.
The engine path never touches test scores; those are only read afterwards
by the metrics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .engines import EngineConfig, Exhausted, make_engine
from .grid import Arm
from .table import CV, ScoreTable, View


class DriverError(ValueError):
    pass


@dataclass(frozen=True)
class Protocol:
    """Fold protocol: cross_validated, or single_fold with a 1-based fold."""

    kind: str  # "cross_validated" | "single_fold"
    fold: int | None = None

    def __post_init__(self) -> None:
        if self.kind == "cross_validated":
            if self.fold is not None:
                raise DriverError("cross_validated takes no fold")
        elif self.kind == "single_fold":
            if self.fold is None or self.fold < 1:
                raise DriverError("single_fold needs a 1-based fold index")
        else:
            raise DriverError(f"unknown protocol kind {self.kind!r}")

    @property
    def view(self) -> View:
        return CV if self.kind == "cross_validated" else self.fold

    def key(self) -> str:
        return "cv" if self.kind == "cross_validated" else f"fold{self.fold}"

    @classmethod
    def cross_validated(cls) -> "Protocol":
        return cls("cross_validated")

    @classmethod
    def single_fold(cls, fold: int) -> "Protocol":
        return cls("single_fold", fold)

    @classmethod
    def from_key(cls, key: str) -> "Protocol":
        if key == "cv":
            return cls.cross_validated()
        if key.startswith("fold"):
            return cls.single_fold(int(key[4:]))
        raise DriverError(f"unknown protocol key {key!r}")


def budget_for(m: int, n: int, mode: str = "round_formula") -> int:
    """Trial budget for multiplier m on a grid of size n.

    ``round_formula``: round(m * sqrt(n)); ``scale_base`` multiplies the
    already-rounded base budget instead. Both clamp to [1, n].
    """
    if n < 1:
        raise DriverError("grid size must be >= 1")
    if mode == "round_formula":
        budget = round(m * math.sqrt(n))
    elif mode == "scale_base":
        budget = m * round(math.sqrt(n))
    else:
        raise DriverError(f"unknown budget mode {mode!r}")
    return max(1, min(int(budget), n))


@dataclass
class RunRecord:
    """One engine run: config echo, pull sequence, and the selected score."""

    table_id: str
    model: str
    data: str
    engine: dict
    protocol: str
    m: int
    budget: int
    seed: int
    pulls: list  # [[coords...], served validation score, duplicate flag]
    fallback_used: bool
    r_star: float

    FIELD_ORDER = (
        "table_id", "model", "data", "engine", "protocol", "m",
        "budget", "seed", "pulls", "fallback_used", "r_star",
    )

    def to_json_line(self) -> str:
        doc = {name: getattr(self, name) for name in self.FIELD_ORDER}
        return json.dumps(doc, sort_keys=False, separators=(",", ":"))

    @classmethod
    def from_json_line(cls, line: str) -> "RunRecord":
        doc = json.loads(line)
        return cls(**{name: doc[name] for name in cls.FIELD_ORDER})

    @property
    def arms(self) -> list[Arm]:
        return [tuple(coords) for coords, _, _ in self.pulls]

    def key(self) -> str:
        return run_key(
            self.table_id, self.engine["name"], self.protocol, self.m, self.seed
        )


def run_key(table_id: str, engine_name: str, protocol_key: str, m: int,
            seed: int) -> str:
    return f"{table_id}__{engine_name}__{protocol_key}__m{m}__s{seed}"


def run(
    engine_config: EngineConfig,
    table: ScoreTable,
    protocol: Protocol,
    m: int,
    seed: int,
    table_id: str = "table",
    model: str | None = None,
    data: str = "default",
    budget_mode: str = "round_formula",
) -> RunRecord:
    """Execute the sequential loop for L = budget_for(m, N) pulls.

    Duplicate proposals are served from a memo and still consume budget.
    If the engine signals exhaustion, the remaining pulls fall back to
    uniform random over unpulled arms (flagged in the record).
    """
    if protocol.kind == "single_fold" and protocol.fold > table.n_folds:
        raise DriverError(
            f"fold {protocol.fold} out of range [1, {table.n_folds}]"
        )
    budget = budget_for(m, table.size, mode=budget_mode)
    engine = make_engine(engine_config, table.spec, budget, run_seed=seed)
    served = table.val_view(protocol.view)
    fallback_rng = np.random.default_rng([engine_config.seed, seed, budget])
    history: list[tuple[Arm, float]] = []
    pulls = []
    fallback_used = False
    exhausted = False
    seen: set[int] = set()
    for _ in range(budget):
        if not exhausted:
            try:
                arm = engine.suggest(history)
            except Exhausted:
                exhausted = True
        if exhausted:
            free = [k for k in range(table.size) if k not in seen]
            if not free:
                free = list(range(table.size))
            arm = table.spec.from_linear(int(fallback_rng.choice(free)))
            fallback_used = True
        arm = table.spec.validate_arm(arm)
        k = table.spec.to_linear(arm)
        duplicate = k in seen
        seen.add(k)
        score = float(served[k])
        history.append((arm, score))
        pulls.append([list(arm), score, duplicate])
    test = table.test_view(protocol.view)
    # best served validation score, ties by earliest pull
    best = max(range(budget), key=lambda i: (history[i][1], -i))
    r_star = float(test[table.spec.to_linear(history[best][0])])
    return RunRecord(
        table_id=table_id,
        model=model if model is not None else table_id,
        data=data,
        engine=engine_config.to_dict(),
        protocol=protocol.key(),
        m=m,
        budget=budget,
        seed=seed,
        pulls=pulls,
        fallback_used=fallback_used,
        r_star=r_star,
    )


def rank_sequence(record: RunRecord, table: ScoreTable) -> list[int]:
    """Test rank of each pulled arm, in pull order; duplicates repeat."""
    view = Protocol.from_key(record.protocol).view
    ranks = table.test_ranks(view)
    return [int(ranks[table.spec.to_linear(arm)]) for arm in record.arms]
