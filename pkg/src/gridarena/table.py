"""Full-grid score tables: storage, file I/O, synthesis, and rank queries.

A score table holds a validation and a test score for every (arm, fold)
pair. Engines only ever see validation scores; test scores feed the
evaluation metrics. The single internal orientation is higher-is-better;
loaders accept a ``minimize`` flag and negate on ingestion.

A *view* selects how folds are collapsed: an integer ``k`` (1-based) reads
fold k, the string ``"cv"`` averages across folds.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import numpy as np

from .grid import Arm, GridError, GridSpec

View = Union[int, str]
CV = "cv"


class TableError(ValueError):
    """Malformed or incomplete score data."""


class CompletenessError(TableError):
    """A required (arm, fold) cell is missing."""


# ---------------------------------------------------------------------------
# synthetic landscapes


def _normalized(coords: Arm, sizes: Sequence[int]) -> np.ndarray:
    """Grid coordinates mapped to [0, 1] per axis (0 for singleton axes)."""
    return np.array(
        [(c - 1) / (n - 1) if n > 1 else 0.0 for c, n in zip(coords, sizes)]
    )


def _default_center(sizes: Sequence[int]) -> list[float]:
    return [(n + 1) / 2 for n in sizes]


def _bowl(coords: Arm, sizes, params) -> float:
    center = params.get("center", _default_center(sizes))
    acc = 0.0
    for c, c0, n in zip(coords, center, sizes):
        span = max(n - 1, 1)
        acc += ((c - c0) / span) ** 2
    return 1.0 - acc / len(sizes)


def _ridge(coords: Arm, sizes, params) -> float:
    # high along the diagonal x_1 = x_2 = ..., with a mild slope so the
    # maximum is unique at the all-max corner
    slope = params.get("slope", 0.1)
    x = _normalized(coords, sizes)
    return 1.0 - float(np.std(x)) + slope * float(np.mean(x))


def _plateau(coords: Arm, sizes, params) -> float:
    # flat top inside a box around the center; exercises tie handling
    center = params.get("center", _default_center(sizes))
    radius = params.get("radius", 1.0)
    dist = max(abs(c - c0) for c, c0 in zip(coords, center))
    if dist <= radius:
        return 1.0
    span = max(max(sizes) - 1, 1)
    return 1.0 - (dist - radius) / span


def _deceptive_spike(coords: Arm, sizes, params) -> float:
    # broad hill plus a strictly better single-cell spike elsewhere
    spike = params.get("spike", tuple(1 for _ in sizes))
    base = 0.8 * _bowl(coords, sizes, params)
    if tuple(coords) == tuple(spike):
        base += 0.3
    return base


OBJECTIVES = {
    "separable-bowl": _bowl,
    "ridge": _ridge,
    "plateau": _plateau,
    "deceptive-spike": _deceptive_spike,
}


@dataclass(frozen=True)
class LandscapeSpec:
    """Parametric synthetic objective plus a per-fold validation noise model."""

    grid: GridSpec
    objective: str
    params: Mapping[str, Any] = field(default_factory=dict)
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise TableError(
                f"unknown objective {self.objective!r}; "
                f"choose from {sorted(OBJECTIVES)}"
            )
        if self.noise_sd < 0:
            raise TableError("noise_sd must be >= 0")

    def value(self, coords: Arm) -> float:
        """Noiseless objective value at an arm."""
        return OBJECTIVES[self.objective](
            self.grid.validate_arm(coords), self.grid.sizes, self.params
        )

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_manifest(),
            "objective": self.objective,
            "params": dict(self.params),
            "noise_sd": self.noise_sd,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LandscapeSpec":
        return cls(
            grid=GridSpec.from_manifest(d["grid"]),
            objective=d["objective"],
            params=d.get("params", {}),
            noise_sd=d.get("noise_sd", 0.0),
            seed=d.get("seed", 0),
        )


# ---------------------------------------------------------------------------
# the table


class ScoreTable:
    """Immutable (N arms x K folds) validation and test score store."""

    def __init__(self, spec: GridSpec, val: np.ndarray, test: np.ndarray):
        val = np.asarray(val, dtype=float)
        test = np.asarray(test, dtype=float)
        if val.shape != test.shape or val.ndim != 2 or val.shape[0] != spec.size:
            raise TableError(
                f"score arrays must both be (N={spec.size}, K); "
                f"got val {val.shape}, test {test.shape}"
            )
        if val.shape[1] < 1:
            raise TableError("need at least one fold")
        if not (np.isfinite(val).all() and np.isfinite(test).all()):
            raise TableError("scores must be finite")
        self.spec = spec
        self._val = val
        self._val.setflags(write=False)
        self._test = test
        self._test.setflags(write=False)

    @property
    def n_folds(self) -> int:
        return self._val.shape[1]

    @property
    def size(self) -> int:
        return self.spec.size

    def _check_view(self, view: View) -> View:
        if view == CV:
            return view
        k = int(view)
        if not 1 <= k <= self.n_folds:
            raise TableError(f"fold {k} out of range [1, {self.n_folds}]")
        return k

    def val_view(self, view: View) -> np.ndarray:
        """Validation scores per linear arm under a view."""
        view = self._check_view(view)
        if view == CV:
            return self._val.mean(axis=1)
        return self._val[:, view - 1].copy()

    def test_view(self, view: View) -> np.ndarray:
        """Test scores per linear arm under a view."""
        view = self._check_view(view)
        if view == CV:
            return self._test.mean(axis=1)
        return self._test[:, view - 1].copy()

    def val_score(self, coords: Arm, fold: int) -> float:
        return float(self._val[self.spec.to_linear(coords), self._check_view(fold) - 1])

    def test_score(self, coords: Arm, fold: int) -> float:
        return float(self._test[self.spec.to_linear(coords), self._check_view(fold) - 1])

    def cv_scores(self, coords: Arm) -> tuple[float, float]:
        """(mean validation, mean test) over the K folds for one arm."""
        k = self.spec.to_linear(coords)
        return float(self._val[k].mean()), float(self._test[k].mean())

    def test_ranks(self, view: View) -> np.ndarray:
        """Rank of each arm's test score under a view, indexed by linear arm.

        Rank 1 is the best (highest) score; ties break by ascending linear
        index, so the output is always a permutation of 1..N.
        """
        scores = self.test_view(view)
        # stable sort on -score keeps ascending linear index within ties
        order = np.argsort(-scores, kind="stable")
        ranks = np.empty(self.size, dtype=int)
        ranks[order] = np.arange(1, self.size + 1)
        return ranks

    def validation_order(self, view: View) -> list[tuple[Arm, float]]:
        """Arms sorted by descending validation score, paired with test scores.

        Ties break by ascending linear index. The first entry's test score is
        the full-grid-search reference score for this view.
        """
        val = self.val_view(view)
        test = self.test_view(view)
        order = np.argsort(-val, kind="stable")
        return [(self.spec.from_linear(int(k)), float(test[k])) for k in order]

    def grid_best_score(self, view: View) -> float:
        """Test score of the arm with the best validation score."""
        return self.validation_order(view)[0][1]


# ---------------------------------------------------------------------------
# synthesis


def synth_table(land: LandscapeSpec, n_folds: int) -> ScoreTable:
    """Generate a full table from a parametric landscape.

    Test scores are the noiseless objective, identical across folds.
    Validation scores add Gaussian noise drawn from a stream seeded by
    (seed, arm, fold), so tables are reproducible cell by cell.
    """
    if n_folds < 1:
        raise TableError("fold count must be >= 1")
    n = land.grid.size
    truth = np.array([land.value(land.grid.from_linear(k)) for k in range(n)])
    test = np.tile(truth[:, None], (1, n_folds))
    val = test.copy()
    if land.noise_sd > 0:
        for k in range(n):
            for fold in range(n_folds):
                rng = np.random.default_rng([land.seed, k, fold])
                val[k, fold] += land.noise_sd * rng.standard_normal()
    return ScoreTable(land.grid, val, test)


# ---------------------------------------------------------------------------
# file I/O

CSV_FIXED_COLUMNS = ("fold", "val", "test")


def _manifest_path(path: Path) -> Path:
    return path.with_suffix("").with_suffix(".manifest.json")


def save_table(table: ScoreTable, path, fmt: str | None = None) -> None:
    """Write a table as CSV (plus sibling grid manifest) or as JSON."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    spec = table.spec
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [f"i_{j + 1}" for j in range(spec.dim)] + list(CSV_FIXED_COLUMNS)
            )
            for k in range(spec.size):
                coords = spec.from_linear(k)
                for fold in range(1, table.n_folds + 1):
                    writer.writerow(
                        list(coords)
                        + [fold, repr(float(table._val[k, fold - 1])),
                           repr(float(table._test[k, fold - 1]))]
                    )
        spec.save_manifest(_manifest_path(path))
    elif fmt == "json":
        rows = [
            {
                "coords": list(spec.from_linear(k)),
                "fold": fold,
                "val": table._val[k, fold - 1],
                "test": table._test[k, fold - 1],
            }
            for k in range(spec.size)
            for fold in range(1, table.n_folds + 1)
        ]
        doc = {"manifest": spec.to_manifest(), "K": table.n_folds, "rows": rows}
        with open(path, "w") as fh:
            json.dump(doc, fh)
            fh.write("\n")
    else:
        raise TableError(f"unknown table format {fmt!r}")


def _assemble(
    spec: GridSpec, n_folds: int, cells: dict[tuple[int, int], tuple[float, float]]
) -> ScoreTable:
    val = np.full((spec.size, n_folds), np.nan)
    test = np.full((spec.size, n_folds), np.nan)
    for (k, fold), (v, t) in cells.items():
        val[k, fold - 1] = v
        test[k, fold - 1] = t
    missing = np.argwhere(np.isnan(val))
    if missing.size:
        k, fold = missing[0]
        coords = spec.from_linear(int(k))
        raise CompletenessError(
            f"missing score for arm {coords}, fold {int(fold) + 1}"
        )
    return ScoreTable(spec, val, test)


def _parse_score(text, where: str) -> float:
    try:
        x = float(text)
    except (TypeError, ValueError) as exc:
        raise TableError(f"bad score {text!r} at {where}") from exc
    if not math.isfinite(x):
        raise TableError(f"non-finite score {text!r} at {where}")
    return x


def load_table(
    path,
    fmt: str | None = None,
    manifest=None,
    minimize: bool = False,
) -> ScoreTable:
    """Load a table from CSV (grid manifest alongside) or JSON.

    ``minimize=True`` negates both score columns on ingestion so that the
    in-memory orientation is always higher-is-better.
    """
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    sign = -1.0 if minimize else 1.0
    cells: dict[tuple[int, int], tuple[float, float]] = {}
    if fmt == "csv":
        spec = GridSpec.load_manifest(manifest or _manifest_path(path))
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            expected = [f"i_{j + 1}" for j in range(spec.dim)] + list(CSV_FIXED_COLUMNS)
            if reader.fieldnames != expected:
                raise TableError(
                    f"bad CSV header {reader.fieldnames}; expected {expected}"
                )
            folds = 0
            for i, row in enumerate(reader, start=2):
                coords = tuple(int(row[f"i_{j + 1}"]) for j in range(spec.dim))
                k = spec.to_linear(coords)
                fold = int(row["fold"])
                if fold < 1:
                    raise TableError(f"fold must be >= 1 at line {i}")
                folds = max(folds, fold)
                where = f"{path}:{i}"
                cells[(k, fold)] = (
                    sign * _parse_score(row["val"], where),
                    sign * _parse_score(row["test"], where),
                )
        if folds == 0:
            raise TableError(f"{path}: no score rows")
        return _assemble(spec, folds, cells)
    if fmt == "json":
        with open(path) as fh:
            doc = json.load(fh)
        spec = GridSpec.from_manifest(doc["manifest"])
        n_folds = int(doc["K"])
        for row in doc["rows"]:
            k = spec.to_linear(row["coords"])
            fold = int(row["fold"])
            where = f"{path} coords={row['coords']} fold={fold}"
            cells[(k, fold)] = (
                sign * _parse_score(row["val"], where),
                sign * _parse_score(row["test"], where),
            )
        return _assemble(spec, n_folds, cells)
    raise TableError(f"unknown table format {fmt!r}")
