"""Integer-grid arithmetic: arm coordinates, linearization, neighborhoods.

The search space is a finite Cartesian grid of discretized hyperparameter
values. An *arm* is one cell of that grid, addressed by 1-based coordinates
(one per axis). Internally arms are also keyed by a 0-based row-major linear
index, last axis fastest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

Arm = tuple[int, ...]

MAX_GRID_SIZE = 10**6


class GridError(ValueError):
    """A coordinate or linear key falls outside the grid."""


@dataclass(frozen=True)
class GridSpec:
    """An ordered list of named axes, each carrying its discrete value labels.

    Coordinates are 1-based: axis j admits coordinates 1..N_j where N_j is
    the number of value labels on that axis.
    """

    axes: tuple[tuple[str, tuple[Any, ...]], ...]

    def __post_init__(self) -> None:
        if not self.axes:
            raise GridError("grid needs at least one axis")
        # normalize nested lists coming from JSON into hashable tuples
        norm = tuple((str(name), tuple(values)) for name, values in self.axes)
        object.__setattr__(self, "axes", norm)
        for name, values in self.axes:
            if len(values) < 1:
                raise GridError(f"axis {name!r} has no values")
            if len(set(map(repr, values))) != len(values):
                raise GridError(f"axis {name!r} has duplicate value labels")
        if self.size > MAX_GRID_SIZE:
            raise GridError(f"grid size {self.size} exceeds {MAX_GRID_SIZE}")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(values) for _, values in self.axes)

    @property
    def size(self) -> int:
        return math.prod(self.sizes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.axes)

    def validate_arm(self, coords: Sequence[int]) -> Arm:
        coords = tuple(int(c) for c in coords)
        if len(coords) != self.dim:
            raise GridError(
                f"arm has {len(coords)} coordinates, grid has {self.dim} axes"
            )
        for j, (c, n) in enumerate(zip(coords, self.sizes)):
            if not 1 <= c <= n:
                raise GridError(
                    f"coordinate {c} out of range [1, {n}] on axis {self.names[j]!r}"
                )
        return coords

    def to_linear(self, coords: Sequence[int]) -> int:
        """Row-major linear index in [0, N), last axis fastest."""
        coords = self.validate_arm(coords)
        k = 0
        for c, n in zip(coords, self.sizes):
            k = k * n + (c - 1)
        return k

    def from_linear(self, k: int) -> Arm:
        """Inverse of :meth:`to_linear`."""
        k = int(k)
        if not 0 <= k < self.size:
            raise GridError(f"linear index {k} out of range [0, {self.size})")
        coords = []
        for n in reversed(self.sizes):
            coords.append(k % n + 1)
            k //= n
        return tuple(reversed(coords))

    def neighbors(self, coords: Sequence[int]) -> list[Arm]:
        """Arms differing by +-1 in exactly one coordinate.

        Deterministic order: axis-major, -1 before +1. Boundary coordinates
        yield fewer neighbors.
        """
        coords = self.validate_arm(coords)
        out: list[Arm] = []
        for j, n in enumerate(self.sizes):
            for delta in (-1, +1):
                c = coords[j] + delta
                if 1 <= c <= n:
                    out.append(coords[:j] + (c,) + coords[j + 1 :])
        return out

    def values_at(self, coords: Sequence[int]) -> tuple[Any, ...]:
        """The hyperparameter value labels addressed by an arm."""
        coords = self.validate_arm(coords)
        return tuple(values[c - 1] for c, (_, values) in zip(coords, self.axes))

    def arms(self) -> Iterator[Arm]:
        """All arms in linear-index order."""
        for k in range(self.size):
            yield self.from_linear(k)

    # -- manifest JSON ------------------------------------------------------

    def to_manifest(self) -> dict:
        return {
            "axes": [{"name": name, "values": list(values)} for name, values in self.axes]
        }

    @classmethod
    def from_manifest(cls, manifest: dict) -> "GridSpec":
        try:
            axes = tuple(
                (ax["name"], tuple(ax["values"])) for ax in manifest["axes"]
            )
        except (KeyError, TypeError) as exc:
            raise GridError(f"malformed grid manifest: {exc}") from exc
        return cls(axes)

    def save_manifest(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_manifest(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load_manifest(cls, path) -> "GridSpec":
        with open(path) as fh:
            return cls.from_manifest(json.load(fh))
