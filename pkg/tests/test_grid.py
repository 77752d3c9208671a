import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridarena.grid import GridError, GridSpec


def make_spec(*sizes):
    return GridSpec(tuple((f"ax{j}", tuple(range(n))) for j, n in enumerate(sizes)))


def test_linearization_examples():
    spec = make_spec(9, 7)
    assert spec.to_linear((1, 1)) == 0
    assert spec.to_linear((9, 7)) == 62
    assert spec.to_linear((2, 3)) == (2 - 1) * 7 + (3 - 1)


def test_from_linear_examples():
    spec = make_spec(9, 7)
    assert spec.from_linear(0) == (1, 1)
    assert spec.from_linear(62) == (9, 7)
    assert spec.from_linear(9) == (2, 3)


def test_out_of_range_coordinate_names_axis():
    spec = make_spec(9, 7)
    with pytest.raises(GridError, match="ax1"):
        spec.to_linear((1, 8))
    with pytest.raises(GridError):
        spec.from_linear(63)
    with pytest.raises(GridError):
        spec.from_linear(-1)


def test_neighbors_examples():
    spec = make_spec(3, 3)
    assert spec.neighbors((1, 1)) == [(2, 1), (1, 2)]
    assert spec.neighbors((2, 2)) == [(1, 2), (3, 2), (2, 1), (2, 3)]
    assert make_spec(2, 4).neighbors((1, 4)) == [(2, 4), (1, 3)]


def test_invalid_specs():
    with pytest.raises(GridError):
        GridSpec(())
    with pytest.raises(GridError):
        GridSpec((("a", ()),))
    with pytest.raises(GridError):
        GridSpec((("a", (1, 1)),))


sizes_strategy = st.lists(st.integers(1, 10), min_size=1, max_size=4).filter(
    lambda s: 1 <= len(s) <= 4 and __import__("math").prod(s) <= 10**4
)


@given(sizes_strategy)
@settings(max_examples=30, deadline=None)
def test_bijection(sizes):
    spec = make_spec(*sizes)
    for k in range(spec.size):
        assert spec.to_linear(spec.from_linear(k)) == k


@given(sizes_strategy, st.integers(0, 10**9))
@settings(max_examples=30, deadline=None)
def test_neighbor_symmetry_and_count(sizes, pick):
    spec = make_spec(*sizes)
    a = spec.from_linear(pick % spec.size)
    nbrs = spec.neighbors(a)
    assert len(nbrs) <= 2 * spec.dim
    interior = all(1 < c < n for c, n in zip(a, spec.sizes))
    if interior:
        assert len(nbrs) == 2 * spec.dim
    for b in nbrs:
        assert a in spec.neighbors(b)


def test_manifest_round_trip(tmp_path):
    spec = GridSpec((("lr", (0.1, 0.3, 1.0)), ("depth", (2, 5))))
    path = tmp_path / "grid.manifest.json"
    spec.save_manifest(path)
    assert GridSpec.load_manifest(path) == spec


def test_values_at():
    spec = GridSpec((("lr", (0.1, 0.3, 1.0)), ("depth", (2, 5))))
    assert spec.values_at((2, 1)) == (0.3, 2)
