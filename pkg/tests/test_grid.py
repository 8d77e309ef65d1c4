import numpy as np
import pytest
from hypothesis import given, strategies as st

from netslice.grid import (GapError, GridError, OutOfBoundsError, OverlapError, ResourceMask, Tile,
                           build_grid, carve_tiles, mask_capacity, masks_disjoint, numerology_table, Numerology,
                           whole_grid_tiling)
from netslice.radio import ChannelState, Ue


def test_build_grid_sizes():
    assert build_grid(1, 1).n_cells == 1
    assert build_grid(50, 10).n_cells == 500
    with pytest.raises(GridError):
        build_grid(0, 10)


def test_flat_index_is_lexicographic():
    g = build_grid(3, 2)
    flats = [g.flat(c) for c in sorted(g.cells())]
    assert flats == list(range(g.n_cells))
    assert all(g.unflat(g.flat(c)) == c for c in g.cells())


def test_carve_tiles_examples():
    g = build_grid(2, 3)
    assert len(whole_grid_tiling(g).tiles) == 1
    t = carve_tiles(g, [Tile("l", (0, 1), (0, 3), 0), Tile("r", (1, 2), (0, 3), 1)])
    assert t.tile_of((2, 1)).id == "r"
    with pytest.raises(OverlapError):
        carve_tiles(g, [Tile("a", (0, 2), (0, 1), 0), Tile("b", (0, 1), (0, 3), 0)])
    with pytest.raises(GapError):
        carve_tiles(g, [Tile("a", (0, 1), (0, 3), 0)])
    with pytest.raises(OutOfBoundsError):
        carve_tiles(g, [{"id": "a", "rb": [0, 3], "slot": [0, 3]}])


def test_numerology_table_rejects_conflicting_ids():
    a = Numerology(0, 1.0, 1, 168)
    assert numerology_table([a, a]) == {0: a}
    with pytest.raises(GridError):
        numerology_table([a, Numerology(0, 0.5, 1, 168)])
    with pytest.raises(GridError):
        Numerology(1, 0.0, 1, 1)


@st.composite
def tile_specs(draw):
    n_rb = draw(st.integers(1, 4))
    slots = draw(st.integers(1, 4))
    specs = []
    for i in range(draw(st.integers(1, 5))):
        r0 = draw(st.integers(0, n_rb - 1))
        s0 = draw(st.integers(0, slots - 1))
        specs.append(Tile(f"t{i}", (r0, draw(st.integers(r0 + 1, n_rb))),
                          (s0, draw(st.integers(s0 + 1, slots))), 0))
    return build_grid(n_rb, slots), specs


@given(tile_specs())
def test_tiling_accepted_iff_exact_cover(case):
    grid, specs = case
    count = np.zeros((grid.slots_per_window, grid.n_rb), dtype=int)
    for t in specs:
        count[t.slot_range[0]:t.slot_range[1], t.rb_range[0]:t.rb_range[1]] += 1
    exact = bool((count == 1).all())
    try:
        tiling = carve_tiles(grid, specs)
        accepted = True
    except (OverlapError, GapError):
        accepted = False
    assert accepted == exact
    if accepted:
        assert sorted(c for t in tiling.tiles for c in t.cells()) == sorted(grid.cells())


def _channel(se_by_rb):
    se = np.array(se_by_rb, dtype=float).reshape(1, 1, -1)
    return ChannelState.from_se(["u"], ["n"], se)


def test_mask_capacity_examples():
    ue = Ue("u", "s", (0.0, 0.0), serving=["n"])
    ch = _channel([2.0, 2.0, 2.0])
    assert mask_capacity(ResourceMask("s", frozenset()), ch, ue, 168) == 0
    assert mask_capacity(ResourceMask("s", frozenset({(0, 0), (0, 1), (1, 2)})), ch, ue, 168) == 1008
    mixed = _channel([1.0, 4.0])
    assert mask_capacity(ResourceMask("s", frozenset({(0, 0), (0, 1)})), mixed, ue, 168) == 840


@given(st.lists(st.sampled_from([0.5, 1.0, 2.0, 3.5, 6.0]), min_size=4, max_size=4),
       st.sets(st.tuples(st.integers(0, 2), st.integers(0, 3))), st.sets(st.tuples(st.integers(0, 2), st.integers(0, 3))))
def test_mask_capacity_additive(se, a, b):
    ue = Ue("u", "s", (0.0, 0.0), serving=["n"])
    ch = _channel(se)
    b = b - a
    cap = lambda cells: mask_capacity(ResourceMask("s", frozenset(cells)), ch, ue, 168)  # noqa: E731
    assert cap(a | b) == pytest.approx(cap(a) + cap(b), rel=1e-12)


def test_masks_disjoint_examples():
    assert masks_disjoint([])
    assert masks_disjoint([ResourceMask("a", frozenset({(0, 0)})), ResourceMask("b", frozenset({(0, 1)}))])
    assert not masks_disjoint([ResourceMask("a", frozenset({(0, 0), (0, 1)})), ResourceMask("b", frozenset({(0, 1)}))])
    with pytest.raises(GridError):
        masks_disjoint([ResourceMask("a", frozenset(), 0), ResourceMask("b", frozenset(), 1)])
