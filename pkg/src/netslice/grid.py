"""Shared time-frequency grid, tiling and per-slice resource masks.

A grid cell is one resource block over one slot of a scheduling window.
Cells are addressed as ``(slot, rb)`` pairs; the flat index used by the
numeric kernels is ``slot * n_rb + rb`` so that flat order equals the
lexicographic ``(slot, rb)`` order used for every tie-break.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

Cell = tuple[int, int]


class GridError(ValueError):
    """Raised for malformed grids, tilings or masks."""


class OverlapError(GridError):
    pass


class GapError(GridError):
    pass


class OutOfBoundsError(GridError):
    pass


@dataclass(frozen=True)
class Numerology:
    id: int
    cell_duration_ms: float
    cell_bandwidth_rb: int
    symbols_per_cell: int

    def __post_init__(self):
        if self.cell_duration_ms <= 0:
            raise GridError(f"numerology {self.id}: cell_duration_ms must be > 0")
        if self.cell_bandwidth_rb < 1 or self.symbols_per_cell < 1:
            raise GridError(f"numerology {self.id}: bandwidth and symbols must be >= 1")


def numerology_table(numerologies: Iterable[Numerology]) -> dict[int, Numerology]:
    """Index numerologies by id; equal ids must carry identical fields."""
    table: dict[int, Numerology] = {}
    for num in numerologies:
        prev = table.get(num.id)
        if prev is not None and prev != num:
            raise GridError(f"numerology id {num.id} defined twice with different fields")
        table[num.id] = num
    return table


@dataclass(frozen=True)
class ResourceGrid:
    n_rb: int
    slots_per_window: int
    window_ms: float = 10.0

    @property
    def n_cells(self) -> int:
        return self.n_rb * self.slots_per_window

    @property
    def slot_ms(self) -> float:
        return self.window_ms / self.slots_per_window

    def contains(self, cell: Cell) -> bool:
        slot, rb = cell
        return 0 <= slot < self.slots_per_window and 0 <= rb < self.n_rb

    def flat(self, cell: Cell) -> int:
        return cell[0] * self.n_rb + cell[1]

    def unflat(self, index: int) -> Cell:
        return divmod(int(index), self.n_rb)

    def cells(self) -> list[Cell]:
        return [(s, r) for s in range(self.slots_per_window) for r in range(self.n_rb)]


def build_grid(n_rb: int, slots_per_window: int, window_ms: float = 10.0) -> ResourceGrid:
    if n_rb < 1 or slots_per_window < 1:
        raise GridError(f"grid dimensions must be positive, got n_rb={n_rb}, slots={slots_per_window}")
    if window_ms <= 0:
        raise GridError("window_ms must be positive")
    return ResourceGrid(int(n_rb), int(slots_per_window), float(window_ms))


@dataclass(frozen=True)
class Tile:
    id: str
    rb_range: tuple[int, int]
    slot_range: tuple[int, int]
    numerology: int

    def cells(self) -> list[Cell]:
        return [
            (s, r)
            for s in range(*self.slot_range)
            for r in range(*self.rb_range)
        ]


@dataclass(frozen=True)
class Tiling:
    grid: ResourceGrid
    tiles: tuple[Tile, ...]
    # flat cell index -> position of the owning tile in ``tiles``
    owner: np.ndarray = field(repr=False, compare=False)

    def tile_of(self, cell: Cell) -> Tile:
        return self.tiles[int(self.owner[self.grid.flat(cell)])]

    def numerology_cells(self, numerology: int) -> np.ndarray:
        """Boolean flat-cell vector of cells whose tile carries ``numerology``."""
        nums = np.array([t.numerology for t in self.tiles])
        return nums[self.owner] == numerology


def _check_range(name: str, lo_hi: Sequence[int], upper: int, tile_id) -> tuple[int, int]:
    lo, hi = int(lo_hi[0]), int(lo_hi[1])
    if not (0 <= lo < hi <= upper):
        raise OutOfBoundsError(f"tile {tile_id}: {name} [{lo}, {hi}) outside [0, {upper})")
    return lo, hi


def carve_tiles(grid: ResourceGrid, specs: Iterable[Tile | Mapping]) -> Tiling:
    """Validate that ``specs`` form an exact cover of ``grid``.

    Specs may be :class:`Tile` objects or mappings with keys ``id``, ``rb``,
    ``slot`` and ``numerology``.
    """
    tiles = []
    for spec in specs:
        if not isinstance(spec, Tile):
            spec = Tile(
                id=str(spec["id"]),
                rb_range=tuple(spec["rb"]),
                slot_range=tuple(spec["slot"]),
                numerology=int(spec.get("numerology", 0)),
            )
        rb = _check_range("rb_range", spec.rb_range, grid.n_rb, spec.id)
        slot = _check_range("slot_range", spec.slot_range, grid.slots_per_window, spec.id)
        tiles.append(Tile(spec.id, rb, slot, spec.numerology))

    owner = np.full((grid.slots_per_window, grid.n_rb), -1, dtype=np.int64)
    for i, tile in enumerate(tiles):
        region = owner[tile.slot_range[0]:tile.slot_range[1], tile.rb_range[0]:tile.rb_range[1]]
        taken = np.argwhere(region >= 0)
        if taken.size:
            s, r = taken[0]
            cell = (int(s) + tile.slot_range[0], int(r) + tile.rb_range[0])
            other = tiles[region[tuple(taken[0])]].id
            raise OverlapError(f"tiles {other} and {tile.id} both contain cell {cell}")
        region[...] = i
    gaps = np.argwhere(owner < 0)
    if gaps.size:
        raise GapError(f"{len(gaps)} cells not covered by any tile, first {tuple(int(v) for v in gaps[0])}")
    return Tiling(grid, tuple(tiles), owner.reshape(-1))


def whole_grid_tiling(grid: ResourceGrid, numerology: int = 0) -> Tiling:
    return carve_tiles(grid, [Tile("t0", (0, grid.n_rb), (0, grid.slots_per_window), numerology)])


@dataclass(frozen=True)
class ResourceMask:
    slice_id: str
    cells: frozenset
    window_index: int = 0

    def __len__(self):
        return len(self.cells)

    def sorted_cells(self) -> list[Cell]:
        return sorted(self.cells)

    def check_bounds(self, grid: ResourceGrid) -> None:
        for cell in self.cells:
            if not grid.contains(cell):
                raise OutOfBoundsError(f"mask of {self.slice_id} has cell {cell} outside the grid")


def mask_from_flat(slice_id: str, grid: ResourceGrid, flat: Iterable[int], window_index: int = 0) -> ResourceMask:
    return ResourceMask(slice_id, frozenset(grid.unflat(i) for i in flat), window_index)


def mask_capacity(mask: ResourceMask, channel, ue, symbols_per_cell: int) -> float:
    """Bits the cells of ``mask`` can carry for ``ue`` on its primary serving node.

    ``channel`` is a :class:`netslice.radio.ChannelState`; a missing entry
    raises ``KeyError``.
    """
    if not mask.cells:
        return 0.0
    node = ue.serving[0]
    total = 0.0
    for slot, rb in sorted(mask.cells):
        total += channel.spectral_efficiency(ue.id, node, rb) * symbols_per_cell
    return total


def masks_disjoint(masks: Sequence[ResourceMask]) -> bool:
    if not masks:
        return True
    windows = {m.window_index for m in masks}
    if len(windows) > 1:
        raise GridError(f"masks span several windows: {sorted(windows)}")
    seen: set = set()
    for mask in masks:
        if seen & mask.cells:
            return False
        seen |= mask.cells
    return True
