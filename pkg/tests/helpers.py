"""Small builders shared by the test modules."""

import numpy as np

from netslice.grid import ResourceMask, build_grid
from netslice.radio import ChannelState, Flow, FullBuffer


def se_channel(ue_ids, se_by_ue_rb, node="n0"):
    """Channel with one node and per-UE per-RB spectral efficiency."""
    se = np.asarray(se_by_ue_rb, dtype=float)[:, None, :]
    return ChannelState.from_se(list(ue_ids), [node], se)


def fb_flows(ue_ids, backlog=1e12):
    return [Flow(f"{u}.f0", u, FullBuffer(), full_buffer_bits=backlog) for u in ue_ids]


def whole_mask(grid, slice_id="s", window=0):
    return ResourceMask(slice_id, frozenset(grid.cells()), window)


def one_row_grid(n_cells):
    return build_grid(n_cells, 1)
