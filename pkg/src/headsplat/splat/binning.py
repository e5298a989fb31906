"""Primitive-to-tile assignment and depth ordering.

Each primitive lands in every tile its screen-space support rectangle
overlaps. Pairs are sorted by (tile, depth, primitive id); the id tiebreak
makes the compositing order, and therefore the render, fully reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass
class TileBins:
    tile_size: int
    tiles_x: int
    tiles_y: int
    starts: np.ndarray  # (tiles,) first pair index per tile
    ends: np.ndarray  # (tiles,) one past the last pair
    prim: np.ndarray  # (pairs,) primitive id per pair, compositing order

    @property
    def num_pairs(self) -> int:
        return int(self.prim.shape[0])


@njit(cache=True)
def _expand(x0, x1, y0, y1, offsets, tiles_x, tile_ids, prim_ids):
    n = x0.shape[0]
    for p in range(n):
        k = offsets[p]
        for ty in range(y0[p], y1[p] + 1):
            base = ty * tiles_x
            for tx in range(x0[p], x1[p] + 1):
                tile_ids[k] = base + tx
                prim_ids[k] = p
                k += 1


def tile_bins(
    uv: np.ndarray,
    depth: np.ndarray,
    radius: np.ndarray,
    width: int,
    height: int,
    tile_size: int,
    active: np.ndarray | None = None,
) -> TileBins:
    tiles_x = (width + tile_size - 1) // tile_size
    tiles_y = (height + tile_size - 1) // tile_size
    u, v = uv[:, 0], uv[:, 1]

    inside = (
        (u + radius >= 0.0)
        & (u - radius < float(width))
        & (v + radius >= 0.0)
        & (v - radius < float(height))
        & (radius > 0.0)
    )
    if active is not None:
        inside &= active

    x0 = np.clip(np.floor((u - radius) / tile_size), 0, tiles_x - 1).astype(np.int64)
    x1 = np.clip(np.floor((u + radius) / tile_size), 0, tiles_x - 1).astype(np.int64)
    y0 = np.clip(np.floor((v - radius) / tile_size), 0, tiles_y - 1).astype(np.int64)
    y1 = np.clip(np.floor((v + radius) / tile_size), 0, tiles_y - 1).astype(np.int64)

    counts = np.where(inside, (x1 - x0 + 1) * (y1 - y0 + 1), 0)
    offsets = np.zeros_like(counts)
    np.cumsum(counts[:-1], out=offsets[1:])
    total = int(counts.sum())

    tile_ids = np.empty(total, dtype=np.int64)
    prim_ids = np.empty(total, dtype=np.int64)
    if total:
        keep = inside
        _expand(
            np.where(keep, x0, 0),
            np.where(keep, x1, -1),
            np.where(keep, y0, 0),
            np.where(keep, y1, -1),
            offsets,
            tiles_x,
            tile_ids,
            prim_ids,
        )

    order = np.lexsort((prim_ids, depth[prim_ids], tile_ids))
    sorted_tiles = tile_ids[order]
    sorted_prims = prim_ids[order]

    grid = np.arange(tiles_x * tiles_y, dtype=np.int64)
    starts = np.searchsorted(sorted_tiles, grid, side="left")
    ends = np.searchsorted(sorted_tiles, grid, side="right")
    return TileBins(
        tile_size=tile_size,
        tiles_x=tiles_x,
        tiles_y=tiles_y,
        starts=starts,
        ends=ends,
        prim=sorted_prims,
    )
