"""Redistribution of distributed tensors between two distributions.

Two patterns are supported:

* identity (after ignoring grid modes of size 1): nothing moves;
* a single grid mode ``q`` moves from one tensor mode to another, being the
  last (slowest) grid mode of its group on both sides. Every element then
  stays inside its fibre along grid mode ``q``, so the change is one
  all-to-all on the grid-mode-``q`` sub-communicator.

Packing orders elements by destination rank, and within a destination by the
destination's local column-major offset. Unpacking writes each received
buffer straight into the destination positions, so the local transposition
that a block transpose implies happens during the unpack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distribution import (
    DistTensor,
    Grid,
    TensorDistribution,
    _as_dist,
    check_distribution,
    global_indices,
    local_shape,
    owners,
)
from .errors import SizeMismatch, UnsupportedRedist
from .tensor import DTYPE, flat, from_flat

__all__ = ["RedistPlan", "plan_redist", "pack", "unpack", "execute_redist"]

LOCAL = "local-only"
ALL_TO_ALL = "all-to-all-over-mode"


@dataclass(frozen=True)
class RedistPlan:
    kind: str
    comm_mode: int | None
    src: TensorDistribution
    dst: TensorDistribution
    grid: Grid
    global_shape: tuple[int, ...]

    @property
    def collectives(self) -> int:
        return 0 if self.kind == LOCAL else 1


def _drop_trivial(dist: TensorDistribution, grid: Grid) -> TensorDistribution:
    def keep(q):
        return q >= grid.order or grid.shape[q] > 1

    return TensorDistribution(tuple(tuple(q for q in group if keep(q)) for group in dist))


def _without(dist: TensorDistribution, q: int) -> TensorDistribution:
    return TensorDistribution(tuple(tuple(x for x in group if x != q) for group in dist))


def plan_redist(src, dst, grid: Grid, global_shape: Sequence[int]) -> RedistPlan:
    """Classify the change from ``src`` to ``dst``."""
    src, dst = _as_dist(src), _as_dist(dst)
    global_shape = tuple(global_shape)
    if src.order != dst.order:
        raise UnsupportedRedist(f"{src} and {dst} have different orders")
    a, b = _drop_trivial(src, grid), _drop_trivial(dst, grid)
    if a == b:
        kind, q = LOCAL, None
    else:
        moved = sorted(q for q in a.grid_modes() | b.grid_modes() if a.mode_of(q) != b.mode_of(q))
        if len(moved) != 1:
            raise UnsupportedRedist(f"{src} -> {dst} changes grid modes {moved}; only one grid mode may move")
        q = moved[0]
        ma, mb = a.mode_of(q), b.mode_of(q)
        if ma is None or mb is None:
            raise UnsupportedRedist(f"{src} -> {dst} adds or removes grid mode {q}")
        if a[ma][-1] != q or b[mb][-1] != q or _without(a, q) != _without(b, q):
            raise UnsupportedRedist(f"{src} -> {dst} is not a single all-to-all over grid mode {q}")
        kind = ALL_TO_ALL
    check_distribution(global_shape, src, grid)
    check_distribution(global_shape, dst, grid)
    return RedistPlan(kind, q, src, dst, grid, global_shape)


def _owner_maps(plan: RedistPlan, have: TensorDistribution, want: TensorDistribution, rank: int):
    """For every local element under ``have``: owning rank and local offset under ``want`` (flat, column-major)."""
    shape = plan.global_shape
    idx = global_indices(shape, have, plan.grid, rank)
    want_local = local_shape(shape, want, plan.grid)
    order = len(shape)
    rank_map = np.zeros((1,) * order, dtype=np.int64)
    off_map = np.zeros((1,) * order, dtype=np.int64)
    stride = 1
    for m in range(order):
        part, loc = owners(want, plan.grid, m, idx[m])
        bshape = [1] * order
        bshape[m] = idx[m].size
        rank_map = rank_map + part.reshape(bshape)
        off_map = off_map + (loc * stride).reshape(bshape)
        stride *= want_local[m]
    full = tuple(i.size for i in idx)
    return (
        np.ravel(np.broadcast_to(rank_map, full), order="F"),
        np.ravel(np.broadcast_to(off_map, full), order="F"),
    )


def _fibre_index(plan: RedistPlan, ranks: np.ndarray, my_rank: int) -> np.ndarray:
    q = plan.comm_mode
    stride = plan.grid.strides()[q]
    coord = (ranks // stride) % plan.grid.shape[q]
    mine = my_rank - plan.grid.coords(my_rank)[q] * stride
    if np.any(ranks - coord * stride != mine):
        raise UnsupportedRedist("plan moves data outside the grid-mode fibre")
    return coord


def pack(local: np.ndarray, plan: RedistPlan, my_rank: int) -> list[np.ndarray]:
    """Group local elements by destination (fibre rank order)."""
    if plan.kind != ALL_TO_ALL:
        raise UnsupportedRedist("pack needs an all-to-all plan")
    expected = local_shape(plan.global_shape, plan.src, plan.grid)
    if tuple(local.shape) != expected:
        raise SizeMismatch(f"local shape {local.shape} != {expected}")
    dest_rank, dest_off = _owner_maps(plan, plan.src, plan.dst, my_rank)
    dest = _fibre_index(plan, dest_rank, my_rank)
    order = np.lexsort((dest_off, dest))
    data = flat(local)[order]
    counts = np.bincount(dest, minlength=plan.grid.shape[plan.comm_mode])
    return [np.ascontiguousarray(b) for b in np.split(data, np.cumsum(counts)[:-1])]


def unpack(received: Sequence[np.ndarray], plan: RedistPlan, my_rank: int) -> np.ndarray:
    """Assemble the new local tensor from buffers ordered by source fibre rank."""
    if plan.kind != ALL_TO_ALL:
        raise UnsupportedRedist("unpack needs an all-to-all plan")
    size = plan.grid.shape[plan.comm_mode]
    if len(received) != size:
        raise SizeMismatch(f"expected {size} buffers, got {len(received)}")
    src_rank, _ = _owner_maps(plan, plan.dst, plan.src, my_rank)
    src = _fibre_index(plan, src_rank, my_rank)
    shape = local_shape(plan.global_shape, plan.dst, plan.grid)
    out = np.empty(src.size, dtype=DTYPE)
    for s in range(size):
        positions = np.flatnonzero(src == s)
        buf = np.asarray(received[s]).reshape(-1)
        if buf.size != positions.size:
            raise SizeMismatch(f"buffer from fibre rank {s} has {buf.size} elements, expected {positions.size}")
        out[positions] = buf
    return from_flat(out, shape)


def execute_redist(dt: DistTensor, dst, comm, label: str | None = None) -> DistTensor:
    """Redistribute ``dt`` to ``dst``; ``comm`` is the rank's world communicator."""
    plan = plan_redist(dt.dist, dst, dt.grid, dt.global_shape)
    if plan.kind == LOCAL:
        return dt.with_local(dt.local, dist=plan.dst)
    sub = comm.split(plan.comm_mode)
    recv = sub.all_to_all(pack(dt.local, plan, dt.rank), label=label)
    return dt.with_local(unpack(recv, plan, dt.rank), dist=plan.dst)
