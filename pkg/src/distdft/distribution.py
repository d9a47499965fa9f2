"""Processor grids, distribution notation and the global/local index algebra.

A distribution assigns to every tensor mode an ordered (possibly empty) tuple
of grid modes, written ``[(0),(),(1,2)]``. A tensor mode of size ``n`` mapped
to grid modes with combined size ``g`` is distributed elemental-cyclically:
global index ``i`` lives on combined grid coordinate ``i % g`` at local index
``i // g``. The combined coordinate is split over the listed grid modes in
column-major order (first listed grid mode varies fastest).

Blocked layouts are obtained by splitting a mode first (``tensor.split_mode``)
and distributing the outer mode: each rank then receives contiguous blocks of
``inner`` elements, dealt out cyclically.

Every grid mode of size > 1 must be used by the distribution; replicated
layouts are not modelled, so every global element has exactly one owner.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DistributionError,
    IndexOutOfBounds,
    InvalidMode,
    InvalidPermutation,
    ParseError,
    ShapeMismatch,
)
from .tensor import DTYPE, flat, from_flat, linearize, transpose

__all__ = [
    "Grid",
    "TensorDistribution",
    "DistTensor",
    "parse_dist",
    "format_dist",
    "check_distribution",
    "owner_of",
    "local_shape",
    "global_indices",
    "scatter_global",
    "gather_global",
    "dist_split_mode",
    "dist_merge_modes",
    "dist_transpose",
    "layout_permutation",
]


@dataclass(frozen=True)
class Grid:
    """A d-dimensional processor mesh; ranks are numbered column-major."""

    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if not shape or any(s < 1 for s in shape):
            raise ShapeMismatch(f"grid sizes must be >= 1, got {self.shape}")
        object.__setattr__(self, "shape", shape)

    @property
    def order(self) -> int:
        return len(self.shape)

    @property
    def p(self) -> int:
        return int(np.prod(self.shape))

    def strides(self) -> tuple[int, ...]:
        out, s = [], 1
        for n in self.shape:
            out.append(s)
            s *= n
        return tuple(out)

    def coords(self, rank: int) -> tuple[int, ...]:
        if not 0 <= rank < self.p:
            raise IndexOutOfBounds(f"rank {rank} outside grid {self.shape}")
        out = []
        for n in self.shape:
            rank, c = divmod(rank, n)
            out.append(c)
        return tuple(out)

    def rank_of(self, coords: Sequence[int]) -> int:
        return linearize(coords, self.shape)

    def __str__(self):
        return "(" + ",".join(map(str, self.shape)) + ")"


@dataclass(frozen=True)
class TensorDistribution:
    """Per-tensor-mode tuples of grid modes."""

    modes: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        modes = tuple(tuple(int(q) for q in m) for m in self.modes)
        used = [q for m in modes for q in m]
        if any(q < 0 for q in used):
            raise DistributionError(f"negative grid mode in {modes}")
        if len(used) != len(set(used)):
            raise DistributionError(f"a grid mode appears more than once in {format_dist(modes)}")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def parse(cls, text: str) -> "TensorDistribution":
        return parse_dist(text)

    @classmethod
    def undistributed(cls, order: int) -> "TensorDistribution":
        return cls(((),) * order)

    @property
    def order(self) -> int:
        return len(self.modes)

    def __len__(self):
        return len(self.modes)

    def __getitem__(self, mode: int) -> tuple[int, ...]:
        return self.modes[mode]

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return iter(self.modes)

    def __str__(self):
        return format_dist(self.modes)

    def grid_modes(self) -> set[int]:
        return {q for m in self.modes for q in m}

    def mode_of(self, grid_mode: int) -> int | None:
        """Tensor mode carrying ``grid_mode``, or None."""
        for m, group in enumerate(self.modes):
            if grid_mode in group:
                return m
        return None

    def group_size(self, mode: int, grid: Grid) -> int:
        return int(np.prod([grid.shape[q] for q in self.modes[mode]], dtype=np.int64))


_GROUP = re.compile(r"\(\s*(\d+(?:\s*,\s*\d+)*)?\s*\)")


def parse_dist(text: str) -> TensorDistribution:
    """Parse bracket notation such as ``"[(0),()]"`` or ``"[()(0)]"``."""
    s = text.strip()
    offset = len(text) - len(text.lstrip())
    if not s.startswith("["):
        raise ParseError("expected '['", text, offset)
    pos = 1
    groups = []
    while True:
        while pos < len(s) and s[pos].isspace():
            pos += 1
        if pos >= len(s):
            raise ParseError("missing ']'", text, offset + pos)
        if s[pos] == "]":
            break
        if groups and s[pos] == ",":
            pos += 1
            while pos < len(s) and s[pos].isspace():
                pos += 1
        m = _GROUP.match(s, pos)
        if m is None:
            raise ParseError("expected a '(...)' group", text, offset + pos)
        groups.append(tuple(int(v) for v in m.group(1).split(",")) if m.group(1) else ())
        pos = m.end()
    rest = s[pos + 1 :]
    if rest.strip():
        raise ParseError("trailing characters", text, offset + pos + 1 + len(rest) - len(rest.lstrip()))
    if not groups:
        raise ParseError("a distribution needs at least one mode", text, offset + pos)
    return TensorDistribution(tuple(groups))


def format_dist(dist) -> str:
    """Canonical string form, e.g. ``[(0),(),(1,2)]``."""
    modes = dist.modes if isinstance(dist, TensorDistribution) else dist
    return "[" + ",".join("(" + ",".join(map(str, m)) + ")" for m in modes) + "]"


def _as_dist(dist) -> TensorDistribution:
    if isinstance(dist, TensorDistribution):
        return dist
    if isinstance(dist, str):
        return parse_dist(dist)
    return TensorDistribution(tuple(dist))


def check_distribution(global_shape: Sequence[int], dist, grid: Grid) -> TensorDistribution:
    """Validate ``dist`` for a tensor of ``global_shape`` on ``grid``."""
    dist = _as_dist(dist)
    global_shape = tuple(global_shape)
    if dist.order != len(global_shape):
        raise ShapeMismatch(f"distribution {dist} has order {dist.order}, tensor has {len(global_shape)}")
    for q in dist.grid_modes():
        if q >= grid.order:
            raise DistributionError(f"grid mode {q} does not exist in grid {grid.shape}")
    for q, size in enumerate(grid.shape):
        if size > 1 and q not in dist.grid_modes():
            raise DistributionError(
                f"grid mode {q} (size {size}) is unused by {dist}; replicated layouts are not supported"
            )
    for m, n in enumerate(global_shape):
        g = dist.group_size(m, grid)
        if n % g:
            raise ShapeMismatch(f"mode {m} of size {n} is not divisible by its grid size {g} under {dist}")
    return dist


def _mode_coords(dist: TensorDistribution, grid: Grid, rank: int) -> tuple[int, ...]:
    """Combined cyclic coordinate of ``rank`` for every tensor mode."""
    coords = grid.coords(rank)
    out = []
    for group in dist:
        c, stride = 0, 1
        for q in group:
            c += coords[q] * stride
            stride *= grid.shape[q]
        out.append(c)
    return tuple(out)


def owner_of(global_index: Sequence[int], dist, grid: Grid, global_shape: Sequence[int]):
    """Return ``(rank, local_index)`` owning ``global_index``."""
    dist = check_distribution(global_shape, dist, grid)
    if len(global_index) != len(global_shape):
        raise IndexOutOfBounds(f"index {tuple(global_index)} has wrong order")
    coords = [0] * grid.order
    local = []
    for i, n, group in zip(global_index, global_shape, dist):
        if not 0 <= i < n:
            raise IndexOutOfBounds(f"index {tuple(global_index)} out of bounds for {tuple(global_shape)}")
        g = int(np.prod([grid.shape[q] for q in group], dtype=np.int64))
        c = i % g
        for q in group:
            c, coords[q] = divmod(c, grid.shape[q])
        local.append(i // g)
    return grid.rank_of(coords), tuple(local)


def owners(dist: TensorDistribution, grid: Grid, mode: int, indices: np.ndarray):
    """Vectorized owner map for one tensor mode.

    Returns ``(rank_part, local)``; the owning rank of a multi-index is the
    sum of ``rank_part`` over all modes.
    """
    indices = np.asarray(indices, dtype=np.int64)
    strides = grid.strides()
    group = dist[mode]
    g = dist.group_size(mode, grid)
    c = indices % g
    part = np.zeros_like(indices)
    for q in group:
        c, coord = np.divmod(c, grid.shape[q])
        part += coord * strides[q]
    return part, indices // g


def local_shape(global_shape: Sequence[int], dist, grid: Grid, rank: int = 0) -> tuple[int, ...]:
    """Local tensor shape; identical on every rank under the divisibility rule."""
    dist = check_distribution(global_shape, dist, grid)
    if not 0 <= rank < grid.p:
        raise IndexOutOfBounds(f"rank {rank} outside grid {grid.shape}")
    return tuple(n // dist.group_size(m, grid) for m, n in enumerate(global_shape))


def _local_slices(global_shape, dist: TensorDistribution, grid: Grid, rank: int) -> tuple[slice, ...]:
    return tuple(
        slice(c, None, dist.group_size(m, grid)) for m, c in enumerate(_mode_coords(dist, grid, rank))
    )


def global_indices(global_shape: Sequence[int], dist, grid: Grid, rank: int) -> list[np.ndarray]:
    """Global indices of the local positions, one array per mode."""
    dist = check_distribution(global_shape, dist, grid)
    return [np.arange(n, dtype=np.int64)[s] for n, s in zip(global_shape, _local_slices(global_shape, dist, grid, rank))]


@dataclass(frozen=True, eq=False)
class DistTensor:
    """One rank's piece of a distributed tensor."""

    global_shape: tuple[int, ...]
    dist: TensorDistribution
    grid: Grid
    rank: int
    local: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "global_shape", tuple(int(n) for n in self.global_shape))
        dist = check_distribution(self.global_shape, self.dist, self.grid)
        object.__setattr__(self, "dist", dist)
        expected = local_shape(self.global_shape, dist, self.grid, self.rank)
        if tuple(self.local.shape) != expected:
            raise ShapeMismatch(f"local shape {self.local.shape} != expected {expected} for {dist}")

    @property
    def order(self) -> int:
        return len(self.global_shape)

    def global_indices(self) -> list[np.ndarray]:
        return global_indices(self.global_shape, self.dist, self.grid, self.rank)

    def with_local(self, local: np.ndarray, global_shape=None, dist=None) -> "DistTensor":
        return DistTensor(
            self.global_shape if global_shape is None else tuple(global_shape),
            self.dist if dist is None else _as_dist(dist),
            self.grid,
            self.rank,
            local,
        )


def scatter_global(t: np.ndarray, dist, grid: Grid) -> list[DistTensor]:
    """Split a global tensor into per-rank pieces, ordered by rank."""
    t = np.asarray(t, dtype=DTYPE)
    dist = check_distribution(t.shape, dist, grid)
    return [
        DistTensor(t.shape, dist, grid, r, np.asfortranarray(t[_local_slices(t.shape, dist, grid, r)]))
        for r in range(grid.p)
    ]


def gather_global(pieces: Sequence[DistTensor]) -> np.ndarray:
    """Assemble the global tensor from one piece per rank."""
    if not pieces:
        raise ShapeMismatch("no pieces to gather")
    first = pieces[0]
    if len(pieces) != first.grid.p or sorted(d.rank for d in pieces) != list(range(first.grid.p)):
        raise ShapeMismatch(f"expected one piece per rank of grid {first.grid.shape}")
    out = np.zeros(first.global_shape, dtype=DTYPE, order="F")
    for d in pieces:
        if d.global_shape != first.global_shape or d.dist != first.dist or d.grid != first.grid:
            raise ShapeMismatch("pieces disagree on shape, distribution or grid")
        out[_local_slices(d.global_shape, d.dist, d.grid, d.rank)] = d.local
    return out


def dist_split_mode(dt: DistTensor, mode: int, inner: int) -> DistTensor:
    """Split ``mode`` into ``(inner, n // inner)`` without moving data.

    The inner mode keeps the grid modes of ``mode``; the outer mode is
    undistributed. Requires the combined grid size to divide ``inner``.
    """
    if not 0 <= mode < dt.order:
        raise InvalidMode(f"mode {mode} invalid for order-{dt.order} tensor")
    n = dt.global_shape[mode]
    g = dt.dist.group_size(mode, dt.grid)
    if inner < 1 or n % inner or inner % g:
        raise ShapeMismatch(f"cannot split mode of size {n} (grid size {g}) with inner size {inner}")
    shape = dt.global_shape[:mode] + (inner, n // inner) + dt.global_shape[mode + 1 :]
    modes = dt.dist.modes[: mode + 1] + ((),) + dt.dist.modes[mode + 1 :]
    loc = dt.local.shape
    lshape = loc[:mode] + (inner // g, n // inner) + loc[mode + 1 :]
    return dt.with_local(from_flat(flat(dt.local), lshape), shape, TensorDistribution(modes))


def dist_merge_modes(dt: DistTensor, mode: int) -> DistTensor:
    """Merge ``mode`` and ``mode + 1`` without moving data; inverse of :func:`dist_split_mode`."""
    if not 0 <= mode < dt.order - 1:
        raise InvalidMode(f"cannot merge mode {mode} of an order-{dt.order} tensor")
    if dt.dist[mode + 1]:
        raise DistributionError(f"mode {mode + 1} is distributed under {dt.dist}; merge would move data")
    shape = dt.global_shape[:mode] + (dt.global_shape[mode] * dt.global_shape[mode + 1],) + dt.global_shape[mode + 2 :]
    modes = dt.dist.modes[: mode + 1] + dt.dist.modes[mode + 2 :]
    loc = dt.local.shape
    lshape = loc[:mode] + (loc[mode] * loc[mode + 1],) + loc[mode + 2 :]
    return dt.with_local(from_flat(flat(dt.local), lshape), shape, TensorDistribution(modes))


def dist_transpose(dt: DistTensor, perm: Sequence[int]) -> DistTensor:
    """Permute modes of the global tensor; the local data is transposed in place on each rank."""
    if len(perm) != dt.order:
        raise InvalidPermutation(f"{tuple(perm)} is not a permutation of {dt.order} modes")
    local = transpose(dt.local, perm)
    return dt.with_local(
        local,
        tuple(dt.global_shape[p] for p in perm),
        TensorDistribution(tuple(dt.dist[p] for p in perm)),
    )


def layout_permutation(global_shape: Sequence[int], dist, grid: Grid) -> np.ndarray:
    """Where each element of the rank-ordered concatenation of local buffers belongs.

    Entry ``j`` is the global column-major offset of the ``j``-th element when
    all ranks' column-major local buffers are concatenated in rank order. So
    ``natural_flat[perm] = concatenated`` places raw buffers in natural order.
    """
    dist = check_distribution(global_shape, dist, grid)
    global_shape = tuple(global_shape)
    strides = np.cumprod((1,) + global_shape[:-1])
    parts = []
    for r in range(grid.p):
        idx = global_indices(global_shape, dist, grid, r)
        offs = np.zeros((1,) * len(global_shape), dtype=np.int64)
        for m, (ix, s) in enumerate(zip(idx, strides)):
            shape = [1] * len(global_shape)
            shape[m] = ix.size
            offs = offs + (ix * s).reshape(shape)
        parts.append(np.ravel(offs, order="F"))
    return np.concatenate(parts)
