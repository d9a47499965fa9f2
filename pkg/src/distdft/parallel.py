"""Parallel 1D and 3D DFT algorithms on distributed tensors.

Each algorithm is a per-rank function taking a :class:`DistTensor` and the
rank's world :class:`Communicator`. All of them are assembled from the same
pieces: batched local DFTs along one mode, locally generated twiddle factors,
local reinterpretations (split/merge/transpose) and single-grid-mode
redistributions.

The shared building block is :func:`cyclic_ct`, a Cooley-Tukey step whose row
mode is elemental-cyclic over one grid mode. It needs exactly one all-to-all
and hands back its output in the same distribution as its input, which is
what makes the cyclic 1D DFT and the volumetric 3D DFT communication-lean.

Communication stages per algorithm (collectives on grids with every mode > 1):

===================  =======  ========
algorithm            natural  shuffled
===================  =======  ========
cyclic-1d            1        1
sixstep-1d           3        3
slab-pencil          2        1
pencil-pencil-pencil 4        3
volumetric           3        3
===================  =======  ========
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .distribution import (
    DistTensor,
    Grid,
    TensorDistribution,
    dist_merge_modes,
    dist_split_mode,
    dist_transpose,
    gather_global,
    layout_permutation,
    parse_dist,
    scatter_global,
)
from .errors import DistributionError, GridMismatch, ShapeMismatch
from .kernels import batch_dft_mode, twiddle_entries
from .redist import execute_redist
from .runtime import DEFAULT_TIMEOUT, Event, spawn
from .tensor import DTYPE, flat, from_flat

__all__ = [
    "AlgorithmKind",
    "DftProblem",
    "RunResult",
    "balanced_split",
    "cyclic_ct",
    "dft1d_cyclic",
    "dft1d_sixstep",
    "dft3d_slab",
    "dft3d_pencil",
    "dft3d_volumetric",
    "validate",
    "input_layout",
    "output_layout",
    "stage_plan",
    "expected_collectives",
    "shuffle_map",
    "run",
]

NATURAL = "natural"
SHUFFLED = "shuffled"

Observer = Callable[[str, DistTensor], None]


class AlgorithmKind(str, enum.Enum):
    SIXSTEP = "sixstep-1d"
    CYCLIC = "cyclic-1d"
    SLAB = "slab-pencil"
    PENCIL = "pencil-pencil-pencil"
    VOLUMETRIC = "volumetric"

    @property
    def grid_order(self) -> int:
        return {"sixstep-1d": 1, "cyclic-1d": 1, "slab-pencil": 1, "pencil-pencil-pencil": 2, "volumetric": 3}[
            self.value
        ]

    @property
    def data_order(self) -> int:
        return 1 if self in (AlgorithmKind.SIXSTEP, AlgorithmKind.CYCLIC) else 3

    @classmethod
    def parse(cls, name) -> "AlgorithmKind":
        if isinstance(name, cls):
            return name
        aliases = {"sixstep": cls.SIXSTEP, "cyclic": cls.CYCLIC, "slab": cls.SLAB, "pencil": cls.PENCIL}
        try:
            return aliases.get(name) or cls(name)
        except ValueError:
            raise ValueError(f"unknown algorithm {name!r}") from None

    @property
    def short(self) -> str:
        return {"sixstep-1d": "sixstep", "cyclic-1d": "cyclic", "slab-pencil": "slab",
                "pencil-pencil-pencil": "pencil", "volumetric": "volumetric"}[self.value]


@dataclass(frozen=True)
class DftProblem:
    """Logical problem: data dims, optional ``(a, b)`` factorization per dim, output mode.

    Factorizations matter for the 1D algorithms (``n = n0 * n1``) and for the
    embedded cyclic DFTs of the volumetric algorithm; ``None`` picks
    :func:`balanced_split`.
    """

    dims: tuple[int, ...]
    factorizations: tuple[tuple[int, int] | None, ...] | None = None
    output_mode: str = NATURAL

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if not dims or any(n < 1 for n in dims):
            raise ShapeMismatch(f"dims must be >= 1, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        if self.output_mode not in (NATURAL, SHUFFLED):
            raise ValueError(f"output_mode must be 'natural' or 'shuffled', got {self.output_mode!r}")
        if self.factorizations is not None:
            facts = tuple(None if f is None else (int(f[0]), int(f[1])) for f in self.factorizations)
            if len(facts) != len(dims):
                raise ShapeMismatch("one factorization entry per dim is required")
            for n, f in zip(dims, facts):
                if f is not None and f[0] * f[1] != n:
                    raise ShapeMismatch(f"factorization {f} does not multiply to {n}")
            object.__setattr__(self, "factorizations", facts)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    def factorization(self, d: int) -> tuple[int, int] | None:
        return None if self.factorizations is None else self.factorizations[d]


def balanced_split(n: int, p: int) -> tuple[int, int]:
    """Most balanced ``(a, b)`` with ``a * b == n`` and ``p`` dividing both."""
    best = None
    for a in range(1, n + 1):
        if n % a or a % p or (n // a) % p:
            continue
        key = (abs(a - n // a), -a)
        if best is None or key < best[0]:
            best = (key, (a, n // a))
    if best is None:
        raise ShapeMismatch(f"no factorization n = a*b of {n} with {p} dividing both a and b")
    return best[1]


def _factors(n: int, p: int, given: tuple[int, int] | None) -> tuple[int, int]:
    if given is None:
        return balanced_split(n, p)
    a, b = given
    if a * b != n or a % p or b % p:
        raise ShapeMismatch(f"factorization {given} of {n} needs {p} to divide both factors")
    return a, b


# -- per-rank building blocks ---------------------------------------------------


def _local_dft(dt: DistTensor, mode: int) -> DistTensor:
    return dt.with_local(batch_dft_mode(dt.local, mode))


def cyclic_ct(dt: DistTensor, mode: int, comm, label: str | None = None) -> DistTensor:
    """Distributed Cooley-Tukey step over modes ``(mode, mode + 1)``.

    Mode ``mode`` holds the ``n0`` rows (elemental-cyclic over at most one
    grid mode), mode ``mode + 1`` the ``n1`` undistributed columns, with
    ``X[m0, m1] = x[m0 + n0*m1]``. The result has those two modes swapped,
    ``Y[k1, k0] = y[k1 + n1*k0]``, in the same distribution as the input.
    """
    rows = dt.dist[mode]
    if len(rows) > 1 or dt.dist[mode + 1]:
        raise DistributionError(f"cyclic_ct needs [(q)()] on modes {mode},{mode + 1}, got {dt.dist}")
    n0, n1 = dt.global_shape[mode], dt.global_shape[mode + 1]
    # stage I: DFT_{n1} along the rows
    t = _local_dft(dt, mode + 1)
    # stage II: twiddles for the owned (l, k) pairs only
    idx = t.global_indices()
    tw = twiddle_entries(idx[mode], idx[mode + 1], n0 * n1)
    bshape = [1] * t.order
    bshape[mode], bshape[mode + 1] = tw.shape
    t = t.with_local(np.asfortranarray(t.local * tw.reshape(bshape)))
    # stage III: block transpose over the network, then local transpose
    moved = list(t.dist.modes)
    moved[mode], moved[mode + 1] = (), rows
    t = execute_redist(t, TensorDistribution(tuple(moved)), comm, label)
    perm = list(range(t.order))
    perm[mode], perm[mode + 1] = mode + 1, mode
    t = dist_transpose(t, perm)
    # stage IV: DFT_{n0} along the rows
    return _local_dft(t, mode + 1)


def _expect(dt: DistTensor, order: int, dist: str, grid_order: int) -> None:
    if dt.grid.order != grid_order:
        raise GridMismatch(f"needs a {grid_order}D grid, got {dt.grid.shape}")
    if dt.order != order or dt.dist != parse_dist(dist):
        raise DistributionError(f"needs an order-{order} tensor distributed {dist}, got {dt.dist} on {dt.global_shape}")


def dft1d_cyclic(x: DistTensor, comm, observe: Observer | None = None) -> DistTensor:
    """1D DFT of ``X`` (n0, n1) distributed ``[(0),()]``; one all-to-all.

    Returns ``Y`` (n1, n0) distributed ``[(0),()]`` with ``Y[k1, k0] = y[k1 + n1*k0]``.
    As vectors, input and output are both elemental-cyclic over the ranks.
    """
    _expect(x, 2, "[(0),()]", 1)
    y = cyclic_ct(x, 0, comm, "transpose")
    if observe:
        observe("transpose", y)
    return y


def dft1d_sixstep(x: DistTensor, comm, observe: Observer | None = None) -> DistTensor:
    """Six-step 1D DFT on block-distributed data; three all-to-alls.

    Input is ``x`` viewed as (n0, n1/p, p) distributed ``[(),(),(0)]``, i.e. each
    rank holds one contiguous chunk of ``x``. The output (n1, n0/p, p) has the
    same layout for ``y``.
    """
    _expect(x, 3, "[(),(),(0)]", 1)
    p = x.grid.p
    n0 = x.global_shape[0]
    t = execute_redist(x, "[(0),(),()]", comm, "redistribute-in")
    t = dist_merge_modes(t, 1)
    if observe:
        observe("redistribute-in", t)
    t = cyclic_ct(t, 0, comm, "transpose")
    if observe:
        observe("transpose", t)
    t = dist_split_mode(t, 1, n0 // p)
    t = execute_redist(t, "[(),(),(0)]", comm, "redistribute-out")
    if observe:
        observe("redistribute-out", t)
    return t


def dft3d_slab(cube: DistTensor, comm, output_mode: str = NATURAL, observe: Observer | None = None) -> DistTensor:
    """Slab-pencil 3D DFT on a 1D grid.

    Input: (n0, n1, n2) with slabs of mode 2 dealt cyclically, ``[(),(),(0)]``.
    Local 2D DFTs, one all-to-all to (n0*n1, n2) ``[(0),()]`` pencils, local
    1D DFTs. Natural mode returns to the slab layout with a second all-to-all;
    shuffled mode returns the pencil layout.
    """
    _expect(cube, 3, "[(),(),(0)]", 1)
    n0 = cube.global_shape[0]
    t = _local_dft(_local_dft(cube, 0), 1)
    t = dist_merge_modes(t, 0)
    t = execute_redist(t, "[(0),()]", comm, "slab-to-pencil")
    t = _local_dft(t, 1)
    if observe:
        observe("slab-to-pencil", t)
    if output_mode == SHUFFLED:
        return t
    t = execute_redist(t, "[(),(0)]", comm, "pencil-to-slab")
    t = dist_split_mode(t, 0, n0)
    if observe:
        observe("pencil-to-slab", t)
    return t


_ROTATE = (1, 2, 0)


def dft3d_pencil(cube: DistTensor, comm, output_mode: str = NATURAL, observe: Observer | None = None) -> DistTensor:
    """Pencil-pencil-pencil 3D DFT on a (p_y, p_z) grid.

    Input ``[(),(0),(1)]``: every rank holds full x-pencils. Each exchange
    moves one grid mode and is followed by a local cube rotation
    xyz -> yzx -> zxy -> xyz. The shuffled output is the xyz cube in
    y-pencils ``[(0),(),(1)]``; natural mode adds a fourth exchange back to
    ``[(),(0),(1)]``.
    """
    _expect(cube, 3, "[(),(0),(1)]", 2)
    t = _local_dft(cube, 0)
    # (x, y, z): y over p_y, z over p_z
    t = execute_redist(t, "[(0),(),(1)]", comm, "rotate-yzx")
    t = _local_dft(dist_transpose(t, _ROTATE), 0)  # (y, z, x) [(),(1),(0)]
    if observe:
        observe("rotate-yzx", t)
    t = execute_redist(t, "[(1),(),(0)]", comm, "rotate-zxy")
    t = _local_dft(dist_transpose(t, _ROTATE), 0)  # (z, x, y) [(),(0),(1)]
    if observe:
        observe("rotate-zxy", t)
    t = execute_redist(t, "[(1),(0),()]", comm, "rotate-xyz")
    t = dist_transpose(t, _ROTATE)  # (x, y, z) [(0),(),(1)]
    if observe:
        observe("rotate-xyz", t)
    if output_mode == SHUFFLED:
        return t
    t = execute_redist(t, "[(),(0),(1)]", comm, "finalize-natural")
    if observe:
        observe("finalize-natural", t)
    return t


def dft3d_volumetric(
    cube: DistTensor,
    comm,
    output_mode: str = NATURAL,
    factorizations: Sequence[tuple[int, int] | None] | None = None,
    observe: Observer | None = None,
) -> DistTensor:
    """Volumetric 3D DFT on a 3D grid, parallel inside every 1D DFT.

    The cube stays ``[(0),(1),(2)]`` throughout. For each dimension ``d`` the
    mode is split as ``n_d = a*b`` (rows ``a`` keep grid mode ``d``), a
    :func:`cyclic_ct` runs on the grid-mode-``d`` fibres, and the ``(b, a)``
    output modes merge back into one cyclic mode in natural order. The output
    is therefore natural in both output modes.
    """
    _expect(cube, 3, "[(0),(1),(2)]", 3)
    t = cube
    for d in range(3):
        n, p = t.global_shape[d], t.grid.shape[d]
        a, _ = _factors(n, p, None if factorizations is None else factorizations[d])
        t = dist_split_mode(t, d, a)
        t = cyclic_ct(t, d, comm, f"mode{d}")
        t = dist_merge_modes(t, d)
        if observe:
            observe(f"mode{d}", t)
    return t


# -- problem-level helpers --------------------------------------------------------


def _grid(grid) -> Grid:
    return grid if isinstance(grid, Grid) else Grid(tuple(grid))


def validate(kind, problem: DftProblem, grid) -> None:
    """Raise if ``kind`` cannot run ``problem`` on ``grid``."""
    kind, grid = AlgorithmKind.parse(kind), _grid(grid)
    if grid.order != kind.grid_order:
        raise GridMismatch(f"{kind.value} needs a {kind.grid_order}D grid, got {grid.shape}")
    if len(problem.dims) != kind.data_order:
        raise ShapeMismatch(f"{kind.value} needs {kind.data_order}D dims, got {problem.dims}")
    dims = problem.dims
    if kind in (AlgorithmKind.CYCLIC, AlgorithmKind.SIXSTEP):
        _factors(dims[0], grid.p, problem.factorization(0))
    elif kind is AlgorithmKind.SLAB:
        p = grid.p
        if dims[2] % p or (dims[0] * dims[1]) % p:
            raise ShapeMismatch(f"slab-pencil needs {p} | n2 and {p} | n0*n1, dims {dims}")
    elif kind is AlgorithmKind.PENCIL:
        for q in grid.shape:
            if any(n % q for n in dims):
                raise ShapeMismatch(f"pencil-pencil-pencil needs {q} to divide every dim of {dims}")
    else:
        for d in range(3):
            _factors(dims[d], grid.shape[d], problem.factorization(d))


def input_layout(kind, problem: DftProblem, grid) -> tuple[tuple[int, ...], TensorDistribution]:
    """Global shape and distribution of the input tensor built from natural data."""
    kind, grid = AlgorithmKind.parse(kind), _grid(grid)
    validate(kind, problem, grid)
    if kind is AlgorithmKind.CYCLIC:
        n0, n1 = _factors(problem.dims[0], grid.p, problem.factorization(0))
        return (n0, n1), parse_dist("[(0),()]")
    if kind is AlgorithmKind.SIXSTEP:
        n0, n1 = _factors(problem.dims[0], grid.p, problem.factorization(0))
        return (n0, n1 // grid.p, grid.p), parse_dist("[(),(),(0)]")
    dist = {AlgorithmKind.SLAB: "[(),(),(0)]", AlgorithmKind.PENCIL: "[(),(0),(1)]",
            AlgorithmKind.VOLUMETRIC: "[(0),(1),(2)]"}[kind]
    return problem.dims, parse_dist(dist)


def output_layout(kind, problem: DftProblem, grid) -> tuple[tuple[int, ...], TensorDistribution]:
    """Global shape and distribution of the output tensor.

    In every case the column-major data of the output global tensor is the
    column-major data of the natural-order result, so only the distribution
    (and for shuffled slab output the mode grouping) differs.
    """
    kind, grid = AlgorithmKind.parse(kind), _grid(grid)
    shape, dist = input_layout(kind, problem, grid)
    if kind is AlgorithmKind.CYCLIC:
        return (shape[1], shape[0]), dist
    if kind is AlgorithmKind.SIXSTEP:
        n0, n1 = shape[0], shape[1] * grid.p
        return (n1, n0 // grid.p, grid.p), dist
    if problem.output_mode == SHUFFLED:
        n0, n1, n2 = problem.dims
        if kind is AlgorithmKind.SLAB:
            return (n0 * n1, n2), parse_dist("[(0),()]")
        if kind is AlgorithmKind.PENCIL:
            return shape, parse_dist("[(0),(),(1)]")
    return shape, dist


def stage_plan(kind, grid, output_mode: str = NATURAL) -> list[tuple[str, int]]:
    """``(stage label, grid mode communicated over)`` for every exchange stage."""
    kind = AlgorithmKind.parse(kind)
    if kind is AlgorithmKind.CYCLIC:
        return [("transpose", 0)]
    if kind is AlgorithmKind.SIXSTEP:
        return [("redistribute-in", 0), ("transpose", 0), ("redistribute-out", 0)]
    if kind is AlgorithmKind.SLAB:
        stages = [("slab-to-pencil", 0)]
        return stages if output_mode == SHUFFLED else stages + [("pencil-to-slab", 0)]
    if kind is AlgorithmKind.PENCIL:
        stages = [("rotate-yzx", 0), ("rotate-zxy", 1), ("rotate-xyz", 1)]
        return stages if output_mode == SHUFFLED else stages + [("finalize-natural", 0)]
    return [("mode0", 0), ("mode1", 1), ("mode2", 2)]


def expected_collectives(kind, grid, output_mode: str = NATURAL) -> int:
    """All-to-alls per rank; stages over a grid mode of size 1 are local."""
    grid = _grid(grid)
    return sum(1 for _, q in stage_plan(kind, grid, output_mode) if grid.shape[q] > 1)


def shuffle_map(kind, problem: DftProblem, grid) -> np.ndarray:
    """Index map from the raw rank-ordered output buffers to natural order.

    ``natural_flat[m] = concat(local buffers)`` where ``m`` is the returned
    array and ``natural_flat`` is the column-major natural-order result.
    """
    shape, dist = output_layout(kind, problem, grid)
    return layout_permutation(shape, dist, _grid(grid))


def _to_input(kind, problem: DftProblem, grid: Grid, x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.shape != problem.dims:
        raise ShapeMismatch(f"input shape {x.shape} != problem dims {problem.dims}")
    shape, _ = input_layout(kind, problem, grid)
    return from_flat(flat(x), shape)


@dataclass
class RunResult:
    kind: AlgorithmKind
    problem: DftProblem
    grid: Grid
    output: np.ndarray
    pieces: list[DistTensor] = field(repr=False)
    events: list[list[Event]] = field(repr=False)
    stages: list[list[tuple[str, str]]] = field(repr=False)

    @property
    def collectives(self) -> int:
        """All-to-alls performed by each rank (identical on every rank)."""
        counts = {sum(e.kind == "all_to_all" for e in log) for log in self.events}
        if len(counts) != 1:
            raise RuntimeError(f"ranks disagree on collective counts: {counts}")
        return counts.pop()

    @property
    def bytes_sent(self) -> int:
        return sum(e.bytes for log in self.events for e in log)

    def collectives_by_label(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.events[0]:
            out[e.stage_label] = out.get(e.stage_label, 0) + 1
        return out

    def raw_output(self) -> np.ndarray:
        """Rank-ordered concatenation of the output local buffers."""
        return np.concatenate([flat(d.local) for d in self.pieces])


def run(
    kind,
    problem: DftProblem,
    grid,
    x,
    *,
    serial: bool = False,
    timeout: float = DEFAULT_TIMEOUT,
) -> RunResult:
    """Scatter ``x`` (natural order, shape ``problem.dims``), run ``kind`` on every rank, gather.

    ``RunResult.output`` is always the natural-order transform; the output
    pieces keep whatever layout the output mode produced.
    """
    kind, grid = AlgorithmKind.parse(kind), _grid(grid)
    validate(kind, problem, grid)
    _, dist = input_layout(kind, problem, grid)
    pieces = scatter_global(_to_input(kind, problem, grid, x), dist, grid)
    mode = problem.output_mode

    def program(comm):
        history: list[tuple[str, str]] = []

        def observe(label, dt):
            history.append((label, str(dt.dist)))

        dt = pieces[comm.world_rank]
        if kind is AlgorithmKind.CYCLIC:
            out = dft1d_cyclic(dt, comm, observe)
        elif kind is AlgorithmKind.SIXSTEP:
            out = dft1d_sixstep(dt, comm, observe)
        elif kind is AlgorithmKind.SLAB:
            out = dft3d_slab(dt, comm, mode, observe)
        elif kind is AlgorithmKind.PENCIL:
            out = dft3d_pencil(dt, comm, mode, observe)
        else:
            out = dft3d_volumetric(dt, comm, mode, problem.factorizations, observe)
        return out, history

    results, events = spawn(grid, program, timeout=timeout, serial=serial, return_events=True)
    out_pieces = [r[0] for r in results]
    output = from_flat(flat(gather_global(out_pieces)), problem.dims)
    return RunResult(kind, problem, grid, output, out_pieces, events, [r[1] for r in results])
