"""Alpha-beta cost model for the all-to-all stages of the parallel DFTs.

Two lower bounds for an all-to-all among ``p`` ranks moving ``n`` elements in
total, with ``k`` ports per node:

* message-count optimal: ``L*alpha + L*n/((k+1)*p)*beta`` with ``L = log_{k+1}(p)``
* volume optimal: ``C*alpha + C*(n/p**2)*beta`` with ``C = ceil((p-1)/k)``

A stage is charged the smaller of the two. Only communication is modelled;
packing and local computation are not.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .distribution import Grid
from .errors import (
    GridMismatch,
    InvalidParams,
    NoFeasibleConfiguration,
    ShapeMismatch,
    UnsupportedAlgorithm,
    UnsupportedCount,
)
from .parallel import AlgorithmKind, DftProblem, validate

__all__ = [
    "CostParams",
    "StageCost",
    "CostEstimate",
    "cost_mst",
    "cost_bkt",
    "latency_threshold",
    "max_procs",
    "stage_volumes",
    "estimate_algorithm",
    "TORUS",
    "GRID_TABLE",
    "grid_configs",
    "usable_grids",
    "grid_table_csv",
    "feasible",
    "Advice",
    "advise",
    "volumetric_crossover",
]


@dataclass(frozen=True)
class CostParams:
    alpha: float
    beta: float
    k: int = 1
    ceil_log: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidParams(f"alpha must be > 0, got {self.alpha}")
        if not self.beta >= 0:
            raise InvalidParams(f"beta must be >= 0, got {self.beta}")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidParams(f"k must be an integer >= 1, got {self.k}")


@dataclass(frozen=True)
class StageCost:
    label: str
    p: int
    n: float
    bound: str
    latency: float
    bandwidth: float

    @property
    def total(self) -> float:
        return self.latency + self.bandwidth


@dataclass(frozen=True)
class CostEstimate:
    stages: tuple[StageCost, ...]

    @property
    def latency_term(self) -> float:
        return sum(s.latency for s in self.stages)

    @property
    def bandwidth_term(self) -> float:
        return sum(s.bandwidth for s in self.stages)

    @property
    def total(self) -> float:
        return self.latency_term + self.bandwidth_term


def _check(p, n):
    if int(p) != p or p < 1:
        raise InvalidParams(f"p must be an integer >= 1, got {p}")
    if n < 0:
        raise InvalidParams(f"n must be >= 0, got {n}")


def _log(p: int, base: int, ceil: bool) -> float:
    if p == 1:
        return 0.0
    r = round(math.log(p) / math.log(base))
    if base**r == p:
        return float(r)
    value = math.log(p) / math.log(base)
    return float(math.ceil(value)) if ceil else value


def _mst(p: int, n: float, params: CostParams, label: str = "") -> StageCost:
    steps = _log(p, params.k + 1, params.ceil_log)
    return StageCost(label, p, n, "mst", steps * params.alpha, steps * n / ((params.k + 1) * p) * params.beta)


def _bkt(p: int, n: float, params: CostParams, label: str = "") -> StageCost:
    steps = -(-(p - 1) // params.k)
    return StageCost(label, p, n, "bkt", steps * params.alpha, steps * (n / p**2) * params.beta)


def cost_mst(p: int, n: float, params: CostParams) -> CostEstimate:
    """Message-count optimal all-to-all bound."""
    _check(p, n)
    return CostEstimate((_mst(p, n, params),))


def cost_bkt(p: int, n: float, params: CostParams) -> CostEstimate:
    """Volume optimal all-to-all bound."""
    _check(p, n)
    return CostEstimate((_bkt(p, n, params),))


def latency_threshold(variant: str, n: float, params: CostParams) -> int:
    """Smallest ``p`` from which the bound's latency term dominates."""
    ratio = Fraction(n) * Fraction(params.beta) / Fraction(params.alpha)
    if variant == "mst":
        return max(1, math.ceil(ratio / (params.k + 1)))
    if variant == "bkt":
        p = max(1, math.isqrt(math.floor(ratio)))
        while p * p < ratio:
            p += 1
        while p > 1 and (p - 1) ** 2 >= ratio:
            p -= 1
        return p
    raise InvalidParams(f"unknown variant {variant!r}")


def max_procs(alg, dims: Sequence[int]) -> int:
    """Largest rank count an algorithm can use for a 3D problem."""
    alg = AlgorithmKind.parse(alg)
    if alg.data_order != 3:
        raise UnsupportedAlgorithm(f"processor caps are defined for 3D algorithms, not {alg.value}")
    n0, n1, n2 = dims
    if alg is AlgorithmKind.SLAB:
        return max(n0, n1, n2)
    if alg is AlgorithmKind.PENCIL:
        return max(n0 * n1, n1 * n2, n0 * n2)
    return n0 * n1 * n2


def stage_volumes(alg, dims: Sequence[int], grid) -> list[tuple[str, int, float]]:
    """``(label, ranks per exchange, elements per exchange)`` for every modelled stage.

    Each stage moves the part of the cube held by one sub-communicator,
    ``N * p_sub / P``.
    """
    alg = AlgorithmKind.parse(alg)
    grid = grid if isinstance(grid, Grid) else Grid(tuple(grid))
    if grid.order != alg.grid_order:
        raise GridMismatch(f"{alg.value} needs a {alg.grid_order}D grid, got {grid.shape}")
    total = float(math.prod(dims))
    P = grid.p
    if alg is AlgorithmKind.SLAB:
        return [("slab-to-pencil", P, total)]
    if alg is AlgorithmKind.CYCLIC:
        return [("transpose", P, total)]
    if alg is AlgorithmKind.SIXSTEP:
        return [(label, P, total) for label in ("redistribute-in", "transpose", "redistribute-out")]
    if alg is AlgorithmKind.PENCIL:
        py, pz = grid.shape
        return [("rotate-yzx", py, total * py / P), ("rotate-zxy", pz, total * pz / P)]
    return [(f"mode{d}", pd, total * pd / P) for d, pd in enumerate(grid.shape)]


def estimate_algorithm(alg, dims: Sequence[int], grid, params: CostParams) -> CostEstimate:
    """Communication-only estimate: the cheaper bound for every stage, summed."""
    alg = AlgorithmKind.parse(alg)
    grid = grid if isinstance(grid, Grid) else Grid(tuple(grid))
    if len(dims) != alg.data_order:
        raise GridMismatch(f"{alg.value} expects {alg.data_order}D dims, got {tuple(dims)}")
    if alg.data_order == 3 and grid.p > max_procs(alg, dims):
        raise GridMismatch(f"{grid.p} ranks exceed the {alg.value} cap {max_procs(alg, dims)} for {tuple(dims)}")
    stages = []
    for label, p, n in stage_volumes(alg, dims, grid):
        a, b = _mst(p, n, params, label), _bkt(p, n, params, label)
        stages.append(a if a.total <= b.total else b)
    return CostEstimate(tuple(stages))


# The torus limits the grids usable per dimension.
TORUS = (48, 54, 32)

# rank count -> (1D grid, 2D grid, 3D grid); None where no grid is listed
GRID_TABLE: dict[int, tuple[tuple[int, ...] | None, ...]] = {
    2: ((2,), None, None),
    4: ((4,), (2, 2), None),
    8: ((8,), (4, 2), (2, 2, 2)),
    16: ((16,), (4, 4), (4, 2, 2)),
    32: ((32,), (8, 2), (4, 4, 2)),
    64: (None, (8, 8), (4, 4, 4)),
    128: (None, (16, 8), (8, 4, 4)),
    256: (None, (16, 16), (8, 8, 4)),
    512: (None, (32, 16), (8, 8, 8)),
    1024: (None, (32, 32), (16, 8, 8)),
    2048: (None, None, (16, 16, 8)),
    4096: (None, None, (16, 16, 16)),
    8192: (None, None, (32, 16, 16)),
    16384: (None, None, (32, 32, 16)),
    32768: (None, None, (32, 32, 32)),
}


def grid_configs(p: int) -> dict[int, tuple[int, ...] | None]:
    """The 1D/2D/3D grid shapes listed for ``p`` ranks, keyed by grid order."""
    if p not in GRID_TABLE:
        raise UnsupportedCount(f"no grid configurations for {p} ranks; supported: {sorted(GRID_TABLE)}")
    return dict(zip((1, 2, 3), GRID_TABLE[p]))


def usable_grids(p: int) -> dict[int, Grid]:
    """Listed grids for ``p`` ranks whose size is actually ``p``.

    The table is kept verbatim, and its 32-rank 2D entry (8,2) spans only 16
    ranks, so it is left out here.
    """
    return {order: Grid(shape) for order, shape in grid_configs(p).items() if shape and math.prod(shape) == p}


def grid_table_csv() -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "grid_1d", "grid_2d", "grid_3d"])
    for p, row in GRID_TABLE.items():
        w.writerow([p] + ["x".join(map(str, g)) if g else "" for g in row])
    return buf.getvalue()


_BY_ORDER = {1: AlgorithmKind.SLAB, 2: AlgorithmKind.PENCIL, 3: AlgorithmKind.VOLUMETRIC}


def feasible(alg, dims: Sequence[int], grid) -> bool:
    """Cap and divisibility check for running ``alg`` on ``grid``."""
    alg = AlgorithmKind.parse(alg)
    grid = grid if isinstance(grid, Grid) else Grid(tuple(grid))
    if alg.data_order == 3 and grid.p > max_procs(alg, dims):
        return False
    try:
        validate(alg, DftProblem(tuple(dims)), grid)
    except (ShapeMismatch, GridMismatch):
        return False
    return True


@dataclass(frozen=True)
class Advice:
    algorithm: AlgorithmKind
    grid: Grid
    estimate: CostEstimate

    @property
    def stages(self) -> int:
        return len(self.estimate.stages)


def advise(dims: Sequence[int], p: int, params: CostParams) -> list[Advice]:
    """Feasible (algorithm, grid) pairs for ``p`` ranks, cheapest first.

    Ties are broken by fewer exchange stages, then by lower grid order.
    """
    rows = []
    for order, grid in usable_grids(p).items():
        alg = _BY_ORDER[order]
        if feasible(alg, dims, grid):
            rows.append(Advice(alg, grid, estimate_algorithm(alg, dims, grid, params)))
    if not rows:
        raise NoFeasibleConfiguration(f"no feasible algorithm for dims {tuple(dims)} on {p} ranks")
    rows.sort(key=lambda a: (a.estimate.total, a.stages, a.grid.order))
    return rows


def volumetric_crossover(dims: Sequence[int], params: CostParams, rtol: float = 1e-9) -> int | None:
    """First listed rank count at which volumetric beats every slab-pencil run so far.

    Sweeps the table in increasing ``p``. The slab-pencil reference is the best
    estimate over all feasible slab configurations with at most ``p`` ranks
    (slab grids stop at 32 ranks), so this is where the time-to-solution
    frontier passes to the volumetric algorithm. ``rtol`` keeps rounding noise
    from turning exact ties into wins. Returns None if that never happens.
    """
    best_slab = math.inf
    for p in sorted(GRID_TABLE):
        grids = usable_grids(p)
        if 1 in grids and feasible(AlgorithmKind.SLAB, dims, grids[1]):
            best_slab = min(best_slab, estimate_algorithm(AlgorithmKind.SLAB, dims, grids[1], params).total)
        if 3 in grids and feasible(AlgorithmKind.VOLUMETRIC, dims, grids[3]):
            vol = estimate_algorithm(AlgorithmKind.VOLUMETRIC, dims, grids[3], params).total
            if vol < best_slab * (1 - rtol):
                return p
    return None
