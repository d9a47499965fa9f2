"""Command-line harness: oracle verification runs, cost-model advice and sweeps.

Subcommands
-----------
verify   run one algorithm on the simulated runtime and compare with a dense DFT
advise   rank the feasible (algorithm, grid) pairs for a rank count by model cost
sweep    one CSV row per feasible configuration over a set of rank counts
table    print the embedded grid table as CSV
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import statistics
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import cost
from .distribution import Grid
from .errors import DistDFTError, InvalidParams, ShapeMismatch
from .kernels import dft_naive, dftn_naive
from .parallel import NATURAL, SHUFFLED, AlgorithmKind, DftProblem, expected_collectives, run, validate
from .runtime import write_trace

__all__ = ["RunConfig", "CSV_HEADER", "DESK_LIMIT", "random_input", "main"]

CSV_HEADER = [
    "p",
    "grid",
    "algorithm",
    "stages",
    "model_total_s",
    "model_latency_s",
    "model_bandwidth_s",
    "sim_collectives",
    "sim_bytes",
    "max_rel_err",
]

# simulated runs above this many elements need --force
DESK_LIMIT = 2**22
TOLERANCE = 1e-10
MODEL_NOTE = "model covers communication only; packing and local computation are not included"


@dataclass
class RunConfig:
    dims: tuple[int, ...] = (8, 8, 8)
    algorithm: str = "volumetric"
    grid: tuple[int, ...] | None = None
    output_mode: str = NATURAL
    seed: int = 0
    alpha: float = 1e-5
    beta: float = 1e-9
    k: int = 1
    repetitions: int = 3

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidParams(f"unknown config fields: {sorted(unknown)}")
        for key in ("dims", "grid"):
            if data.get(key) is not None:
                data[key] = tuple(int(v) for v in data[key])
        return cls(**data)

    @property
    def params(self) -> cost.CostParams:
        return cost.CostParams(self.alpha, self.beta, self.k)

    @property
    def kind(self) -> AlgorithmKind:
        return AlgorithmKind.parse(self.algorithm)

    def resolved_grid(self) -> Grid:
        if self.grid is None:
            return Grid((1,) * self.kind.grid_order)
        return Grid(tuple(self.grid))


def random_input(dims, seed: int) -> np.ndarray:
    """Complex standard-normal tensor from a seeded PCG64 generator."""
    rng = np.random.default_rng(seed)
    shape = tuple(dims)
    return np.asfortranarray(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def oracle(x: np.ndarray) -> np.ndarray:
    return dft_naive(x) if x.ndim == 1 else dftn_naive(x)


def rel_error(got: np.ndarray, want: np.ndarray) -> float:
    scale = np.linalg.norm(want)
    diff = np.linalg.norm(got - want)
    return float(diff / scale) if scale else float(diff)


def _ints(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _fmt(value: float) -> str:
    return f"{value:.9e}"


def _grid_str(grid: Grid) -> str:
    return "x".join(map(str, grid.shape))


# -- verify ------------------------------------------------------------------


def simulate(cfg: RunConfig, kind: AlgorithmKind, grid: Grid, *, serial: bool = False):
    """Run one configuration on random input; return (result, relative error)."""
    problem = DftProblem(tuple(cfg.dims), output_mode=cfg.output_mode)
    x = random_input(cfg.dims, cfg.seed)
    result = run(kind, problem, grid, x, serial=serial)
    return result, rel_error(result.output, oracle(x))


def cmd_verify(cfg: RunConfig, args) -> int:
    kind, grid = cfg.kind, cfg.resolved_grid()
    validate(kind, DftProblem(tuple(cfg.dims), output_mode=cfg.output_mode), grid)
    if math.prod(cfg.dims) > DESK_LIMIT and not args.force:
        raise ShapeMismatch(f"{math.prod(cfg.dims)} elements exceed the desk-scale limit {DESK_LIMIT}; use --force")

    times = []
    result = err = None
    for _ in range(max(1, cfg.repetitions)):
        start = time.perf_counter()
        result, err = simulate(cfg, kind, grid, serial=args.serial)
        times.append(time.perf_counter() - start)

    expected = expected_collectives(kind, grid, cfg.output_mode)
    ok = err <= TOLERANCE and result.collectives == expected
    print(f"algorithm: {kind.value}  dims: {'x'.join(map(str, cfg.dims))}  grid: {_grid_str(grid)}  output: {cfg.output_mode}")
    print(f"seed: {cfg.seed}")
    print(f"max relative error: {err:.3e} (tolerance {TOLERANCE:g})")
    print(f"collectives: {result.collectives} (expected {expected})")
    for label, count in result.collectives_by_label().items():
        print(f"  {label}: {count}")
    print(f"bytes sent (all ranks): {result.bytes_sent}")
    print(f"simulator time, median of {len(times)}: {statistics.median(times):.4f} s (not network time)")
    print("PASS" if ok else "FAIL")

    if args.trace:
        write_trace(result.events, args.trace)
    if args.csv:
        est = _estimate_or_none(kind, cfg.dims, grid, cfg.params)
        _write_csv(args.csv, [_row(grid, kind, est, result, err)])
    return 0 if ok else 1


# -- advise ------------------------------------------------------------------


def cmd_advise(cfg: RunConfig, args) -> int:
    ranked = cost.advise(cfg.dims, args.p, cfg.params)
    headers = ["rank", "algorithm", "grid", "stages", "total_s", "latency_s", "bandwidth_s"]
    rows = [
        [str(i), a.algorithm.value, _grid_str(a.grid), str(a.stages)]
        + [f"{v:.4e}" for v in (a.estimate.total, a.estimate.latency_term, a.estimate.bandwidth_term)]
        for i, a in enumerate(ranked, 1)
    ]
    widths = [max(len(r[c]) for r in rows + [headers]) for c in range(len(headers))]
    for r in [headers] + rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    print(f"note: {MODEL_NOTE}")
    if args.csv:
        _write_csv(args.csv, [_row(a.grid, a.algorithm, a.estimate) for a in ranked])
    return 0


# -- sweep -------------------------------------------------------------------


def _sweep_kinds(dims) -> dict[int, list[AlgorithmKind]]:
    if len(dims) == 1:
        return {1: [AlgorithmKind.CYCLIC, AlgorithmKind.SIXSTEP]}
    return {1: [AlgorithmKind.SLAB], 2: [AlgorithmKind.PENCIL], 3: [AlgorithmKind.VOLUMETRIC]}


def _estimate_or_none(kind, dims, grid, params):
    try:
        return cost.estimate_algorithm(kind, dims, grid, params)
    except DistDFTError:
        return None


def sweep_rows(cfg: RunConfig, counts, *, force: bool = False, serial: bool = False, log=None) -> list[list[str]]:
    """CSV rows (without header) for every feasible configuration."""
    simulate_ok = force or math.prod(cfg.dims) <= DESK_LIMIT
    kinds = _sweep_kinds(cfg.dims)
    rows = []
    for p in counts:
        for order, grid in cost.usable_grids(p).items():
            for kind in kinds.get(order, []):
                if not cost.feasible(kind, cfg.dims, grid):
                    continue
                est = _estimate_or_none(kind, cfg.dims, grid, cfg.params)
                result = err = None
                if simulate_ok:
                    try:
                        result, err = simulate(cfg, kind, grid, serial=serial)
                    except DistDFTError as exc:
                        if log is not None:
                            print(f"p={p} {kind.value} {_grid_str(grid)}: {type(exc).__name__}: {exc}", file=log)
                rows.append(_row(grid, kind, est, result, err))
    return rows


def cmd_sweep(cfg: RunConfig, args) -> int:
    counts = args.p_list or sorted(cost.GRID_TABLE)
    rows = sweep_rows(cfg, counts, force=args.force, serial=args.serial, log=sys.stderr)
    if not rows:
        print("error: no feasible configuration in the sweep", file=sys.stderr)
        return 2
    text = _csv_text(rows)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"seed: {cfg.seed}; {MODEL_NOTE}", file=sys.stderr)
    return 0


# -- csv ---------------------------------------------------------------------


def _row(grid: Grid, kind: AlgorithmKind, est, result=None, err=None) -> list[str]:
    model = ["", "", "", ""] if est is None else [
        str(len(est.stages)),
        _fmt(est.total),
        _fmt(est.latency_term),
        _fmt(est.bandwidth_term),
    ]
    sim = ["", "", ""] if result is None else [str(result.collectives), str(result.bytes_sent), _fmt(err)]
    return [str(grid.p), _grid_str(grid), kind.short] + model + sim


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    return buf.getvalue()


def _write_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_csv_text(rows))


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    common.add_argument("--dims", type=_ints, help="problem size, e.g. 8,8,8 or 256")
    common.add_argument("--alpha", type=float, help="per-message latency in seconds")
    common.add_argument("--beta", type=float, help="per-element transfer time in seconds")
    common.add_argument("--ports", type=int, dest="k", help="ports per node (k)")
    common.add_argument("--seed", type=int, help="seed for random inputs")
    common.add_argument("--output", choices=[NATURAL, SHUFFLED], dest="output_mode")
    common.add_argument("--csv", help="write CSV to this path")
    common.add_argument("--force", action="store_true", help="simulate beyond the desk-scale size limit")
    common.add_argument("--serial", action="store_true", help="run ranks one at a time")

    parser = argparse.ArgumentParser(prog="distdft", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="run and compare with the dense DFT")
    v.add_argument("--alg", dest="algorithm", help="sixstep | cyclic | slab | pencil | volumetric")
    v.add_argument("--grid", type=_ints, help="grid shape, e.g. 2,2,2")
    v.add_argument("--repetitions", type=int, help="simulator timing repetitions")
    v.add_argument("--trace", help="write the event log as JSON lines")

    a = sub.add_parser("advise", parents=[common], help="rank configurations by model cost")
    a.add_argument("--p", type=int, required=True, help="rank count from the grid table")

    s = sub.add_parser("sweep", parents=[common], help="CSV over grid-table rank counts")
    s.add_argument("--p", type=_ints, dest="p_list", help="rank counts to sweep (default: all)")

    sub.add_parser("table", help="print the grid table as CSV")
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    return dataclasses.replace(cfg, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "table":
            sys.stdout.write(cost.grid_table_csv())
            return 0
        cfg = _config(args)
        handler = {"verify": cmd_verify, "advise": cmd_advise, "sweep": cmd_sweep}[args.command]
        return handler(cfg, args)
    except (DistDFTError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
