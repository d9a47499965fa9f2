"""Deterministic in-process multi-rank runtime.

:func:`spawn` runs one Python thread per rank of a :class:`Grid`. Ranks share
nothing but the collectives on their :class:`Communicator`, which are
synchronous rendezvous points: every member deposits its contribution and
blocks until all members of the communicator have arrived.

Each rank keeps an event log with one :class:`Event` per collective call on
any of its communicators. Payload volume is counted in bytes of the numpy
buffers handed to the collective.

In serial mode only one rank runs at a time. The running rank keeps the turn
until it blocks in an incomplete collective or finishes, then hands it to the
next runnable rank in cyclic rank order. Results are identical to the
concurrent mode because collectives are pure data exchanges.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .distribution import Grid
from .errors import DeadlockDetected, InvalidMode, InvalidRoot, ProgramError, SizeMismatch

__all__ = ["Event", "Communicator", "spawn", "split", "write_trace", "DEFAULT_TIMEOUT"]

DEFAULT_TIMEOUT = 10.0


@dataclass(frozen=True)
class Event:
    """One collective call as seen by one rank."""

    rank: int
    seq: int
    kind: str
    comm: str
    comm_size: int
    bytes: int
    recv_bytes: int
    stage_label: str | None = None

    def record(self) -> dict:
        return asdict(self)


class _Aborted(Exception):
    """Raised in ranks woken up because another rank failed."""


def _nbytes(buf) -> int:
    if buf is None:
        return 0
    if isinstance(buf, np.ndarray):
        return int(buf.nbytes)
    if isinstance(buf, (list, tuple)):
        return sum(_nbytes(b) for b in buf)
    return int(np.asarray(buf).nbytes)


def _copy(buf):
    return np.array(buf, copy=True) if isinstance(buf, np.ndarray) else buf


class _Slot:
    __slots__ = ("kind", "root", "payloads", "taken")

    def __init__(self, kind, root, size):
        self.kind = kind
        self.root = root
        self.payloads: list[Any] = [None] * size
        self.taken = 0


class _Group:
    def __init__(self, name: str, members: tuple[int, ...]):
        self.name = name
        self.members = members
        self.slots: dict[int, _Slot] = {}
        self.arrived: dict[int, set[int]] = {}


class _World:
    def __init__(self, grid: Grid, timeout: float, serial: bool):
        self.grid = grid
        self.timeout = timeout
        self.serial = serial
        self.cv = threading.Condition()
        self.groups: dict[str, _Group] = {}
        self.finished: set[int] = set()
        self.error: BaseException | None = None
        # serial scheduling
        self.turn = 0
        self.blocked: set[int] = set()

    def group(self, name: str, members: tuple[int, ...]) -> _Group:
        with self.cv:
            g = self.groups.get(name)
            if g is None:
                g = self.groups[name] = _Group(name, members)
            return g

    def abort(self, exc: BaseException) -> None:
        # caller holds cv
        if self.error is None:
            self.error = exc
        self.cv.notify_all()

    # serial scheduling, caller holds cv
    def _runnable(self, r: int) -> bool:
        return r not in self.finished and r not in self.blocked

    def pass_turn(self, me: int) -> None:
        p = self.grid.p
        for step in range(1, p + 1):
            r = (me + step) % p
            if self._runnable(r):
                self.turn = r
                self.cv.notify_all()
                return
        if len(self.finished) < p:
            self.abort(DeadlockDetected(f"ranks {sorted(self.blocked)} wait on collectives no rank can complete"))
        self.cv.notify_all()

    def wait_turn(self, me: int) -> None:
        while self.serial and self.turn != me and self.error is None:
            self.cv.wait()
        if self.error is not None:
            raise _Aborted()


class Communicator:
    """A rank's handle on a group of ranks (the world, or a grid-mode fibre)."""

    def __init__(self, world: _World, group: _Group, world_rank: int, events: list[Event]):
        self._world = world
        self._group = group
        self.world_rank = world_rank
        self.rank = group.members.index(world_rank)
        self.size = len(group.members)
        self.events = events
        self._seq = 0
        self._subs: dict[int, Communicator] = {}

    @property
    def grid(self) -> Grid:
        return self._world.grid

    @property
    def name(self) -> str:
        return self._group.name

    @property
    def members(self) -> tuple[int, ...]:
        return self._group.members

    def __repr__(self):
        return f"Communicator({self.name!r}, rank={self.rank}, size={self.size})"

    def split(self, grid_mode: int) -> "Communicator":
        """Sub-communicator of ranks that differ from this one only along ``grid_mode``."""
        grid = self.grid
        if self._group.name != "world":
            raise InvalidMode("split is only defined on the world communicator")
        if not 0 <= grid_mode < grid.order:
            raise InvalidMode(f"grid mode {grid_mode} invalid for grid {grid.shape}")
        if grid_mode in self._subs:
            return self._subs[grid_mode]
        coords = list(grid.coords(self.world_rank))
        members = []
        for c in range(grid.shape[grid_mode]):
            coords[grid_mode] = c
            members.append(grid.rank_of(coords))
        if grid.order == 1:
            return self
        fixed = ",".join("*" if q == grid_mode else str(c) for q, c in enumerate(grid.coords(self.world_rank)))
        group = self._world.group(f"mode{grid_mode}[{fixed}]", tuple(members))
        sub = self._subs[grid_mode] = Communicator(self._world, group, self.world_rank, self.events)
        return sub

    # -- collectives --------------------------------------------------------

    def _exchange(self, kind: str, payload, root: int | None) -> list:
        """Deposit ``payload`` and return every member's payload once all have arrived."""
        world, group = self._world, self._group
        seq = self._seq
        self._seq += 1
        deadline = time.monotonic() + world.timeout
        with world.cv:
            world.wait_turn(self.world_rank)
            slot = group.slots.get(seq)
            if slot is None:
                slot = group.slots[seq] = _Slot(kind, root, self.size)
                group.arrived[seq] = set()
            elif slot.kind != kind or slot.root != root:
                err = ProgramError(
                    f"{group.name}: rank {self.rank} called {kind}(root={root}) as collective #{seq}, "
                    f"others called {slot.kind}(root={slot.root})"
                )
                world.abort(err)
                raise err
            slot.payloads[self.rank] = payload
            arrived = group.arrived[seq]
            arrived.add(self.rank)
            if len(arrived) == self.size:
                for m in group.members:
                    world.blocked.discard(m)
                world.cv.notify_all()
            else:
                world.blocked.add(self.world_rank)
                if world.serial:
                    world.pass_turn(self.world_rank)
                while len(arrived) < self.size or (world.serial and world.turn != self.world_rank):
                    if world.error is not None:
                        raise _Aborted()
                    if len(arrived) == self.size:
                        world.cv.wait()
                        continue
                    gone = [m for m in group.members if m in world.finished]
                    if gone:
                        err = DeadlockDetected(
                            f"{group.name}: {kind} #{seq} never completes; ranks {gone} already returned"
                        )
                        world.abort(err)
                        raise err
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        err = DeadlockDetected(
                            f"{group.name}: {kind} #{seq} timed out after {world.timeout}s "
                            f"with {len(arrived)}/{self.size} members"
                        )
                        world.abort(err)
                        raise err
                    world.cv.wait(remaining)
            payloads = list(slot.payloads)
            slot.taken += 1
            if slot.taken == self.size:
                del group.slots[seq]
                del group.arrived[seq]
        return payloads

    def _log(self, kind, sent, received, label):
        self.events.append(
            Event(
                rank=self.world_rank,
                seq=len(self.events),
                kind=kind,
                comm=self.name,
                comm_size=self.size,
                bytes=_nbytes(sent),
                recv_bytes=_nbytes(received),
                stage_label=label,
            )
        )

    def all_to_all(self, send: Sequence, label: str | None = None) -> list:
        """Send ``send[d]`` to member ``d``; return buffers ordered by source."""
        if len(send) != self.size:
            raise SizeMismatch(f"all_to_all needs {self.size} buffers, got {len(send)}")
        payloads = self._exchange("all_to_all", list(send), None)
        recv = [_copy(payloads[s][self.rank]) for s in range(self.size)]
        self._log("all_to_all", send, recv, label)
        return recv

    def _check_root(self, root: int) -> None:
        if not 0 <= root < self.size:
            raise InvalidRoot(f"root {root} outside communicator of size {self.size}")

    def gather(self, buffer, root: int = 0, label: str | None = None):
        """Rank-ordered concatenation of every member's buffer on ``root``; None elsewhere."""
        self._check_root(root)
        payloads = self._exchange("gather", buffer, root)
        out = None
        if self.rank == root:
            out = np.concatenate([np.ravel(np.asarray(b)) for b in payloads])
        self._log("gather", buffer, out, label)
        return out

    def scatter(self, buffers: Sequence | None, root: int = 0, label: str | None = None):
        """Member ``d`` receives ``buffers[d]`` from ``root``."""
        self._check_root(root)
        if self.rank == root and (buffers is None or len(buffers) != self.size):
            raise SizeMismatch(f"scatter needs {self.size} buffers on the root")
        payloads = self._exchange("scatter", list(buffers) if self.rank == root else None, root)
        out = _copy(payloads[root][self.rank])
        self._log("scatter", buffers if self.rank == root else None, out, label)
        return out

    def barrier(self, label: str | None = None) -> None:
        self._exchange("barrier", None, None)
        self._log("barrier", None, None, label)


def split(comm: Communicator, grid: Grid, grid_mode: int) -> Communicator:
    """Functional form of :meth:`Communicator.split`."""
    if grid != comm.grid:
        raise InvalidMode(f"grid {grid.shape} is not the communicator's grid {comm.grid.shape}")
    return comm.split(grid_mode)


def spawn(
    grid: Grid,
    program: Callable[[Communicator], Any],
    *,
    timeout: float = DEFAULT_TIMEOUT,
    serial: bool = False,
    return_events: bool = False,
):
    """Run ``program(comm)`` on every rank of ``grid``; return results ordered by rank.

    With ``return_events=True`` returns ``(results, events)`` where
    ``events[r]`` is rank ``r``'s event log. The first error raised by any
    rank is re-raised after all ranks have stopped.
    """
    if not isinstance(grid, Grid):
        grid = Grid(tuple(grid))
    world = _World(grid, timeout, serial)
    members = tuple(range(grid.p))
    wgroup = world.group("world", members)
    results: list[Any] = [None] * grid.p
    logs: list[list[Event]] = [[] for _ in members]
    errors: list[BaseException | None] = [None] * grid.p

    def run(r: int) -> None:
        try:
            with world.cv:
                world.wait_turn(r)
            results[r] = program(Communicator(world, wgroup, r, logs[r]))
        except _Aborted:
            pass
        except BaseException as exc:  # noqa: BLE001 - re-raised by spawn
            errors[r] = exc
            with world.cv:
                world.abort(exc)
        finally:
            with world.cv:
                world.finished.add(r)
                world.blocked.discard(r)
                if world.serial and world.turn == r:
                    world.pass_turn(r)
                world.cv.notify_all()

    if grid.p == 1:
        run(0)
    else:
        threads = [threading.Thread(target=run, args=(r,), name=f"rank-{r}", daemon=True) for r in members]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    if world.error is not None:
        raise world.error
    if return_events:
        return results, logs
    return results


def write_trace(events: Sequence[Sequence[Event]], path) -> None:
    """Write per-rank event logs as JSON lines, rank-major."""
    with open(path, "w", encoding="utf-8") as fh:
        for log in events:
            for ev in log:
                fh.write(json.dumps(ev.record(), sort_keys=True) + "\n")
