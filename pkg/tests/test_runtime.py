import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distdft.distribution import Grid
from distdft.errors import DeadlockDetected, InvalidRoot, ProgramError, SizeMismatch
from distdft.runtime import spawn, split, write_trace


def test_spawn_single_rank():
    assert spawn(Grid((1,)), lambda comm: comm.rank) == [0]


@pytest.mark.parametrize("serial", [False, True])
def test_spawn_rank_squares(serial):
    assert spawn(Grid((4,)), lambda comm: comm.rank**2, serial=serial) == [0, 1, 4, 9]


@pytest.mark.parametrize("serial", [False, True])
def test_barrier_on_one_rank_deadlocks(serial):
    def program(comm):
        if comm.rank == 0:
            comm.barrier()

    with pytest.raises(DeadlockDetected):
        spawn(Grid((2,)), program, timeout=2.0, serial=serial)


def test_mismatched_collectives_are_program_errors():
    def program(comm):
        if comm.rank == 0:
            comm.barrier()
        else:
            comm.gather(np.zeros(1))

    with pytest.raises(ProgramError):
        spawn(Grid((2,)), program, timeout=2.0)


def test_timeout_deadlock():
    def program(comm):
        if comm.rank == 0:
            comm.barrier()
        else:
            import time

            time.sleep(0.5)
            comm.barrier()
            comm.barrier()

    with pytest.raises(DeadlockDetected):
        spawn(Grid((2,)), program, timeout=0.1)


def test_exceptions_propagate():
    def program(comm):
        if comm.rank == 1:
            raise KeyError("boom")
        comm.barrier()

    with pytest.raises(KeyError):
        spawn(Grid((3,)), program, timeout=2.0)


def members(grid, mode):
    return spawn(Grid(grid), lambda comm: split(comm, Grid(grid), mode).members)


def test_split_pairs():
    assert members((2, 2), 0) == [(0, 1), (0, 1), (2, 3), (2, 3)]
    assert members((2, 2), 1) == [(0, 2), (1, 3), (0, 2), (1, 3)]
    for r, m in enumerate(members((2, 2, 2), 2)):
        assert m == (r % 4, r % 4 + 4)


def test_split_on_one_dimensional_grid_is_world():
    assert spawn(Grid((3,)), lambda comm: comm.split(0) is comm) == [True] * 3


def test_all_to_all_single_rank():
    send = [np.arange(3)]
    (recv,) = spawn(Grid((1,)), lambda comm: comm.all_to_all(send))
    assert np.array_equal(recv[0], send[0])


@pytest.mark.parametrize("p", [2, 3])
@pytest.mark.parametrize("serial", [False, True])
def test_all_to_all_exchange_matrix(p, serial):
    def program(comm):
        return comm.all_to_all([np.array([10 * comm.rank + d]) for d in range(p)])

    out = spawn(Grid((p,)), program, serial=serial)
    for r in range(p):
        assert [int(b[0]) for b in out[r]] == [10 * s + r for s in range(p)]


def test_all_to_all_symmetric_send_is_involution():
    p = 3
    sym = np.arange(p * p).reshape(p, p)
    sym = sym + sym.T

    def program(comm):
        first = comm.all_to_all([np.array([sym[comm.rank, d]]) for d in range(p)])
        return comm.all_to_all(first)

    out = spawn(Grid((p,)), program)
    for r in range(p):
        assert [int(b[0]) for b in out[r]] == list(sym[r])


def test_all_to_all_size_mismatch():
    with pytest.raises(SizeMismatch):
        spawn(Grid((2,)), lambda comm: comm.all_to_all([np.zeros(1)]), timeout=2.0)


def test_gather_after_scatter_is_identity():
    data = np.arange(8.0)

    def program(comm):
        mine = comm.scatter(np.split(data, 4) if comm.rank == 2 else None, root=2)
        return comm.gather(mine, root=2)

    out = spawn(Grid((4,)), program)
    assert np.array_equal(out[2], data)
    assert out[0] is None


def test_gather_single_rank():
    (out,) = spawn(Grid((1,)), lambda comm: comm.gather(np.array([1.0, 2.0])))
    assert np.array_equal(out, [1.0, 2.0])


def test_invalid_root():
    with pytest.raises(InvalidRoot):
        spawn(Grid((2,)), lambda comm: comm.gather(np.zeros(1), root=2), timeout=2.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_scatter_gather_all_roots(p, seed):
    payload = np.random.default_rng(seed).standard_normal((p, 3))

    def program(comm):
        out = []
        for root in range(p):
            got = comm.scatter(list(payload) if comm.rank == root else None, root=root)
            out.append(comm.gather(got, root=root))
        return out

    results = spawn(Grid((p,)), program)
    for root in range(p):
        assert np.array_equal(results[root][root], payload.ravel())


def exchange_program(comm):
    sub = comm.split(0)
    a = sub.all_to_all([np.full(2, comm.world_rank + 0.5 * d) for d in range(sub.size)], label="first")
    comm.barrier(label="sync")
    b = comm.split(1).all_to_all([x * 2 for x in [np.concatenate(a)] * 3], label="second")
    return [x.tolist() for x in b]


@pytest.mark.parametrize("serial", [False, True])
def test_event_logs(serial):
    _, events = spawn(Grid((2, 3)), exchange_program, serial=serial, return_events=True)
    counts = {len(log) for log in events}
    assert counts == {3}
    for r, log in enumerate(events):
        assert [e.kind for e in log] == ["all_to_all", "barrier", "all_to_all"]
        assert [e.stage_label for e in log] == ["first", "sync", "second"]
        assert [e.comm_size for e in log] == [2, 6, 3]
        for e in log:
            # every all-to-all here sends as much as it receives
            assert e.bytes == e.recv_bytes
        # two float64 buffers of two elements
        assert log[0].bytes == 2 * 2 * 8


def test_spawn_is_deterministic_and_serial_matches_concurrent():
    runs = [spawn(Grid((2, 3)), exchange_program, serial=s, return_events=True) for s in (False, False, True)]
    for results, events in runs[1:]:
        assert results == runs[0][0]
        assert events == runs[0][1]


def test_write_trace(tmp_path):
    _, events = spawn(Grid((2, 3)), exchange_program, return_events=True)
    path = tmp_path / "trace.jsonl"
    write_trace(events, path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(lines) == 18
    assert lines[0]["rank"] == 0 and lines[-1]["rank"] == 5
    assert set(lines[0]) == {"rank", "seq", "kind", "comm", "comm_size", "bytes", "recv_bytes", "stage_label"}
