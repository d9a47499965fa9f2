import cmath

import numpy as np
import pytest


def dft3_triple_sum(x):
    """3D DFT straight from the definition, one output element at a time."""
    n0, n1, n2 = x.shape
    out = np.zeros(x.shape, dtype=complex)
    for k0 in range(n0):
        for k1 in range(n1):
            for k2 in range(n2):
                acc = 0j
                for m0 in range(n0):
                    for m1 in range(n1):
                        for m2 in range(n2):
                            phase = m0 * k0 / n0 + m1 * k1 / n1 + m2 * k2 / n2
                            acc += x[m0, m1, m2] * cmath.exp(-2j * cmath.pi * phase)
                out[k0, k1, k2] = acc
    return out


def dft_einsum(x):
    """Separable DFT via explicit exponent matrices, one einsum per mode."""
    y = np.asarray(x, dtype=complex)
    for axis, n in enumerate(y.shape):
        k = np.arange(n)
        w = np.exp(-2j * np.pi * np.outer(k, k) / n)
        y = np.moveaxis(np.tensordot(w, y, axes=([1], [axis])), 0, axis)
    return y


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_layout(rng, max_order=4):
    """Random (shape, dist, grid) with every grid mode of size > 1 in use."""
    grid = tuple(int(v) for v in rng.integers(1, 4, size=rng.integers(1, 4)))
    order = int(rng.integers(2, max_order + 1))
    groups = [[] for _ in range(order)]
    for q in rng.permutation(len(grid)):
        if grid[q] == 1 and rng.random() < 0.3:
            continue
        groups[int(rng.integers(order))].append(int(q))
    return grid, groups


def _group_size(group, grid):
    return int(np.prod([grid[q] for q in group], dtype=np.int64))


def random_redist_case(rng):
    """Random ``(shape, src, dst, grid)`` where ``dst`` moves one grid mode of ``src``.

    The moved grid mode is the last entry of its group on both sides, which is
    the supported single all-to-all pattern. Returns ``dst == src`` when no
    grid mode can move.
    """
    from distdft.distribution import TensorDistribution

    grid, groups = random_layout(rng)
    order = len(groups)
    movable = [g[-1] for g in groups if g]
    dst_groups = [list(g) for g in groups]
    if movable:
        q = movable[int(rng.integers(len(movable)))]
        src_mode = next(m for m, g in enumerate(groups) if g and g[-1] == q)
        targets = [m for m in range(order) if m != src_mode]
        dst_mode = targets[int(rng.integers(len(targets)))]
        dst_groups[src_mode].pop()
        dst_groups[dst_mode].append(q)
    shape = tuple(
        int(np.lcm(_group_size(a, grid), _group_size(b, grid))) * int(rng.integers(1, 3))
        for a, b in zip(groups, dst_groups)
    )
    src = TensorDistribution(tuple(tuple(g) for g in groups))
    dst = TensorDistribution(tuple(tuple(g) for g in dst_groups))
    return shape, src, dst, grid


# -- acceptance summary ----------------------------------------------------------

_CRITERIA: list[tuple[str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None and (report.when == "call" or (report.when == "setup" and not report.passed)):
        _CRITERIA.append((marker.args[0], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _CRITERIA:
        verdict = {"passed": "PASS", "skipped": "SKIP"}.get(outcome, "FAIL")
        terminalreporter.write_line(f"{verdict}  {name}")
