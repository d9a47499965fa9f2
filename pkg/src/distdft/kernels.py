"""Sequential DFT kernels.

Forward transforms use the root of unity ``exp(-2j*pi/n)`` and are unscaled;
:func:`idft` scales by ``1/n``. Every exponent is reduced modulo ``n`` before
evaluating the exponential so that large index products stay accurate.

``dft_naive`` is the definitional O(n^2) transform and serves as the oracle for
everything else. ``ct_step`` is one Cooley-Tukey factorization executed as four
explicit stages (row DFTs, twiddle scaling, transpose, row DFTs), and ``fft``
applies it recursively over a list of radices.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import EmptyInput, InvalidMode, ShapeMismatch
from .tensor import DTYPE

__all__ = [
    "roots",
    "dft_matrix",
    "dft_naive",
    "idft",
    "twiddle",
    "twiddle_entries",
    "ct_step",
    "fft",
    "factorize",
    "batch_dft_mode",
    "dftn_naive",
]


def roots(exponents: np.ndarray, n: int) -> np.ndarray:
    """``exp(-2j*pi*e/n)`` for integer exponents ``e``."""
    e = np.mod(np.asarray(exponents, dtype=np.int64), n)
    return np.exp(-2j * np.pi * e / n)


@lru_cache(maxsize=64)
def _dft_matrix(n: int) -> np.ndarray:
    j = np.arange(n, dtype=np.int64)
    w = roots(np.outer(j, j), n)
    w.setflags(write=False)
    return w


def dft_matrix(n: int) -> np.ndarray:
    """The dense ``n x n`` DFT matrix with entries ``w_n^{jk}``."""
    if n < 1:
        raise EmptyInput("DFT size must be >= 1")
    return _dft_matrix(int(n))


def dft_naive(x) -> np.ndarray:
    """Definitional DFT ``y[k] = sum_j w_n^{jk} x[j]`` by matrix-vector product."""
    x = np.asarray(x, dtype=DTYPE).reshape(-1)
    if x.size == 0:
        raise EmptyInput("cannot transform an empty vector")
    return dft_matrix(x.size) @ x


def idft(y) -> np.ndarray:
    """Inverse DFT, scaled by ``1/n``."""
    y = np.asarray(y, dtype=DTYPE).reshape(-1)
    return np.conj(dft_naive(np.conj(y))) / y.size


def twiddle_entries(rows, cols, n: int) -> np.ndarray:
    """Twiddle factors ``w_n^{l*k}`` for the outer product of index arrays."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    return np.asfortranarray(roots(np.outer(rows, cols), n))


def twiddle(n0: int, n1: int) -> np.ndarray:
    """The ``n0 x n1`` twiddle matrix, ``entries[l, k] = w_{n0*n1}^{l*k}``."""
    if n0 < 1 or n1 < 1:
        raise ShapeMismatch(f"twiddle sizes must be >= 1, got ({n0}, {n1})")
    return twiddle_entries(np.arange(n0), np.arange(n1), n0 * n1)


def _dft_last(a: np.ndarray) -> np.ndarray:
    # DFT matrix is symmetric, so a @ W transforms every row.
    return a @ dft_matrix(a.shape[-1])


def _ct_last(a: np.ndarray, n0: int, n1: int, sub0, sub1) -> np.ndarray:
    """Cooley-Tukey on the last axis of ``a`` (batched over leading axes)."""
    batch = a.shape[:-1]
    # C-order reshape puts x[m0 + n0*m1] at [..., m1, m0]
    x = np.swapaxes(a.reshape(batch + (n1, n0)), -1, -2)  # [..., m0, m1]
    t = sub1(x)  # stage I: DFT_{n1} along m1 -> [..., m0, k1]
    t = t * twiddle(n0, n1)  # stage II
    t = np.swapaxes(t, -1, -2)  # stage III -> [..., k1, m0]
    t = sub0(t)  # stage IV: DFT_{n0} along m0 -> [..., k1, k0]
    # y[k1 + n1*k0]
    return np.swapaxes(t, -1, -2).reshape(batch + (n0 * n1,))


def ct_step(x, n0: int, n1: int) -> np.ndarray:
    """One Cooley-Tukey step for ``n = n0 * n1`` with dense sub-DFTs.

    The input is read as ``X[m0, m1] = x[m0 + n0*m1]`` and the output is
    written as ``y[k1 + n1*k0]``; the result equals :func:`dft_naive`.
    """
    x = np.asarray(x, dtype=DTYPE).reshape(-1)
    if n0 < 1 or n1 < 1 or n0 * n1 != x.size:
        raise ShapeMismatch(f"{n0} * {n1} != {x.size}")
    return _ct_last(x, n0, n1, _dft_last, _dft_last)


def _fft_last(a: np.ndarray, radices: tuple[int, ...]) -> np.ndarray:
    if len(radices) == 1:
        return _dft_last(a)
    n0, rest = radices[0], radices[1:]
    n1 = a.shape[-1] // n0
    return _ct_last(a, n0, n1, _dft_last, lambda b: _fft_last(b, rest))


def factorize(n: int) -> tuple[int, ...]:
    """Prime factors of ``n`` in ascending order (``(1,)`` for ``n == 1``)."""
    if n < 1:
        raise EmptyInput("size must be >= 1")
    factors = []
    d = 2
    while d * d <= n:
        while n % d == 0:
            factors.append(d)
            n //= d
        d += 1
    if n > 1 or not factors:
        factors.append(n)
    return tuple(factors)


def _check_radices(radices: Sequence[int], n: int) -> tuple[int, ...]:
    radices = tuple(int(r) for r in radices)
    if not radices or any(r < 1 for r in radices) or int(np.prod(radices)) != n:
        raise ShapeMismatch(f"radices {radices} do not multiply to {n}")
    return radices


def fft(x, factorization: Sequence[int] | None = None) -> np.ndarray:
    """Recursive mixed-radix Cooley-Tukey FFT.

    ``factorization`` lists the radices, outermost first; it defaults to the
    prime factorization of ``len(x)``. Each radix is a dense DFT at the leaf.
    """
    x = np.asarray(x, dtype=DTYPE).reshape(-1)
    if x.size == 0:
        raise EmptyInput("cannot transform an empty vector")
    if factorization is None:
        factorization = factorize(x.size)
    return _fft_last(x, _check_radices(factorization, x.size))


def batch_dft_mode(t: np.ndarray, mode: int, factorization: Sequence[int] | None = None) -> np.ndarray:
    """Apply a 1D DFT to every line of ``t`` along ``mode``."""
    if not 0 <= mode < t.ndim:
        raise InvalidMode(f"mode {mode} invalid for order-{t.ndim} tensor")
    n = t.shape[mode]
    radices = factorize(n) if factorization is None else _check_radices(factorization, n)
    moved = np.moveaxis(np.asarray(t, dtype=DTYPE), mode, -1)
    out = _fft_last(moved, radices)
    return np.asfortranarray(np.moveaxis(out, -1, mode))


def dftn_naive(t) -> np.ndarray:
    """Multi-dimensional DFT by the dense DFT matrix of every mode.

    Used as a reference; it shares no code path with :func:`fft`.
    """
    t = np.asarray(t, dtype=DTYPE)
    for mode in range(t.ndim):
        t = np.moveaxis(np.tensordot(t, dft_matrix(t.shape[mode]), axes=([mode], [0])), -1, mode)
    return np.asfortranarray(t)
