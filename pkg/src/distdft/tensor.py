"""Dense complex tensors in column-major layout.

A tensor here is a ``numpy.ndarray`` of dtype ``complex128``. Its flat data is
always read and written in Fortran (column-major) order, so mode 0 is the
fastest-varying index: element ``(i0, i1, ..., i_{d-1})`` sits at offset
``i0 + d0 * (i1 + d1 * (i2 + ...))``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import IndexOutOfBounds, InvalidMode, InvalidPermutation, ShapeMismatch

__all__ = [
    "as_tensor",
    "flat",
    "from_flat",
    "linearize",
    "delinearize",
    "split_mode",
    "merge_modes",
    "transpose",
    "inverse_permutation",
    "pointwise_mul",
]

DTYPE = np.complex128


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise ShapeMismatch(f"every mode size must be >= 1, got {shape}")
    return shape


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Return ``data`` as a column-major complex128 tensor.

    When ``shape`` is given, ``data`` is read as a flat column-major sequence.
    """
    arr = np.asarray(data, dtype=DTYPE)
    if shape is None:
        _check_shape(arr.shape)
        return np.asfortranarray(arr)
    shape = _check_shape(shape)
    if arr.size != int(np.prod(shape)):
        raise ShapeMismatch(f"{arr.size} values cannot fill shape {shape}")
    return from_flat(arr.reshape(-1, order="F"), shape)


def flat(t: np.ndarray) -> np.ndarray:
    """Flat column-major view (or copy) of ``t``'s data."""
    return np.ravel(t, order="F")


def from_flat(data: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    return np.asfortranarray(np.reshape(data, tuple(shape), order="F"))


def linearize(index: Sequence[int], shape: Sequence[int]) -> int:
    """Column-major offset of a multi-index."""
    if len(index) != len(shape):
        raise IndexOutOfBounds(f"index {tuple(index)} has wrong order for shape {tuple(shape)}")
    offset = 0
    stride = 1
    for i, n in zip(index, shape):
        if not 0 <= i < n:
            raise IndexOutOfBounds(f"index {tuple(index)} out of bounds for shape {tuple(shape)}")
        offset += i * stride
        stride *= n
    return offset


def delinearize(offset: int, shape: Sequence[int]) -> tuple[int, ...]:
    """Inverse of :func:`linearize`."""
    total = int(np.prod(shape)) if len(shape) else 1
    if not 0 <= offset < total:
        raise IndexOutOfBounds(f"offset {offset} out of bounds for shape {tuple(shape)}")
    index = []
    for n in shape:
        offset, i = divmod(offset, n)
        index.append(i)
    return tuple(index)


def _check_mode(t: np.ndarray, mode: int) -> None:
    if not 0 <= mode < t.ndim:
        raise InvalidMode(f"mode {mode} invalid for order-{t.ndim} tensor")


def split_mode(t: np.ndarray, mode: int, inner: int) -> np.ndarray:
    """Replace ``mode`` of size ``n`` by two modes ``(inner, n // inner)``.

    This is a pure reinterpretation of the column-major data; nothing moves.
    """
    _check_mode(t, mode)
    n = t.shape[mode]
    if inner < 1 or n % inner:
        raise ShapeMismatch(f"inner size {inner} does not divide mode {mode} of size {n}")
    shape = t.shape[:mode] + (inner, n // inner) + t.shape[mode + 1 :]
    return from_flat(flat(t), shape)


def merge_modes(t: np.ndarray, mode: int) -> np.ndarray:
    """Merge modes ``mode`` and ``mode + 1`` into one; inverse of :func:`split_mode`."""
    _check_mode(t, mode)
    _check_mode(t, mode + 1)
    shape = t.shape[:mode] + (t.shape[mode] * t.shape[mode + 1],) + t.shape[mode + 2 :]
    return from_flat(flat(t), shape)


def _check_perm(perm: Sequence[int], order: int) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(order)):
        raise InvalidPermutation(f"{perm} is not a permutation of {order} modes")
    return perm


def transpose(t: np.ndarray, perm: Sequence[int]) -> np.ndarray:
    """Materialized mode permutation: output mode ``j`` is input mode ``perm[j]``."""
    perm = _check_perm(perm, t.ndim)
    return np.asfortranarray(np.transpose(t, perm))


def inverse_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    perm = _check_perm(perm, len(perm))
    inv = [0] * len(perm)
    for j, p in enumerate(perm):
        inv[p] = j
    return tuple(inv)


def pointwise_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes {a.shape} and {b.shape} differ")
    return np.asfortranarray(np.multiply(a, b, dtype=DTYPE))
