"""Bit-packed GF(2) linear algebra.

Matrices are stored row-major as uint8 arrays of shape (rows, ceil(ncols/8));
bit order inside a byte follows np.packbits (MSB first), so column c lives in
byte c >> 3 at bit 7 - (c & 7).
"""

from __future__ import annotations

import numpy as np
from numba import njit

POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def packed_width(ncols: int) -> int:
    return (ncols + 7) // 8


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a (rows, ncols) 0/1 array into packed bytes."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), axis=-1)


def unpack_rows(packed: np.ndarray, ncols: int) -> np.ndarray:
    """Inverse of pack_rows."""
    return np.unpackbits(packed, axis=-1, count=ncols)


def get_bit(packed: np.ndarray, col: int) -> np.ndarray:
    """Extract column `col` of a packed matrix as a 0/1 uint8 vector."""
    byte = packed[..., col >> 3]
    return (byte >> (7 - (col & 7))) & 1


def set_bit(packed: np.ndarray, row: int, col: int) -> None:
    packed[row, col >> 3] |= np.uint8(1 << (7 - (col & 7)))


@njit(cache=True)
def _rref_inplace(m: np.ndarray, ncols: int, pivot_out: np.ndarray) -> int:
    """Reduced row echelon form of a packed matrix, in place.

    Returns the rank and writes the pivot column of each pivot row into
    pivot_out (length >= min(rows, ncols)).
    """
    rows, width = m.shape
    rank = 0
    for col in range(ncols):
        byte = col >> 3
        shift = 7 - (col & 7)
        piv = -1
        for i in range(rank, rows):
            if (m[i, byte] >> shift) & 1:
                piv = i
                break
        if piv < 0:
            continue
        if piv != rank:
            for k in range(width):
                tmp = m[piv, k]
                m[piv, k] = m[rank, k]
                m[rank, k] = tmp
        for i in range(rows):
            if i != rank and ((m[i, byte] >> shift) & 1):
                for k in range(width):
                    m[i, k] ^= m[rank, k]
        pivot_out[rank] = col
        rank += 1
        if rank == rows:
            break
    return rank


def rref(packed: np.ndarray, ncols: int) -> tuple[int, np.ndarray]:
    """In-place RREF. Returns (rank, pivot_cols)."""
    pivot_out = np.empty(min(packed.shape[0], ncols), dtype=np.int64)
    rank = _rref_inplace(packed, ncols, pivot_out)
    return rank, pivot_out[:rank]


def xor_select(rows_packed: np.ndarray, select: np.ndarray) -> np.ndarray:
    """XOR of the packed rows where `select` is truthy (zero row if none)."""
    chosen = rows_packed[np.asarray(select, dtype=bool)]
    if chosen.shape[0] == 0:
        return np.zeros(rows_packed.shape[1], dtype=np.uint8)
    return np.bitwise_xor.reduce(chosen, axis=0)


def matvec(rows_packed: np.ndarray, vec_packed: np.ndarray) -> np.ndarray:
    """GF(2) product M @ v: one parity bit per packed row."""
    conj = np.bitwise_and(rows_packed, vec_packed[None, :])
    return (POPCOUNT[conj].sum(axis=1, dtype=np.int64) & 1).astype(np.uint8)


def inverse(square_packed: np.ndarray, size: int) -> np.ndarray:
    """Inverse of a size x size packed GF(2) matrix (raises if singular)."""
    aug_bits = np.zeros((size, 2 * size), dtype=np.uint8)
    aug_bits[:, :size] = unpack_rows(square_packed, size)
    aug_bits[np.arange(size), size + np.arange(size)] = 1
    aug = pack_rows(aug_bits)
    rank, pivots = rref(aug, size)
    if rank < size:
        raise np.linalg.LinAlgError("matrix is singular over GF(2)")
    inv_bits = unpack_rows(aug, 2 * size)[:, size:]
    return pack_rows(inv_bits)
