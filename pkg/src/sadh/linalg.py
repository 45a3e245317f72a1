"""Vector primitives: dot/cosine, sign binarization and Hamming distance.

Binary codes live in two forms. Training code works with float arrays of
+1/-1 entries; retrieval packs them into ``uint8`` words (bit set <=> +1)
with ``np.packbits``. :func:`pack_codes` and :func:`unpack_codes` convert
between the two without loss.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateVectorError, DimensionError, DomainError


def _as_vector(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


def _check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"length mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def inner_product(a, b) -> float:
    a, b = _as_vector(a), _as_vector(b)
    _check_same_length(a, b)
    return float(a @ b)


def cosine(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``, clamped to [-1, 1]."""
    a, b = _as_vector(a), _as_vector(b)
    _check_same_length(a, b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine of a zero-norm vector is undefined")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def row_norms(X: np.ndarray, what: str = "row") -> np.ndarray:
    """Euclidean norms of the rows of ``X``; raises if any row is all zeros."""
    norms = np.linalg.norm(X, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise DegenerateVectorError(
            f"{what} {int(bad[0])} has zero norm ({bad.size} degenerate rows in total)"
        )
    return norms


def cosine_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise cosines between rows of ``A`` (n1 x d) and ``B`` (n2 x d)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    _check_same_length(A, B)
    An = A / row_norms(A)[:, None]
    Bn = B / row_norms(B)[:, None]
    return np.clip(An @ Bn.T, -1.0, 1.0)


def sign_binarize(h) -> np.ndarray:
    """Entry-wise sign with ``sign(0) = +1``. Works on vectors and matrices."""
    h = np.asarray(h, dtype=np.float64)
    return np.where(h >= 0.0, 1.0, -1.0)


def hamming_from_inner(K: int, ip: float) -> float:
    if abs(ip) > K:
        raise DomainError(f"|inner product| = {abs(ip)} exceeds code length {K}")
    return (K - ip) / 2


def hamming_distance(a, b) -> int:
    a, b = _as_vector(a), _as_vector(b)
    _check_same_length(a, b)
    return int(np.count_nonzero((a >= 0) != (b >= 0)))


def pack_codes(codes: np.ndarray) -> np.ndarray:
    """Pack an (n, K) array of +/-1 codes into (n, ceil(K/8)) uint8 words."""
    codes = np.atleast_2d(np.asarray(codes))
    return np.packbits(codes > 0, axis=1)


def unpack_codes(packed: np.ndarray, K: int) -> np.ndarray:
    bits = np.unpackbits(np.atleast_2d(packed), axis=1, count=K)
    return np.where(bits == 1, 1.0, -1.0)


def packed_hamming(query: np.ndarray, packed: np.ndarray) -> np.ndarray:
    """Hamming distances from one packed code to every row of ``packed``."""
    if query.shape[-1] != packed.shape[-1]:
        raise DimensionError(
            f"packed width mismatch: {query.shape[-1]} vs {packed.shape[-1]} bytes"
        )
    return np.bitwise_count(np.bitwise_xor(packed, query)).sum(axis=1, dtype=np.int64)
