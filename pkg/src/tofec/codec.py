"""Systematic MDS codec over GF(2^8) with strip batching.

A file of ``K`` strips (``b`` bytes each) is encoded into ``N`` strips. Any
``K`` strips reconstruct it. Grouping ``m`` consecutive strips into one chunk
turns the same coded file into an ``(N/m, K/m)`` chunk-level code, so one
stored object serves several chunk sizes.

Strip and chunk indices are 0-based here; the CLI prints them 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

PRIMITIVE_POLY = 0x11D  # x^8 + x^4 + x^3 + x^2 + 1
FIELD_SIZE = 256


class CodecError(ValueError):
    pass


def _build_tables() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    exp = np.zeros(2 * FIELD_SIZE, np.uint8)
    log = np.zeros(FIELD_SIZE, np.int64)
    x = 1
    for i in range(FIELD_SIZE - 1):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIMITIVE_POLY
    exp[FIELD_SIZE - 1 : 2 * FIELD_SIZE - 2] = exp[: FIELD_SIZE - 1]
    a = np.arange(FIELD_SIZE)
    mul = exp[(log[a][:, None] + log[a][None, :]) % (FIELD_SIZE - 1)].astype(np.uint8)
    mul[0, :] = 0
    mul[:, 0] = 0
    return exp, log, mul


EXP, LOG, MUL = _build_tables()


def gf_mul(a: int, b: int) -> int:
    return int(MUL[a, b])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return int(EXP[(FIELD_SIZE - 1 - LOG[a]) % (FIELD_SIZE - 1)])


def gf_pow(a: int, e: int) -> int:
    if e == 0:
        return 1
    if a == 0:
        return 0
    return int(EXP[(LOG[a] * e) % (FIELD_SIZE - 1)])


def gf_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Product of two small matrices over GF(256)."""
    out = np.zeros((A.shape[0], B.shape[1]), np.uint8)
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            if A[i, j]:
                out[i] ^= MUL[A[i, j], B[j]]
    return out


def gf_inverse(M: np.ndarray) -> np.ndarray:
    """Gauss-Jordan inverse over GF(256); raises `CodecError` if singular."""
    n = M.shape[0]
    A = np.concatenate([M.astype(np.uint8), np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if A[r, col]), None)
        if pivot is None:
            raise CodecError("singular matrix")
        if pivot != col:
            A[[col, pivot]] = A[[pivot, col]]
        A[col] = MUL[gf_inv(int(A[col, col])), A[col]]
        for r in range(n):
            if r != col and A[r, col]:
                A[r] ^= MUL[A[r, col], A[col]]
    return A[:, n:].copy()


def vandermonde(rows: int, cols: int) -> np.ndarray:
    """``V[i, j] = i^j`` over GF(256) with distinct evaluation points 0..rows-1."""
    return np.array([[gf_pow(i, j) for j in range(cols)] for i in range(rows)], np.uint8)


def systematic_generator(N: int, K: int) -> np.ndarray:
    V = vandermonde(N, K)
    return gf_matmul(V, gf_inverse(V[:K]))


def combine(coeffs: np.ndarray, strips: np.ndarray) -> np.ndarray:
    """Rows of ``coeffs @ strips`` over GF(256); `strips` is (K, b) uint8."""
    out = np.zeros((coeffs.shape[0], strips.shape[1]), np.uint8)
    for i in range(coeffs.shape[0]):
        acc = out[i]
        for j in range(coeffs.shape[1]):
            c = coeffs[i, j]
            if c == 1:
                acc ^= strips[j]
            elif c:
                acc ^= MUL[c][strips[j]]
    return out


@dataclass(frozen=True)
class StripCode:
    """An (N, K) systematic MDS code on strips of `strip_size` bytes."""

    K: int
    N: int
    strip_size: int
    generator: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.K <= self.N:
            raise CodecError(f"need 1 <= K <= N, got K={self.K}, N={self.N}")
        if self.N > FIELD_SIZE:
            raise CodecError(f"N={self.N} exceeds the field size {FIELD_SIZE}")
        if self.strip_size < 1:
            raise CodecError("strip_size must be >= 1 byte")
        G = systematic_generator(self.N, self.K)
        G.setflags(write=False)
        object.__setattr__(self, "generator", G)

    @property
    def data_size(self) -> int:
        return self.K * self.strip_size

    @property
    def coded_size(self) -> int:
        return self.N * self.strip_size


def encode(code: StripCode, data: bytes) -> bytes:
    if len(data) != code.data_size:
        raise CodecError(f"expected {code.data_size} bytes (K*b), got {len(data)}")
    strips = np.frombuffer(data, np.uint8).reshape(code.K, code.strip_size)
    parity = combine(code.generator[code.K :], strips)
    return bytes(data) + parity.tobytes()


def decode(code: StripCode, strips: Sequence[tuple[int, bytes]]) -> bytes:
    """Rebuild the data from the first K of the supplied ``(index, strip)`` pairs."""
    seen: set[int] = set()
    for idx, payload in strips:
        if not 0 <= idx < code.N:
            raise CodecError(f"strip index {idx} out of range [0, {code.N})")
        if idx in seen:
            raise CodecError(f"duplicate strip index {idx}")
        if len(payload) != code.strip_size:
            raise CodecError(f"strip {idx} has {len(payload)} bytes, expected {code.strip_size}")
        seen.add(idx)
    if len(strips) < code.K:
        raise CodecError(f"insufficient strips: have {len(strips)}, need {code.K}")
    used = list(strips[: code.K])
    idx = [i for i, _ in used]
    if idx == list(range(code.K)):
        return b"".join(p for _, p in used)
    rows = np.stack([np.frombuffer(p, np.uint8) for _, p in used])
    inv = gf_inverse(code.generator[idx])
    return combine(inv, rows).tobytes()


@dataclass(frozen=True)
class ChunkView:
    index: int
    strips_per_chunk: int
    offset: int
    length: int

    @property
    def strip_indices(self) -> range:
        m = self.strips_per_chunk
        return range(self.index * m, (self.index + 1) * m)


def strips_per_chunk(code: StripCode, chunk_size: int) -> int:
    if chunk_size <= 0 or chunk_size % code.strip_size:
        raise CodecError(f"chunk size {chunk_size} is not a multiple of the strip size {code.strip_size}")
    m = chunk_size // code.strip_size
    if code.N % m:
        raise CodecError(f"strips per chunk m={m} does not divide N={code.N}")
    if code.K % m:
        raise CodecError(f"strips per chunk m={m} does not divide K={code.K}")
    return m


def chunk_ranges(code: StripCode, chunk_size: int) -> list[ChunkView]:
    """Byte ranges of the ``N/m`` chunks of size `chunk_size` in the coded file."""
    m = strips_per_chunk(code, chunk_size)
    return [ChunkView(i, m, i * chunk_size, chunk_size) for i in range(code.N // m)]


def decode_chunks(code: StripCode, chunk_size: int, chunks: Sequence[tuple[int, bytes]]) -> bytes:
    """Rebuild the data from any ``K/m`` chunks of size `chunk_size`."""
    m = strips_per_chunk(code, chunk_size)
    b = code.strip_size
    strips = []
    for ci, payload in chunks:
        if len(payload) != chunk_size:
            raise CodecError(
                f"chunk {ci} has {len(payload)} bytes; all chunks must be {chunk_size} bytes"
            )
        if not 0 <= ci < code.N // m:
            raise CodecError(f"chunk index {ci} out of range [0, {code.N // m})")
        strips.extend((ci * m + j, payload[j * b : (j + 1) * b]) for j in range(m))
    need = code.K // m
    if len(chunks) < need:
        raise CodecError(f"insufficient chunks: have {len(chunks)}, need {need}")
    return decode(code, strips)


def strip_size_for(chunk_sizes: Iterable[int]) -> int:
    """Largest strip size that divides every desired chunk size."""
    sizes = list(chunk_sizes)
    if not sizes or any(s <= 0 for s in sizes):
        raise CodecError("chunk sizes must be positive")
    return reduce(math.gcd, sizes)


def pad(data: bytes, code: StripCode) -> bytes:
    if len(data) > code.data_size:
        raise CodecError(f"file of {len(data)} bytes exceeds K*b = {code.data_size}")
    return bytes(data) + bytes(code.data_size - len(data))
