"""Bit-packed Pauli words and their product algebra.

An n-qubit Pauli word is a pair of bit vectors (z, x), packed little-endian
into ``ceil(n/64)`` uint64 words each and stored concatenated as
``[z-words | x-words]`` (bit ``j`` lives in word ``j // 64`` at position
``j % 64``).  Bit j of z (x) means a Z (X) factor on site j; both bits set
means a Y factor.

The operator denoted by (z, x) is the canonical Hermitian word

    (-i)^{|z & x|} * (prod_j Z_j^{z_j}) * (prod_j X_j^{x_j})

which is Hermitian, squares to the identity, and equals the standard Pauli
Y on sites where both bits are set.  Products of two canonical words carry
a phase i^k, k in {0, 1, 2, 3}; the phase is returned explicitly so callers
can fold it into complex coefficients.  Words carry no phase of their own.

Term ordering everywhere in this package is the lexicographic order of the
packed row ``[z_0, .., z_{w-1}, x_0, .., x_{w-1}]`` with each uint64 compared
numerically, which equals bytewise comparison of the big-endian serialization
produced by :func:`pack_keys`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PauliWord",
    "PhasedWord",
    "nwords64",
    "pauli_mul",
    "anticommutes",
    "parse_pauli",
    "format_pauli",
    "popcount",
    "pack_keys",
    "anticommute_mask",
    "mul_rows",
    "y_counts",
]

_PHASES = np.array([1.0, 1.0j, -1.0, -1.0j], dtype=np.complex128)


def nwords64(n: int) -> int:
    """Number of uint64 words per bit vector for n sites."""
    if n < 1:
        raise ValueError(f"need at least one site, got n={n}")
    return (n + 63) // 64


def popcount(a: np.ndarray) -> np.ndarray:
    """Set-bit count per element of a uint64 array (any shape)."""
    return np.bitwise_count(a)


def pack_keys(rows: np.ndarray) -> np.ndarray:
    """Fixed-width byte keys whose bytewise order is the packed-row order.

    ``rows`` has shape (..., 2*nw) uint64; the result has shape (...,) with
    dtype ``S{16*nw}``.  Serializing each word big-endian makes bytewise
    comparison agree with numeric word-by-word comparison.
    """
    be = np.ascontiguousarray(rows).astype(">u8")
    width = be.shape[-1] * 8
    return be.view(f"S{width}").reshape(rows.shape[:-1])


def y_counts(rows: np.ndarray) -> np.ndarray:
    """Number of Y sites (z and x both set) per packed row."""
    nw = rows.shape[-1] // 2
    return popcount(rows[..., :nw] & rows[..., nw:]).sum(axis=-1, dtype=np.int64)


@dataclass(frozen=True)
class PauliWord:
    """One n-site Pauli word as a packed (z | x) uint64 row."""

    n: int
    row: np.ndarray = field(repr=False)

    def __post_init__(self):
        nw = nwords64(self.n)
        row = np.asarray(self.row, dtype=np.uint64)
        if row.shape != (2 * nw,):
            raise ValueError(f"row shape {row.shape} does not match n={self.n}")
        row = row.copy()
        row.setflags(write=False)
        object.__setattr__(self, "row", row)

    @classmethod
    def identity(cls, n: int) -> "PauliWord":
        return cls(n, np.zeros(2 * nwords64(n), dtype=np.uint64))

    @classmethod
    def from_sites(cls, n: int, z=(), x=()) -> "PauliWord":
        """Build from site index iterables; a site in both z and x is a Y."""
        nw = nwords64(n)
        row = np.zeros(2 * nw, dtype=np.uint64)
        for block, sites in ((0, z), (nw, x)):
            for j in sites:
                if not 0 <= j < n:
                    raise ValueError(f"site {j} out of range for n={n}")
                row[block + (j >> 6)] |= np.uint64(1) << np.uint64(j & 63)
        return cls(n, row)

    @property
    def nw(self) -> int:
        return nwords64(self.n)

    def site(self, j: int) -> str:
        """Letter at site j: one of 'I', 'X', 'Y', 'Z'."""
        if not 0 <= j < self.n:
            raise ValueError(f"site {j} out of range for n={self.n}")
        w, b = j >> 6, np.uint64(j & 63)
        z = int(self.row[w] >> b) & 1
        x = int(self.row[self.nw + w] >> b) & 1
        return "IXZY"[x + 2 * z]

    @property
    def weight(self) -> int:
        """Number of non-identity sites."""
        return int(popcount(self.row[: self.nw] | self.row[self.nw :]).sum())

    def support(self) -> tuple[int, ...]:
        """Sites carrying a non-identity factor, ascending."""
        mask = self.row[: self.nw] | self.row[self.nw :]
        sites = []
        for w in range(self.nw):
            bits = int(mask[w])
            while bits:
                low = bits & -bits
                sites.append(64 * w + low.bit_length() - 1)
                bits ^= low
        return tuple(sites)

    @property
    def is_z_type(self) -> bool:
        """True when the word has no X or Y factor (all x bits clear)."""
        return not self.row[self.nw :].any()

    @property
    def key(self) -> bytes:
        return pack_keys(self.row).item()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PauliWord)
            and self.n == other.n
            and bool(np.array_equal(self.row, other.row))
        )

    def __hash__(self) -> int:
        return hash((self.n, self.key))

    def __str__(self) -> str:
        return format_pauli(self) or "I"

    def __repr__(self) -> str:
        return f"PauliWord(n={self.n}, '{format_pauli(self)}')"


@dataclass(frozen=True)
class PhasedWord:
    """A canonical word together with a unit phase (one of 1, i, -1, -i)."""

    word: PauliWord
    phase: complex

    def __repr__(self) -> str:
        return f"PhasedWord({self.phase!r} * {format_pauli(self.word)!r})"


def anticommute_mask(rows: np.ndarray, row: np.ndarray) -> np.ndarray:
    """Boolean mask of packed rows that anticommute with ``row``.

    Two words anticommute iff popcount(a.z & b.x) + popcount(a.x & b.z)
    is odd.
    """
    nw = row.shape[0] // 2
    zx = popcount(rows[..., :nw] & row[nw:]).sum(axis=-1, dtype=np.int64)
    xz = popcount(rows[..., nw:] & row[:nw]).sum(axis=-1, dtype=np.int64)
    return ((zx + xz) & 1).astype(bool)


def mul_rows(left: np.ndarray, rights: np.ndarray):
    """Products ``op(left) @ op(rights[k])`` for a batch of packed rows.

    Returns ``(prod_rows, k)`` with ``op(left) op(r) = i^k op(left ^ r)``.
    The exponent follows from counting Y-normalization factors on each
    operand and the product plus the X-past-Z swaps:

        k = y(c) - y(left) - y(r) + 2 * |left.x & r.z|   (mod 4)
    """
    nw = left.shape[0] // 2
    prod = rights ^ left
    swaps = popcount(rights[..., :nw] & left[nw:]).sum(axis=-1, dtype=np.int64)
    k = y_counts(prod) - y_counts(left) - y_counts(rights) + 2 * swaps
    return prod, np.mod(k, 4)


def pauli_mul(a: PauliWord, b: PauliWord) -> PhasedWord:
    """Product of two canonical words: ``op(a) op(b) = phase * op(c)``."""
    if a.n != b.n:
        raise ValueError(f"site counts differ: {a.n} != {b.n}")
    prod, k = mul_rows(a.row, b.row[None, :])
    return PhasedWord(PauliWord(a.n, prod[0]), complex(_PHASES[k[0]]))


def anticommutes(a: PauliWord, b: PauliWord) -> bool:
    """True when the two words anticommute."""
    if a.n != b.n:
        raise ValueError(f"site counts differ: {a.n} != {b.n}")
    return bool(anticommute_mask(a.row[None, :], b.row)[0])


_TOKEN = re.compile(r"([XYZ])(\d+)\Z")


def parse_pauli(text: str, n: int) -> PauliWord:
    """Parse whitespace-separated site tokens like ``"X0 Y3 Z62"``.

    Letters are X, Y, Z (case sensitive); the empty string is the identity.
    Raises ValueError naming the offending token position for a bad letter,
    an out-of-range index, or a repeated site.
    """
    nw = nwords64(n)
    row = np.zeros(2 * nw, dtype=np.uint64)
    seen: set[int] = set()
    for pos, tok in enumerate(text.split()):
        m = _TOKEN.match(tok)
        if m is None:
            raise ValueError(f"bad Pauli token {tok!r} at position {pos}")
        letter, j = m.group(1), int(m.group(2))
        if j >= n:
            raise ValueError(f"site {j} out of range for n={n} (token {pos})")
        if j in seen:
            raise ValueError(f"site {j} repeated (token {pos})")
        seen.add(j)
        w, bit = j >> 6, np.uint64(1) << np.uint64(j & 63)
        if letter in ("Z", "Y"):
            row[w] |= bit
        if letter in ("X", "Y"):
            row[nw + w] |= bit
    return PauliWord(n, row)


def format_pauli(word: PauliWord) -> str:
    """Inverse of :func:`parse_pauli`; identity formats as the empty string."""
    out = []
    for j in range(word.n):
        letter = word.site(j)
        if letter != "I":
            out.append(f"{letter}{j}")
    return " ".join(out)
