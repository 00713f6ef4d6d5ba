"""Sparse Pauli dynamics: Heisenberg propagation of observable sums.

A ``PauliSum`` holds N packed words (rows, lexicographically sorted and
unique) with complex coefficients.  A rotation ``exp(-i theta sigma / 2)``
maps each stored word P that anticommutes with the axis sigma to

    a'_P      = cos(theta) a_P          (own coefficient damped)
    a'_{s^P} += i sin(theta) phase * a_P   with op(sigma) op(P) = phase op(s^P)

so each gate runs in five vectorized passes: (1) mask the anticommuting
terms and form their products sigma*P, (2) binary-search every product
against the sorted sum, (3) update coefficients of the products found and
build the missing ones as candidate new terms, (4) delete terms whose
updated magnitude fell below the threshold, (5) sort the surviving new
terms and merge the two sorted runs.  Truncation keeps |a| >= delta, so
delta = 0 keeps everything (including exact zeros).
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .clifford import RecompiledCircuit
from .paulis import (
    PauliWord,
    anticommute_mask,
    mul_rows,
    nwords64,
    pack_keys,
    parse_pauli,
)

__all__ = [
    "PauliSum",
    "SpdResult",
    "SpdCapacityError",
    "apply_rotation",
    "run_spd",
    "MAX_TERMS_ENV",
    "DEFAULT_MAX_TERMS",
]

MAX_TERMS_ENV = "SIM_MAX_TERMS"
DEFAULT_MAX_TERMS = 50_000_000

_PHASES = np.array([1.0, 1.0j, -1.0, -1.0j], dtype=np.complex128)


class SpdCapacityError(RuntimeError):
    """Raised when a gate would push the term count past the configured cap."""

    def __init__(self, needed: int, cap: int):
        super().__init__(
            f"sparse Pauli dynamics needs {needed} terms, cap is {cap} "
            f"(raise via the {MAX_TERMS_ENV} environment variable or max_terms)"
        )
        self.needed = needed
        self.cap = cap


@dataclass(frozen=True)
class PauliSum:
    """Sorted, duplicate-free packed Pauli words with complex coefficients."""

    n: int
    words: np.ndarray  # (N, 2*nw) uint64, sorted by packed key
    coeffs: np.ndarray  # (N,) complex128

    def __post_init__(self):
        words = np.asarray(self.words, dtype=np.uint64)
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if words.ndim != 2 or words.shape[1] != 2 * nwords64(self.n):
            raise ValueError(f"words shape {words.shape} does not match n={self.n}")
        if coeffs.shape != (words.shape[0],):
            raise ValueError("coefficient count does not match word count")
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "coeffs", coeffs)

    # -- construction ----------------------------------------------------

    @classmethod
    def from_terms(cls, n: int, terms: Iterable[tuple[PauliWord | str, complex]]) -> "PauliSum":
        """Build from (word-or-text, coefficient) pairs; duplicates combine."""
        nw = nwords64(n)
        rows, coeffs = [], []
        for word, coeff in terms:
            if isinstance(word, str):
                word = parse_pauli(word, n)
            if word.n != n:
                raise ValueError(f"term on {word.n} sites in an n={n} sum")
            rows.append(word.row)
            coeffs.append(coeff)
        if not rows:
            return cls(n, np.zeros((0, 2 * nw), dtype=np.uint64), np.zeros(0, np.complex128))
        words = np.array(rows, dtype=np.uint64)
        coeffs = np.array(coeffs, dtype=np.complex128)
        keys = pack_keys(words)
        order = np.argsort(keys, kind="stable")
        words, coeffs, keys = words[order], coeffs[order], keys[order]
        fresh = np.empty(len(keys), dtype=bool)
        fresh[0] = True
        fresh[1:] = keys[1:] != keys[:-1]
        group = np.cumsum(fresh) - 1
        summed = np.zeros(group[-1] + 1, dtype=np.complex128)
        np.add.at(summed, group, coeffs)
        return cls(n, words[fresh], summed)

    # -- basic queries -----------------------------------------------------

    @property
    def num_terms(self) -> int:
        return self.words.shape[0]

    @property
    def nw(self) -> int:
        return nwords64(self.n)

    def terms(self) -> Iterator[tuple[PauliWord, complex]]:
        for row, coeff in zip(self.words, self.coeffs):
            yield PauliWord(self.n, row), complex(coeff)

    def coefficient(self, word: PauliWord | str) -> complex:
        """Coefficient of one word (0 if absent), by binary search."""
        if isinstance(word, str):
            word = parse_pauli(word, self.n)
        keys = pack_keys(self.words)
        key = pack_keys(word.row[None, :])
        pos = int(np.searchsorted(keys, key[0]))
        if pos < len(keys) and keys[pos] == key[0]:
            return complex(self.coeffs[pos])
        return 0.0j

    def validate(self) -> None:
        """Assert sortedness and uniqueness of the packed words."""
        keys = pack_keys(self.words)
        if np.any(keys[1:] <= keys[:-1]):
            raise AssertionError("words are not strictly sorted")

    # -- observable functionals -------------------------------------------

    def z_type_mask(self) -> np.ndarray:
        """Terms with no X or Y factor (all x words clear)."""
        return ~self.words[:, self.nw :].any(axis=1)

    def expectation(self) -> float:
        """<0| sum |0> = sum of coefficients of z-type words.

        Every Z-only word fixes |0...0>, all others map it off-diagonal.
        The imaginary residue must stay below 1e-10 (Hermitian input).
        """
        total = complex(self.coeffs[self.z_type_mask()].sum())
        if abs(total.imag) > 1e-10 * max(1.0, abs(total.real)):
            raise ValueError(f"imaginary residue {total.imag} in expectation")
        return total.real

    def frobenius_norm(self) -> float:
        """sqrt(Tr(O' O) / 2^n) = l2 norm of the coefficient vector."""
        return float(np.linalg.norm(self.coeffs))

    def truncate(self, delta: float) -> "PauliSum":
        """Keep terms with |a| >= delta (identity at delta = 0)."""
        if delta < 0:
            raise ValueError("delta must be >= 0")
        keep = np.abs(self.coeffs) >= delta
        if keep.all():
            return self
        return PauliSum(self.n, self.words[keep], self.coeffs[keep])


def apply_rotation(
    s: PauliSum,
    axis: PauliWord,
    theta: float,
    delta: float = 0.0,
    max_terms: int | None = None,
) -> PauliSum:
    """One Heisenberg rotation update with threshold truncation."""
    if axis.n != s.n:
        raise ValueError(f"axis on {axis.n} sites, sum on {s.n}")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    nw = s.nw
    anti = anticommute_mask(s.words, axis.row)
    sin_t = np.sin(theta)
    if not anti.any():
        return s
    coeffs = s.coeffs.copy()
    if sin_t == 0.0:
        # pure +-1 Clifford content: coefficients scale by cos = +-1 only
        coeffs[anti] *= np.cos(theta)
        return PauliSum(s.n, s.words, coeffs).truncate(delta)
    prod_words, k = mul_rows(axis.row, s.words[anti])
    contrib = (1.0j * sin_t) * _PHASES[k] * s.coeffs[anti]
    coeffs[anti] *= np.cos(theta)

    keys = pack_keys(s.words)
    prod_keys = pack_keys(prod_words)
    pos = np.searchsorted(keys, prod_keys)
    pos_clip = np.minimum(pos, len(keys) - 1)
    found = keys[pos_clip] == prod_keys
    # sigma*P -> P^sigma is a bijection, so the found positions are unique
    coeffs[pos_clip[found]] += contrib[found]

    new_mask = ~found
    new_coeffs = contrib[new_mask]
    born = np.abs(new_coeffs) >= delta
    new_words = prod_words[new_mask][born]
    new_coeffs = new_coeffs[born]
    new_keys = prod_keys[new_mask][born]

    keep = np.abs(coeffs) >= delta
    old_words, old_coeffs, old_keys = s.words[keep], coeffs[keep], keys[keep]

    total = len(old_coeffs) + len(new_coeffs)
    cap = _resolve_cap(max_terms)
    if total > cap:
        raise SpdCapacityError(total, cap)
    if len(new_coeffs) == 0:
        return PauliSum(s.n, old_words, old_coeffs)

    order = np.argsort(new_keys, kind="stable")
    new_words, new_coeffs, new_keys = new_words[order], new_coeffs[order], new_keys[order]

    # one linear merge of the two sorted runs
    insert_at = np.searchsorted(old_keys, new_keys)
    merged_words = np.empty((total, 2 * nw), dtype=np.uint64)
    merged_coeffs = np.empty(total, dtype=np.complex128)
    new_dest = insert_at + np.arange(len(new_keys))
    old_dest = np.arange(len(old_keys)) + np.cumsum(
        np.bincount(insert_at, minlength=len(old_keys) + 1)
    )[: len(old_keys)]
    merged_words[new_dest] = new_words
    merged_coeffs[new_dest] = new_coeffs
    merged_words[old_dest] = old_words
    merged_coeffs[old_dest] = old_coeffs
    return PauliSum(s.n, merged_words, merged_coeffs)


def _resolve_cap(max_terms: int | None) -> int:
    if max_terms is not None:
        return max_terms
    env = os.environ.get(MAX_TERMS_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValueError(f"bad {MAX_TERMS_ENV} value {env!r}") from exc
    return DEFAULT_MAX_TERMS


@dataclass(frozen=True)
class SpdResult:
    expectation: float
    norm: float
    peak_terms: int
    final_terms: int
    num_rotations: int
    wall_time_s: float


def run_spd(
    rc: RecompiledCircuit,
    delta: float,
    max_terms: int | None = None,
) -> SpdResult:
    """Propagate the recompiled observable through all rotations.

    Rotations stored in circuit-time order apply in reverse (Heisenberg
    order: the last circuit rotation hits the observable first), each with
    threshold truncation, and the result is read out at |0...0>.
    """
    t0 = time.perf_counter()
    s = rc.transformed_observable.truncate(delta)
    peak = s.num_terms
    for rot in reversed(rc.rotations):
        s = apply_rotation(s, rot.axis, rot.angle, delta, max_terms)
        if s.num_terms > peak:
            peak = s.num_terms
    return SpdResult(
        expectation=s.expectation(),
        norm=s.frobenius_norm(),
        peak_terms=peak,
        final_terms=s.num_terms,
        num_rotations=len(rc.rotations),
        wall_time_s=time.perf_counter() - t0,
    )
