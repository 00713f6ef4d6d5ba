"""Clifford tableaus and circuit recompilation.

A tableau stores the Heisenberg images ``C' P C`` (with ``C'`` the adjoint)
of the 2n generators: row j is the image of X_j, row n+j the image of Z_j,
each a canonical Pauli word with a sign in {+1, -1}.

``recompile`` rewrites a Clifford + Pauli-rotation circuit as an equivalent
sequence of pure Pauli rotations followed by one residual Clifford: it scans
the circuit once in circuit-time order, keeping a single accumulated tableau
of all Clifford content seen so far; every rotation angle is folded to
``theta = theta' + k*pi/2`` with ``theta'`` in (-pi/4, pi/4], the ``k*pi/2``
part is absorbed into the tableau as a Clifford, and the surviving rotation
axis is conjugated through the accumulated tableau (an axis picking up a -1
sign flips the angle instead).  The final tableau transforms the observable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .circuits import Circuit
from .paulis import (
    PauliWord,
    PhasedWord,
    anticommutes,
    mul_rows,
    nwords64,
    parse_pauli,
    y_counts,
)

__all__ = [
    "CliffordTableau",
    "Rotation",
    "RecompiledCircuit",
    "fold_angle",
    "recompile",
]

_PHASES = np.array([1.0, 1.0j, -1.0, -1.0j], dtype=np.complex128)

# Heisenberg images of the named 1- and 2-qubit Clifford gates, as
# (letters-on-support, sign) keyed by the generator's letters-on-support.
_GATE_IMAGES = {
    "h": {"X": ("Z", 1), "Z": ("X", 1)},
    "s": {"X": ("Y", -1), "Z": ("Z", 1)},
    "sdg": {"X": ("Y", 1), "Z": ("Z", 1)},
    "x": {"X": ("X", 1), "Z": ("Z", -1)},
    "y": {"X": ("X", -1), "Z": ("Z", -1)},
    "z": {"X": ("X", -1), "Z": ("Z", 1)},
    "cx": {
        "XI": ("XX", 1),
        "IX": ("IX", 1),
        "ZI": ("ZI", 1),
        "IZ": ("ZZ", 1),
    },
    "cz": {
        "XI": ("XZ", 1),
        "IX": ("ZX", 1),
        "ZI": ("ZI", 1),
        "IZ": ("IZ", 1),
    },
}


def _iter_bits(block: np.ndarray):
    """Ascending site indices of set bits in a packed bit-vector block."""
    for w, word in enumerate(block):
        v = int(word)
        base = w << 6
        while v:
            low = v & -v
            yield base + low.bit_length() - 1
            v ^= low


class CliffordTableau:
    """Heisenberg generator images of an n-site Clifford unitary."""

    __slots__ = ("n", "words", "signs")

    def __init__(self, n: int, words: np.ndarray, signs: np.ndarray):
        self.n = n
        self.words = np.asarray(words, dtype=np.uint64)
        self.signs = np.asarray(signs, dtype=np.int8)
        nw = nwords64(n)
        if self.words.shape != (2 * n, 2 * nw) or self.signs.shape != (2 * n,):
            raise ValueError("tableau arrays have wrong shape")

    @classmethod
    def identity(cls, n: int) -> "CliffordTableau":
        nw = nwords64(n)
        words = np.zeros((2 * n, 2 * nw), dtype=np.uint64)
        for j in range(n):
            words[j, nw + (j >> 6)] = np.uint64(1) << np.uint64(j & 63)
            words[n + j, j >> 6] = np.uint64(1) << np.uint64(j & 63)
        return cls(n, words, np.ones(2 * n, dtype=np.int8))

    @classmethod
    def from_gates(cls, n: int, gates: Iterable) -> "CliffordTableau":
        """Accumulate named Clifford gates and rotations whose angles fold to
        pure Cliffords (k*pi/2); any other angle raises."""
        acc = cls.identity(n)
        for g in gates:
            if g.is_clifford:
                acc._absorb_named(g.name, g.qubits)
            else:
                theta_p, k = fold_angle(g.angle)
                if theta_p != 0.0:
                    raise ValueError(f"gate {g} is not Clifford (residual angle {theta_p})")
                acc._absorb_half_turns(g.axis_word(n), k)
        return acc

    def copy(self) -> "CliffordTableau":
        return CliffordTableau(self.n, self.words.copy(), self.signs.copy())

    # -- conjugation ---------------------------------------------------

    def _conjugate_row(self, row: np.ndarray) -> tuple[np.ndarray, complex]:
        """Image of the canonical word ``row``, as (packed row, unit phase)."""
        nw = nwords64(self.n)
        acc = np.zeros(2 * nw, dtype=np.uint64)
        phase = complex((-1.0j) ** int(y_counts(row)))
        # Z-group images first, then X-group, matching the canonical form
        # (-i)^y prod_j Z_j^{z_j} prod_j X_j^{x_j}.
        for gen_base, block in ((self.n, row[:nw]), (0, row[nw:])):
            for j in _iter_bits(block):
                g = gen_base + j
                prod, k = mul_rows(acc, self.words[g][None, :])
                phase *= float(self.signs[g]) * complex(_PHASES[k[0]])
                acc = prod[0]
        return acc, phase

    def conjugate(self, p: PauliWord | PhasedWord) -> PhasedWord:
        """Heisenberg image of a (phased) word under this tableau."""
        if isinstance(p, PhasedWord):
            word, in_phase = p.word, p.phase
        else:
            word, in_phase = p, 1.0 + 0.0j
        if word.n != self.n:
            raise ValueError(f"site counts differ: {word.n} != {self.n}")
        row, phase = self._conjugate_row(word.row)
        return PhasedWord(PauliWord(self.n, row), in_phase * phase)

    # -- composition ---------------------------------------------------

    def compose(self, other: "CliffordTableau") -> "CliffordTableau":
        """Composite tableau with ``conjugate(a.compose(b), p) ==
        conjugate(b, conjugate(a, p))``: a's conjugation applies first."""
        if self.n != other.n:
            raise ValueError("site counts differ")
        words = np.empty_like(self.words)
        signs = np.empty_like(self.signs)
        for g in range(2 * self.n):
            row, phase = other._conjugate_row(self.words[g])
            words[g] = row
            signs[g] = _unit_to_sign(phase * float(self.signs[g]))
        return CliffordTableau(self.n, words, signs)

    def inverse(self) -> "CliffordTableau":
        """Tableau of the adjoint Clifford, via GF(2) elimination on the
        symplectic bit matrix plus a sign fix-up per generator."""
        n, nw = self.n, nwords64(self.n)
        width = 128 * nw
        # each image row as a big int; augmented with the combination marker
        rows = [
            (int.from_bytes(self.words[g].astype("<u8").tobytes(), "little"), 1 << g)
            for g in range(2 * n)
        ]
        pivots: dict[int, tuple[int, int]] = {}
        for vec, comb in rows:
            for bit in range(width):
                if not (vec >> bit) & 1:
                    continue
                if bit in pivots:
                    pv, pc = pivots[bit]
                    vec ^= pv
                    comb ^= pc
                else:
                    pivots[bit] = (vec, comb)
                    break
            else:
                if vec:
                    raise AssertionError("singular tableau")
        words = np.empty_like(self.words)
        signs = np.empty_like(self.signs)
        ident = CliffordTableau.identity(n)
        for g in range(2 * n):
            vec = int.from_bytes(ident.words[g].astype("<u8").tobytes(), "little")
            comb = 0
            for bit in range(width):
                if (vec >> bit) & 1:
                    pv, pc = pivots[bit]
                    vec ^= pv
                    comb ^= pc
            if vec:
                raise AssertionError("tableau image space is not full rank")
            row = np.zeros(2 * nw, dtype=np.uint64)
            for h in range(2 * n):
                if (comb >> h) & 1:
                    row ^= ident.words[h]
            _, phase = self._conjugate_row(row)
            words[g] = row
            signs[g] = _unit_to_sign(phase)
        return CliffordTableau(n, words, signs)

    def validate(self) -> None:
        """Check the symplectic condition: generator images preserve all
        pairwise (anti)commutation relations."""
        n = self.n
        ident = CliffordTableau.identity(n)

        def pairs(t):
            ws = [PauliWord(n, t.words[g]) for g in range(2 * n)]
            return [
                anticommutes(ws[a], ws[b])
                for a in range(2 * n)
                for b in range(a + 1, 2 * n)
            ]

        if pairs(self) != pairs(ident):
            raise AssertionError("tableau violates the symplectic condition")

    # -- in-place gate absorption (builder API) ------------------------

    def _absorb_named(self, name: str, qubits: tuple[int, ...]) -> None:
        """Append gate G (later in circuit time): images of the affected
        generators become conj_acc(conj_G(generator))."""
        table = _GATE_IMAGES[name]
        updates = []
        for pos, q in enumerate(qubits):
            for letter, gen_base in (("X", 0), ("Z", self.n)):
                key = "".join(
                    letter if k == pos else "I" for k in range(len(qubits))
                )
                out_letters, sign = table[key]
                tokens = " ".join(
                    f"{lt}{qubits[k]}" for k, lt in enumerate(out_letters) if lt != "I"
                )
                row, phase = self._conjugate_row(parse_pauli(tokens, self.n).row)
                updates.append((gen_base + q, row, _unit_to_sign(phase * sign)))
        for g, row, sign in updates:
            self.words[g] = row
            self.signs[g] = sign

    def _absorb_half_turns(self, axis: PauliWord, k: int) -> None:
        """Append the Clifford ``exp(-i (k*pi/2) axis / 2)``.

        Only generators anticommuting with the axis change:
        g -> i^k (axis g)^{k odd} with  U' g U = i^{m+k} op(axis ^ g)  for
        odd k (m the product exponent) and g -> -g for k = 2.
        """
        k %= 4
        if k == 0:
            return
        nw = nwords64(self.n)
        sites = sorted(set(_iter_bits(axis.row[:nw])) | set(_iter_bits(axis.row[nw:])))
        updates = []
        for j in sites:
            # X_j anticommutes with the axis iff the axis has a z bit at j;
            # Z_j iff it has an x bit there.
            for gen_base, block in ((0, axis.row[:nw]), (self.n, axis.row[nw:])):
                if not (int(block[j >> 6]) >> (j & 63)) & 1:
                    continue
                g = gen_base + j
                if k == 2:
                    updates.append((g, self.words[g].copy(), -self.signs[g]))
                    continue
                prod, m = mul_rows(axis.row, _generator_row(self.n, g)[None, :])
                local_phase = complex(_PHASES[(int(m[0]) + k) % 4])
                row, phase = self._conjugate_row(prod[0])
                updates.append((g, row, _unit_to_sign(local_phase * phase)))
        for g, row, sign in updates:
            self.words[g] = row
            self.signs[g] = sign


def _generator_row(n: int, g: int) -> np.ndarray:
    """Packed row of generator g (X_{g} for g < n, else Z_{g-n})."""
    nw = nwords64(n)
    row = np.zeros(2 * nw, dtype=np.uint64)
    j = g if g < n else g - n
    block = nw if g < n else 0
    row[block + (j >> 6)] = np.uint64(1) << np.uint64(j & 63)
    return row


def _unit_to_sign(phase: complex) -> int:
    if abs(phase - 1.0) < 1e-9:
        return 1
    if abs(phase + 1.0) < 1e-9:
        return -1
    raise AssertionError(f"expected a +-1 phase, got {phase}")


def fold_angle(theta: float) -> tuple[float, int]:
    """Fold to ``theta = theta' + k*pi/2`` with theta' in (-pi/4, pi/4].

    Residual angles within 1e-12 of zero snap to exactly 0.0 so pure
    Clifford rotations drop cleanly.
    """
    half = math.pi / 2
    k = math.ceil((theta - math.pi / 4) / half)
    theta_p = theta - k * half
    if theta_p <= -math.pi / 4:
        theta_p += half
        k -= 1
    elif theta_p > math.pi / 4 + 1e-12:
        theta_p -= half
        k += 1
    if abs(theta_p) < 1e-12:
        theta_p = 0.0
    return theta_p, k


@dataclass(frozen=True)
class Rotation:
    axis: PauliWord
    angle: float


@dataclass(frozen=True)
class RecompiledCircuit:
    """Rotations in circuit-time order plus the residual Clifford.

    Applying the rotations (in order) and then the residual Clifford to a
    state reproduces the original circuit's action.  Heisenberg evolution
    of an observable therefore applies ``transformed_observable`` first and
    the rotations in reverse order (last circuit rotation first).
    """

    n: int
    rotations: tuple[Rotation, ...]
    residual_clifford: CliffordTableau
    transformed_observable: "object"  # spd.PauliSum


def recompile(circuit: Circuit, observable) -> RecompiledCircuit:
    """Fold all Clifford content of a circuit into one tableau.

    ``observable`` is a ``spd.PauliSum`` (or a single ``PauliWord``, wrapped
    with coefficient 1).  Rotation angles fold to (-pi/4, pi/4]; axes are
    conjugated through the Clifford content earlier in circuit time; folded
    k*pi/2 parts and all named Cliffords accumulate in the tableau, which
    finally transforms the observable.
    """
    from .spd import PauliSum

    n = circuit.n
    acc = CliffordTableau.identity(n)
    rotations: list[Rotation] = []
    for gate in circuit.gates():
        if gate.is_clifford:
            acc._absorb_named(gate.name, gate.qubits)
            continue
        axis = gate.axis_word(n)
        theta_p, k = fold_angle(gate.angle)
        if theta_p != 0.0:
            pw = acc.conjugate(axis)
            sign = _unit_to_sign(pw.phase)
            rotations.append(Rotation(pw.word, sign * theta_p))
        if k % 4:
            acc._absorb_half_turns(axis, k)
    if isinstance(observable, PauliWord):
        observable = PauliSum.from_terms(n, [(observable, 1.0)])
    new_terms = []
    for word, coeff in observable.terms():
        pw = acc.conjugate(word)
        new_terms.append((pw.word, coeff * pw.phase))
    transformed = PauliSum.from_terms(n, new_terms)
    return RecompiledCircuit(n, tuple(rotations), acc, transformed)
