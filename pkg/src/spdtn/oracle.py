"""Ground-truth engines for small problems.

Three independent routes to ⟨0|U†OU|0⟩, used to validate the production
engines against each other: dense statevector simulation (gate by gate on
the amplitude vector), dense Heisenberg conjugation (gate by gate on the
observable matrix, in reverse circuit order), and symplectic tableau
propagation for purely Clifford circuits.  Plus exact contraction of small
tensor networks under an element-count budget.

Amplitude indexing: the state reshapes to one axis per qubit in site order,
so in the flat C-order index qubit j owns bit (n - 1 - j).
"""

from __future__ import annotations

import math

import numpy as np

from .circuits import Circuit, gate_matrix
from .clifford import CliffordTableau
from .paulis import PauliWord, PhasedWord
from .spd import PauliSum
from .tensor import CapacityError, Tensor, contract, greedy_path

__all__ = [
    "STATEVECTOR_MAX_QUBITS",
    "HEISENBERG_MAX_QUBITS",
    "CONTRACT_BUDGET",
    "statevector",
    "pauli_apply",
    "statevector_expectation",
    "word_matrix",
    "observable_matrix",
    "heisenberg_dense_expectation",
    "clifford_expectation",
    "exact_contract",
]

STATEVECTOR_MAX_QUBITS = 24
HEISENBERG_MAX_QUBITS = 12
CONTRACT_BUDGET = 200_000_000


def _as_terms(observable) -> list[tuple[PauliWord, complex]]:
    """Normalize an observable to a list of (word, coefficient) pairs."""
    if isinstance(observable, PauliWord):
        return [(observable, 1.0 + 0.0j)]
    if isinstance(observable, PauliSum):
        return list(observable.terms())
    raise TypeError(f"unsupported observable type {type(observable).__name__}")


# -- statevector route --------------------------------------------------


def statevector(circuit: Circuit, max_qubits: int = STATEVECTOR_MAX_QUBITS) -> np.ndarray:
    """Amplitudes of U|0...0> as a flat array of length 2**n.

    Each gate applies through tensordot on the per-qubit axes; the norm is
    asserted to stay at 1 within 1e-10 after every gate.
    """
    n = circuit.n
    if n > max_qubits:
        raise CapacityError(
            f"statevector needs 2**{n} amplitudes; cap is {max_qubits} qubits"
        )
    psi = np.zeros((2,) * n, dtype=complex)
    psi[(0,) * n] = 1.0
    for gate in circuit.gates():
        k = len(gate.qubits)
        m = gate_matrix(gate).reshape((2,) * (2 * k))
        psi = np.tensordot(m, psi, axes=(range(k, 2 * k), gate.qubits))
        psi = np.moveaxis(psi, range(k), gate.qubits)
        norm = float(np.linalg.norm(psi))
        assert abs(norm - 1.0) <= 1e-10, f"norm drifted to {norm} at gate {gate}"
    return psi.reshape(-1)


def pauli_apply(vec: np.ndarray, word: PauliWord) -> np.ndarray:
    """Apply a canonical-convention word, (-i)^y (prod Z)(prod X), to a
    flat statevector via index arithmetic."""
    n = word.n
    if vec.shape != (2**n,):
        raise ValueError(f"vector length {vec.shape} does not match n={n}")
    z_int = 0
    x_int = 0
    ys = 0
    for j in range(n):
        letter = word.site(j)
        if letter in ("Z", "Y"):
            z_int |= 1 << (n - 1 - j)
        if letter in ("X", "Y"):
            x_int |= 1 << (n - 1 - j)
        if letter == "Y":
            ys += 1
    idx = np.arange(2**n, dtype=np.int64)
    signs = 1.0 - 2.0 * (np.bitwise_count(idx & z_int) & 1)
    return ((-1j) ** ys) * signs * vec[idx ^ x_int]


def statevector_expectation(
    circuit: Circuit,
    observable,
    max_qubits: int = STATEVECTOR_MAX_QUBITS,
) -> float:
    """⟨0|U†OU|0⟩ by direct simulation; O is a word or a Hermitian sum."""
    psi = statevector(circuit, max_qubits)
    val = 0.0 + 0.0j
    for word, coeff in _as_terms(observable):
        val += coeff * np.vdot(psi, pauli_apply(psi, word))
    assert abs(val.imag) <= 1e-10 * max(1.0, abs(val)), f"imaginary residue {val.imag}"
    return float(val.real)


# -- dense Heisenberg route ---------------------------------------------


def word_matrix(word: PauliWord) -> np.ndarray:
    """Dense 2**n x 2**n matrix of a word (kron in site order)."""
    mats = {
        "I": np.eye(2, dtype=complex),
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    out = np.ones((1, 1), dtype=complex)
    for j in range(word.n):
        out = np.kron(out, mats[word.site(j)])
    return out


def observable_matrix(observable, n: int) -> np.ndarray:
    out = np.zeros((2**n, 2**n), dtype=complex)
    for word, coeff in _as_terms(observable):
        if word.n != n:
            raise ValueError(f"word over {word.n} sites in an n={n} observable")
        out += coeff * word_matrix(word)
    return out


def heisenberg_dense_expectation(
    circuit: Circuit,
    observable,
    max_qubits: int = HEISENBERG_MAX_QUBITS,
) -> float:
    """⟨0|U†OU|0⟩ by conjugating the dense observable backward through the
    circuit: O <- G†OG per gate, last circuit gate first."""
    n = circuit.n
    if n > max_qubits:
        raise CapacityError(
            f"dense conjugation needs 4**{n} entries; cap is {max_qubits} qubits"
        )
    op = observable_matrix(observable, n).reshape((2,) * (2 * n))
    for gate in reversed(list(circuit.gates())):
        k = len(gate.qubits)
        m = gate_matrix(gate).reshape((2,) * (2 * k))
        row_axes = list(gate.qubits)
        col_axes = [n + q for q in gate.qubits]
        # rows: O <- G† O, i.e. sum_a conj(G[a, r]) O[a, ...]
        op = np.tensordot(m.conj(), op, axes=(range(k), row_axes))
        op = np.moveaxis(op, range(k), row_axes)
        # columns: O <- O G, i.e. sum_b O[..., b] G[b, c]
        op = np.tensordot(op, m, axes=(col_axes, range(k)))
        op = np.moveaxis(op, range(2 * n - k, 2 * n), col_axes)
    val = complex(op[(0,) * (2 * n)])
    assert abs(val.imag) <= 1e-10 * max(1.0, abs(val)), f"imaginary residue {val.imag}"
    return float(val.real)


# -- Clifford tableau route ---------------------------------------------


def clifford_expectation(circuit: Circuit, observable) -> float:
    """⟨0|U†OU|0⟩ for a purely Clifford circuit, one tableau per gate.

    Each gate conjugates the observable words individually (last circuit
    gate first), so this exercises a different path than whole-circuit
    recompilation.  Gates disjoint from a word's support leave it fixed and
    are skipped.  Raises ValueError if any gate fails to fold to a
    Clifford.
    """
    n = circuit.n
    cache: dict = {}
    gates = list(reversed(list(circuit.gates())))
    val = 0.0 + 0.0j
    for word, coeff in _as_terms(observable):
        cur = PhasedWord(word, 1.0 + 0.0j)
        for g in gates:
            if all(cur.word.site(q) == "I" for q in g.qubits):
                continue
            if g not in cache:
                cache[g] = CliffordTableau.from_gates(n, [g])
            cur = cache[g].conjugate(cur)
        if cur.word.is_z_type:
            val += coeff * cur.phase
    assert abs(val.imag) <= 1e-10 * max(1.0, abs(val)), f"imaginary residue {val.imag}"
    return float(val.real)


# -- exact contraction --------------------------------------------------


def exact_contract(network, budget: int = CONTRACT_BUDGET) -> complex:
    """Contract a whole network to a scalar along a greedy path.

    Accepts a SiteNetwork or any iterable of tensors.  The largest
    intermediate is capped at ``budget`` elements; exceeding it raises
    CapacityError naming the offending contraction.
    """
    if hasattr(network, "sites"):
        tensors = [t for ts in network.sites.values() for t in ts]
    else:
        tensors = list(network)
    path = greedy_path(tensors, output=(), budget=budget)
    return complex(contract(tensors, output=(), path=path).item())
