"""Heisenberg-picture expectation values of Pauli observables under
Clifford-plus-rotation circuits, via sparse Pauli dynamics and
belief-propagation tensor networks, with exact small-scale oracles."""

from .bench import (
    ComparisonReport,
    ConvergenceReport,
    LoopErrorReport,
    ResultRow,
    RunConfig,
    compare,
    convergence_report,
    loop_error_histogram,
    read_rows,
    report_all,
    run_point,
    sweep,
)
from .bp import (
    MessageSet,
    SiteNetwork,
    bp_iterate,
    compress_bond,
    doubled_sites,
    l1bp_value,
)
from .circuits import (
    Circuit,
    Gate,
    Lattice,
    Layer,
    chain,
    circuit_from_json,
    circuit_to_json,
    device_127,
    gate_matrix,
    grid,
    heavy_hex,
    kicked_ising,
    lightcone_prune,
    load_lattice,
    ring,
)
from .clifford import CliffordTableau, RecompiledCircuit, Rotation, fold_angle, recompile
from .oracle import (
    clifford_expectation,
    exact_contract,
    heisenberg_dense_expectation,
    pauli_apply,
    statevector,
    statevector_expectation,
)
from .paulis import (
    PauliWord,
    PhasedWord,
    anticommutes,
    format_pauli,
    parse_pauli,
    pauli_mul,
)
from .spd import (
    MAX_TERMS_ENV,
    PauliSum,
    SpdCapacityError,
    SpdResult,
    apply_rotation,
    run_spd,
)
from .tensor import CapacityError, Tensor, contract, greedy_path, truncated_svd
from .tn import BpOptions, EvolvingState, TnResult, run_tn

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "PauliWord",
    "PhasedWord",
    "PauliSum",
    "pauli_mul",
    "anticommutes",
    "parse_pauli",
    "format_pauli",
    "CliffordTableau",
    "Rotation",
    "RecompiledCircuit",
    "recompile",
    "fold_angle",
    "SpdResult",
    "SpdCapacityError",
    "MAX_TERMS_ENV",
    "apply_rotation",
    "run_spd",
    "Gate",
    "Layer",
    "Circuit",
    "Lattice",
    "heavy_hex",
    "ring",
    "chain",
    "grid",
    "load_lattice",
    "device_127",
    "kicked_ising",
    "lightcone_prune",
    "gate_matrix",
    "circuit_to_json",
    "circuit_from_json",
    "Tensor",
    "CapacityError",
    "contract",
    "greedy_path",
    "truncated_svd",
    "SiteNetwork",
    "MessageSet",
    "doubled_sites",
    "bp_iterate",
    "l1bp_value",
    "compress_bond",
    "BpOptions",
    "EvolvingState",
    "TnResult",
    "run_tn",
    "statevector",
    "pauli_apply",
    "statevector_expectation",
    "heisenberg_dense_expectation",
    "clifford_expectation",
    "exact_contract",
    "RunConfig",
    "ResultRow",
    "run_point",
    "sweep",
    "read_rows",
    "ConvergenceReport",
    "convergence_report",
    "report_all",
    "ComparisonReport",
    "compare",
    "LoopErrorReport",
    "loop_error_histogram",
]
