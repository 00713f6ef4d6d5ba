"""Lattices, circuit builders, pruning, and serialization."""

import math

import numpy as np
import pytest

from spdtn import (
    Circuit,
    Gate,
    Layer,
    Lattice,
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
    parse_pauli,
    recompile,
    ring,
    run_spd,
)

from conftest import dense_gate_local, random_circuit


class TestLattices:
    def test_heavy_hex_unit_cell_is_a_12_ring(self):
        lat = heavy_hex(1, 1)
        assert lat.n == 12
        assert sorted(lat.degrees()) == [2] * 12
        # one cycle through all sites: edges form a single connected 2-regular graph
        assert len(lat.edges) == 12

    def test_heavy_hex_degree_bound(self):
        for rows, cols in [(1, 2), (2, 1), (2, 3)]:
            lat = heavy_hex(rows, cols)
            assert max(lat.degrees()) == 3
            assert len(lat.edges) == 2 * sum(
                1 for _ in _honeycomb_edge_count(rows, cols)
            )

    def test_ring_chain_grid(self):
        assert ring(5).degrees() == [2] * 5
        assert chain(4).degrees() == [1, 2, 2, 1]
        g = grid(3, 4)
        assert g.n == 12
        assert len(g.edges) == 3 * 3 + 2 * 4
        assert sorted(g.degrees()) == [2] * 4 + [3] * 6 + [4] * 2

    def test_constructor_validation(self):
        with pytest.raises(ValueError):
            ring(2)
        with pytest.raises(ValueError):
            chain(1)
        with pytest.raises(ValueError):
            grid(0, 3)
        with pytest.raises(ValueError):
            heavy_hex(0, 1)

    def test_lattice_validation(self):
        with pytest.raises(ValueError, match="self-loop"):
            Lattice(3, ((1, 1),))
        with pytest.raises(ValueError, match="out of range"):
            Lattice(3, ((0, 3),))
        with pytest.raises(ValueError, match="duplicate"):
            Lattice(3, ((0, 1), (1, 0)))

    def test_edges_normalized_sorted(self):
        lat = Lattice(4, ((3, 2), (1, 0)))
        assert lat.edges == ((0, 1), (2, 3))
        assert lat.neighbors(2) == [3]

    def test_device_127(self):
        lat = device_127()
        assert lat.n == 127
        assert len(lat.edges) == 144
        assert max(lat.degrees()) == 3
        assert min(lat.degrees()) >= 1


def _honeycomb_edge_count(rows, cols):
    """Parent honeycomb edges: every flag site subdivides one of them."""
    width = 2 * cols + 1
    for i in range(rows + 1):
        for j in range(width - 1):
            yield (i, j)
    for i in range(rows):
        for j in range(i % 2, width, 2):
            yield (i, j)


class TestLoadLattice:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "lat.txt"
        path.write_text("# comment\nn 5\n0 1\n1 2  # inline comment\n3 4\n")
        lat = load_lattice(path)
        assert lat.n == 5
        assert lat.edges == ((0, 1), (1, 2), (3, 4))

    def test_without_header_infers_n(self, tmp_path):
        path = tmp_path / "lat.txt"
        path.write_text("0 1\n1 7\n")
        assert load_lattice(path).n == 8

    @pytest.mark.parametrize(
        "text,match",
        [
            ("", "no edges"),
            ("0 1\nn 5\n", "stray 'n'"),
            ("n five\n0 1\n", "bad 'n'"),
            ("0 1 2\n", "expected 'u v'"),
            ("0 -1\n", "expected 'u v'"),
            ("n 2\n0 5\n", "out of range"),
        ],
    )
    def test_bad_files(self, tmp_path, text, match):
        path = tmp_path / "bad.txt"
        path.write_text(text)
        with pytest.raises(ValueError, match=match):
            load_lattice(path)


class TestKickedIsing:
    def test_layer_structure(self):
        lat = ring(5)
        circuit = kicked_ising(lat, steps=3, theta_h=0.4)
        assert circuit.n == 5
        assert len(circuit.layers) == 6
        assert circuit.num_steps == 3
        for t in range(3):
            rx, rzz = circuit.layers[2 * t], circuit.layers[2 * t + 1]
            assert rx.tag == "rx" and rx.step == t
            assert rzz.tag == "rzz" and rzz.step == t
            assert len(rx.gates) == 5 and len(rzz.gates) == 5
            assert all(g.name == "rx" and g.angle == 0.4 for g in rx.gates)
            assert all(
                g.name == "rzz" and g.angle == -math.pi / 2 for g in rzz.gates
            )
        assert {g.qubits for g in circuit.layers[1].gates} == set(lat.edges)

    def test_extra_x_layer(self):
        circuit = kicked_ising(ring(4), steps=2, theta_h=0.1, extra_x_layer=True)
        assert len(circuit.layers) == 5
        last = circuit.layers[-1]
        assert last.tag == "rx" and last.step == 2
        assert circuit.num_steps == 3

    def test_bad_steps(self):
        with pytest.raises(ValueError):
            kicked_ising(ring(4), steps=0, theta_h=0.1)


class TestLightcone:
    def test_prunes_disconnected_component(self):
        two_pairs = Lattice(4, ((0, 1), (2, 3)))
        circuit = kicked_ising(two_pairs, steps=2, theta_h=0.3)
        pruned = lightcone_prune(circuit, [0])
        # reverse cone of site 0 never reaches the 2-3 component
        assert pruned.num_gates == 6
        assert all(set(g.qubits) <= {0, 1} for g in pruned.gates())

    def test_prunes_gates_after_observable(self):
        layers = (
            Layer((Gate("h", (0,)),)),
            Layer((Gate("cx", (0, 1)),)),
            Layer((Gate("h", (2,)),)),  # outside the cone of {0, 1}
        )
        pruned = lightcone_prune(Circuit(3, layers), [0])
        assert [g.name for g in pruned.gates()] == ["h", "cx"]

    def test_preserves_expectation(self, rng):
        n = 6
        for _ in range(5):
            circuit = random_circuit(rng, n, depth=25)
            obs = parse_pauli("Z2", n)
            full = run_spd(recompile(circuit, obs), delta=0.0)
            pruned_c = lightcone_prune(circuit, [2])
            pruned = run_spd(recompile(pruned_c, obs), delta=0.0)
            assert abs(full.expectation - pruned.expectation) < 1e-12
            assert pruned_c.num_gates <= circuit.num_gates

    def test_idempotent(self, rng):
        circuit = random_circuit(rng, 5, depth=20)
        once = lightcone_prune(circuit, [1, 3])
        twice = lightcone_prune(once, [1, 3])
        assert once == twice

    def test_chains_within_a_layer(self):
        # gates in one layer extend the cone through shared qubits even
        # when listed after the gate that links them
        layer = Layer((Gate("cx", (0, 1)), Gate("cx", (1, 2))))
        circuit = Circuit(3, (layer,))
        pruned = lightcone_prune(circuit, [0])
        assert pruned.num_gates == 2

    def test_empty_cone(self):
        circuit = kicked_ising(chain(4), steps=1, theta_h=0.2)
        pruned = lightcone_prune(Circuit(4, ()), [0])
        assert pruned.num_gates == 0
        assert lightcone_prune(circuit, []).num_gates == 0


class TestGateMatrix:
    def test_matches_independent_dense(self, rng):
        for _ in range(30):
            n = 4
            circuit = random_circuit(rng, n, depth=1)
            gate = next(circuit.gates())
            np.testing.assert_allclose(
                gate_matrix(gate), dense_gate_local(gate), atol=1e-12
            )

    def test_unitary(self, rng):
        for _ in range(20):
            gate = next(random_circuit(rng, 4, depth=1).gates())
            m = gate_matrix(gate)
            np.testing.assert_allclose(
                m @ m.conj().T, np.eye(m.shape[0]), atol=1e-12
            )

    def test_rot_axis_off_support_raises(self):
        axis = parse_pauli("X0 Z2", 3)
        gate = Gate("rot", (0, 1), 0.5, axis)
        with pytest.raises(ValueError, match="off the gate"):
            gate_matrix(gate)


class TestGateValidation:
    def test_named_gate_rules(self):
        with pytest.raises(ValueError):
            Gate("h", (0,), angle=0.5)
        with pytest.raises(ValueError):
            Gate("cx", (0,))
        with pytest.raises(ValueError):
            Gate("cx", (1, 1))
        with pytest.raises(ValueError):
            Gate("nope", (0,))

    def test_rotation_rules(self):
        with pytest.raises(ValueError):
            Gate("rx", (0,))
        with pytest.raises(ValueError):
            Gate("rzz", (0,), 0.5)
        with pytest.raises(ValueError):
            Gate("rot", (0,), 0.5)

    def test_circuit_range_check(self):
        with pytest.raises(ValueError):
            Circuit(2, (Layer((Gate("h", (2,)),)),))


class TestJsonRoundtrip:
    def test_roundtrip(self, rng):
        circuit = random_circuit(rng, 5, depth=15)
        text = circuit_to_json(circuit)
        back = circuit_from_json(text)
        assert back == circuit

    def test_kicked_ising_roundtrip(self):
        circuit = kicked_ising(heavy_hex(1, 1), steps=2, theta_h=0.7, extra_x_layer=True)
        back = circuit_from_json(circuit_to_json(circuit))
        assert back == circuit
        assert [l.tag for l in back.layers] == [l.tag for l in circuit.layers]
        assert [l.step for l in back.layers] == [l.step for l in circuit.layers]
