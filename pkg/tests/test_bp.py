"""Belief propagation: tree exactness, gauges, and bond compression."""

import math

import numpy as np
import pytest

from spdtn import Tensor
from spdtn.bp import (
    DegenerateBondError,
    MessageSet,
    SiteNetwork,
    bp_iterate,
    compress_bond,
    doubled_sites,
    l1bp_value,
)
from spdtn.tensor import contract

from conftest import naive_contract, random_tree_sites


def all_tensors(sites):
    return [t for ts in sites.values() for t in ts]


class TestSiteNetwork:
    def test_structure(self, rng):
        a = Tensor(rng.standard_normal((2, 3)).astype(complex), ("ab", "ac"))
        b = Tensor(rng.standard_normal((2, 2)).astype(complex), ("ab", "bb"))
        b2 = Tensor(rng.standard_normal((2,)).astype(complex), ("bb",))
        c = Tensor(rng.standard_normal((3,)).astype(complex), ("ac",))
        sn = SiteNetwork({"A": [a], "B": [b, b2], "C": [c]})
        assert sn.dangling == ()
        assert set(sn.edges) == {("A", "B"), ("A", "C")}
        assert sn.bond_labels("B", "A") == ("ab",)
        assert sn.neighbors("A") == ["B", "C"]
        assert sn.bond_dim("A", "C") == 3
        assert sn.dims["ab"] == 2

    def test_fused_multi_label_bond(self, rng):
        a = Tensor(rng.standard_normal((2, 3)).astype(complex), ("u", "v"))
        b = Tensor(rng.standard_normal((2, 3)).astype(complex), ("u", "v"))
        sn = SiteNetwork({0: [a], 1: [b]})
        assert sn.bond_labels(0, 1) == ("u", "v")
        assert sn.bond_dim(0, 1) == 6

    def test_dangling_detected(self, rng):
        t = Tensor(rng.standard_normal((2, 2)).astype(complex), ("a", "b"))
        sn = SiteNetwork({0: [t]})
        assert sn.dangling == ("a", "b")
        with pytest.raises(ValueError, match="dangling"):
            bp_iterate(sn)

    def test_label_on_three_sites_rejected(self, rng):
        ts = [
            Tensor(rng.standard_normal((2,)).astype(complex), ("a",)) for _ in range(3)
        ]
        with pytest.raises(ValueError, match="appears 3 times"):
            SiteNetwork({0: [ts[0]], 1: [ts[1]], 2: [ts[2]]})

    def test_dimension_mismatch_rejected(self, rng):
        a = Tensor(rng.standard_normal((2,)).astype(complex), ("a",))
        b = Tensor(rng.standard_normal((3,)).astype(complex), ("a",))
        with pytest.raises(ValueError, match="mismatched"):
            SiteNetwork({0: [a], 1: [b]})

    def test_internal_label_is_not_a_bond(self, rng):
        t = Tensor(rng.standard_normal((2, 2)).astype(complex), ("a", "a"))
        sn = SiteNetwork({0: [t]})
        assert sn.edges == {}
        assert sn.dangling == ()


class TestTreeExactness:
    @pytest.mark.parametrize("seed", range(6))
    def test_small_trees_match_naive(self, seed):
        rng = np.random.default_rng(800 + seed)
        sites, _ = random_tree_sites(rng, n_sites=5, max_dim=3)
        sn = SiteNetwork(sites)
        ms = bp_iterate(sn, tol=1e-13, max_iter=100)
        assert ms.converged
        got = l1bp_value(sn, ms)
        want = naive_contract(all_tensors(sites)).item()
        assert abs(got - want) <= 1e-10 * max(1.0, abs(want))

    @pytest.mark.parametrize("seed", range(4))
    def test_larger_trees_match_contract(self, seed):
        rng = np.random.default_rng(900 + seed)
        sites, _ = random_tree_sites(rng, n_sites=12, max_dim=5)
        sn = SiteNetwork(sites)
        ms = bp_iterate(sn, tol=1e-13, max_iter=200)
        assert ms.converged
        got = l1bp_value(sn, ms)
        want = contract(all_tensors(sites)).item()
        assert abs(got - want) <= 1e-9 * max(1.0, abs(want))

    def test_two_norm_tree_is_squared_magnitude(self, rng):
        sites, _ = random_tree_sites(rng, n_sites=6, max_dim=3)
        z = contract(all_tensors(sites)).item()
        doubled = doubled_sites(sites)
        sn = SiteNetwork(doubled)
        ms = bp_iterate(sn, tol=1e-13, max_iter=200, mode="two-norm")
        assert ms.converged
        got = l1bp_value(sn, ms)
        assert abs(got - abs(z) ** 2) <= 1e-9 * max(1.0, abs(z) ** 2)

    def test_converges_from_converged_messages_in_one_round(self, rng):
        sites, _ = random_tree_sites(rng, n_sites=10, max_dim=4)
        sn = SiteNetwork(sites)
        ms = bp_iterate(sn, tol=1e-12)
        again = bp_iterate(sn, tol=1e-9, init=ms.messages)
        assert again.converged
        assert again.iterations == 1


class TestGaugeInvariance:
    def test_positive_rescaling_leaves_value(self, rng):
        sites, edges = random_tree_sites(rng, n_sites=8, max_dim=4)
        sn = SiteNetwork(sites)
        ms = bp_iterate(sn, tol=1e-13)
        base = l1bp_value(sn, ms)
        scaled = {
            key: Tensor(t.data * float(rng.uniform(0.1, 10.0)), t.inds)
            for key, t in ms.messages.items()
        }
        rescaled = l1bp_value(sn, MessageSet(scaled))
        assert abs(rescaled - base) <= 1e-12 * max(1.0, abs(base))


class TestModesAndDamping:
    def test_unknown_mode_rejected(self, rng):
        sites, _ = random_tree_sites(rng, 3)
        with pytest.raises(ValueError, match="unknown mode"):
            bp_iterate(SiteNetwork(sites), mode="three-norm")

    def test_two_norm_messages_are_hermitian_psd(self, rng):
        sites, _ = random_tree_sites(rng, n_sites=6, max_dim=3)
        sn = SiteNetwork(doubled_sites(sites))
        ms = bp_iterate(sn, tol=1e-12, mode="two-norm")
        for (src, dst), t in ms.messages.items():
            kets = sorted(l for l in t.inds if not l.endswith("*"))
            bras = [l + "*" for l in kets]
            m = t.to_matrix(kets, bras)
            np.testing.assert_allclose(m, m.conj().T, atol=1e-12)
            vals = np.linalg.eigvalsh(m)
            assert vals.min() >= -1e-10

    def test_damping_reaches_same_fixed_point(self, rng):
        sites, _ = random_tree_sites(rng, n_sites=8, max_dim=3)
        sn = SiteNetwork(sites)
        plain = l1bp_value(sn, bp_iterate(sn, tol=1e-12))
        damped_ms = bp_iterate(sn, tol=1e-12, damping=0.3, max_iter=2000)
        assert damped_ms.converged
        damped = l1bp_value(sn, damped_ms)
        assert abs(plain - damped) <= 1e-8 * max(1.0, abs(plain))

    @pytest.mark.parametrize("seed", [0, 1, 3, 4, 5])
    def test_matrix_ring_bethe_is_dominant_eigenvalue(self, seed):
        """On one cycle of matrices the exact value is the trace of the cycle
        product while converged BP keeps only its dominant eigenvalue; that
        pins the loop error exactly (seeds with eigenvalue near-degeneracy
        oscillate instead of converging and are excluded)."""
        rng = np.random.default_rng(seed)
        mats, tensors = [], {}
        for k in range(4):
            left, right = f"b{(k - 1) % 4}", f"b{k}"
            data = rng.standard_normal((2, 2)) + 0.001j * rng.standard_normal((2, 2))
            data += 2.0 * np.eye(2)
            mats.append(data)
            tensors[k] = [Tensor(data.astype(complex), (left, right))]
        sn = SiteNetwork(tensors)
        ms = bp_iterate(sn, tol=1e-12, max_iter=3000)
        assert ms.converged
        got = l1bp_value(sn, ms)
        lam = np.linalg.eigvals(mats[0] @ mats[1] @ mats[2] @ mats[3])
        lam1 = lam[np.argmax(np.abs(lam))]
        assert abs(got - lam1) <= 1e-10 * abs(lam1)


class TestL1bpValueEdges:
    def test_zero_site_numerator_returns_zero(self, rng):
        a = Tensor(np.zeros((2,), dtype=complex), ("k",))
        b = Tensor(rng.standard_normal((2,)).astype(complex), ("k",))
        sn = SiteNetwork({0: [a], 1: [b]})
        uniform = Tensor(np.ones(2, dtype=complex) / 2.0, ("k",))
        ms = MessageSet({(0, 1): uniform, (1, 0): uniform})
        assert l1bp_value(sn, ms) == 0.0j

    def test_degenerate_bond_raises(self, rng):
        a = Tensor(np.ones((2,), dtype=complex), ("k",))
        b = Tensor(np.ones((2,), dtype=complex), ("k",))
        sn = SiteNetwork({0: [a], 1: [b]})
        ms = MessageSet(
            {
                (0, 1): Tensor(np.array([1.0, 0.0], dtype=complex), ("k",)),
                (1, 0): Tensor(np.array([0.0, 1.0], dtype=complex), ("k",)),
            }
        )
        with pytest.raises(DegenerateBondError):
            l1bp_value(sn, ms)

    def test_dangling_rejected(self, rng):
        t = Tensor(rng.standard_normal((2,)).astype(complex), ("a",))
        with pytest.raises(ValueError, match="dangling"):
            l1bp_value(SiteNetwork({0: [t]}), MessageSet({}))


class TestDoubledSites:
    def test_star_convention(self, rng):
        t = Tensor(rng.standard_normal((2, 3)).astype(complex), ("bond", "out"))
        doubled = doubled_sites({0: [t]}, outer=("out",))
        assert len(doubled[0]) == 2
        ket, bra = doubled[0]
        assert ket.inds == ("bond", "out")
        assert bra.inds == ("bond*", "out")
        np.testing.assert_array_equal(bra.data, t.data.conj())

    def test_doubled_value_is_norm_square(self, rng):
        sites, _ = random_tree_sites(rng, n_sites=4, max_dim=3)
        z = naive_contract(all_tensors(sites)).item()
        doubled = doubled_sites(sites)
        got = naive_contract(all_tensors(doubled)).item()
        assert np.isclose(got, abs(z) ** 2, rtol=1e-10)


class TestCompressBond:
    def _two_site_setup(self, rng, d_out=4, d_bond=5):
        """Ket network  out0 --A-- bond --B-- out1  with exact environments."""
        a = rng.standard_normal((d_out, d_bond)) + 1j * rng.standard_normal(
            (d_out, d_bond)
        )
        b = rng.standard_normal((d_bond, d_out)) + 1j * rng.standard_normal(
            (d_bond, d_out)
        )
        ta = Tensor(a, ("out0", "k"))
        tb = Tensor(b, ("k", "out1"))
        doubled = doubled_sites({0: [ta], 1: [tb]}, outer=("out0", "out1"))
        m_01 = contract(doubled[0], output=("k", "k*"))
        m_10 = contract(doubled[1], output=("k", "k*"))
        return a, b, m_01, m_10

    def test_full_rank_is_identity(self, rng):
        # outer dims exceed the bond dim so both Gram matrices are invertible
        a, b, m_01, m_10 = self._two_site_setup(rng, d_out=6, d_bond=4)
        p_a, p_b, dw = compress_bond(m_01, m_10, chi=None, kappa=0.0, new_label="c")
        assert dw == 0.0
        assert p_a.inds == ("k", "c")
        assert p_b.inds == ("c", "k")
        prod = p_a.to_matrix(("k",), ("c",)) @ p_b.to_matrix(("c",), ("k",))
        np.testing.assert_allclose(prod, np.eye(4), atol=1e-9)

    def test_rank_deficient_bond_projects_without_error(self, rng):
        # outer dims below the bond dim: the Gram matrices have a null space,
        # the uncompressed pair is an oblique rank-4 projector, and inserting
        # it loses nothing because the null directions never held amplitude
        a, b, m_01, m_10 = self._two_site_setup(rng, d_out=4, d_bond=5)
        p_a, p_b, dw = compress_bond(m_01, m_10, chi=None, kappa=0.0, new_label="c")
        assert p_a.data.shape == (5, 4)
        pa = p_a.to_matrix(("k",), ("c",))
        pb = p_b.to_matrix(("c",), ("k",))
        np.testing.assert_allclose((a @ pa) @ (pb @ b), a @ b, atol=1e-9)

    @pytest.mark.parametrize("chi", [1, 2, 3, 4])
    def test_truncation_is_svd_optimal(self, chi, rng):
        """Inserting the rank-chi projector pair reproduces the best rank-chi
        approximation of the two-site product (exact environments)."""
        a, b, m_01, m_10 = self._two_site_setup(rng)
        p_a, p_b, dw = compress_bond(m_01, m_10, chi=chi, kappa=0.0, new_label="c")
        pa = p_a.to_matrix(("k",), ("c",))
        pb = p_b.to_matrix(("c",), ("k",))
        approx = (a @ pa) @ (pb @ b)
        full = a @ b
        u, s, vh = np.linalg.svd(full)
        best = (u[:, :chi] * s[:chi]) @ vh[:chi]
        err_got = np.linalg.norm(full - approx)
        err_best = np.linalg.norm(full - best)
        assert err_got <= err_best + 1e-9
        tail2 = float(np.sum(s[chi:] ** 2))
        assert np.isclose(dw, tail2 / float(np.sum(s**2)), atol=1e-9)
        r = pa.shape[1]
        np.testing.assert_allclose(pb @ pa, np.eye(r), atol=1e-9)

    def test_kappa_rule_drops_negligible_rank(self, rng):
        a = np.zeros((4, 3), dtype=complex)
        a[:, 0] = rng.standard_normal(4)
        a[:, 1] = 1e-9 * rng.standard_normal(4)
        ta = Tensor(a, ("out0", "k"))
        tb = Tensor(a.T.conj().copy(), ("k", "out1"))
        doubled = doubled_sites({0: [ta], 1: [tb]}, outer=("out0", "out1"))
        m_01 = contract(doubled[0], output=("k", "k*"))
        m_10 = contract(doubled[1], output=("k", "k*"))
        p_a, _, _ = compress_bond(m_01, m_10, chi=None, kappa=1e-5)
        assert p_a.data.shape[-1] == 1

    def test_dead_bond_warns_and_compresses_to_rank_zero(self):
        z = Tensor(np.zeros((2, 2), dtype=complex), ("k", "k*"))
        with pytest.warns(UserWarning, match="dead"):
            p_a, p_b, dw = compress_bond(z, z, None, 0.0)
        assert p_a.data.shape == (2, 0)
        assert p_b.data.shape == (0, 2)

    def test_label_mismatch_rejected(self, rng):
        m = Tensor(np.eye(2, dtype=complex), ("k", "k*"))
        other = Tensor(np.eye(2, dtype=complex), ("q", "q*"))
        with pytest.raises(ValueError, match="different labels"):
            compress_bond(m, other, None, 0.0)

    def test_unpaired_labels_rejected(self):
        m = Tensor(np.eye(2, dtype=complex), ("k", "q"))
        with pytest.raises(ValueError, match="star pairs"):
            compress_bond(m, m, None, 0.0)
