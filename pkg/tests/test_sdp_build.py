import numpy as np
import pytest

from lipchord.network import ActivationSpec, Network, gaussian_network, random_network
from lipchord.sdp import (
    DimsProfile,
    GammaLayout,
    assemble_Z,
    build_T,
    build_dims,
    build_problem,
    tau_index_set,
)
from oracles import dense_constraint_matrix, sector_quadratic_form


def sector_net(layer_sizes, seed, lo=0.3, hi=1.1):
    base = gaussian_network(layer_sizes, seed=seed, kind="relu")
    return Network(
        base.layer_sizes, base.weights, base.biases, ActivationSpec.sector(lo, hi)
    )


class TestDims:
    def test_five_equal_blocks(self):
        dims = DimsProfile.from_layer_sizes((3, 3, 3, 3, 3, 2))
        assert dims.S == (0, 3, 6, 9, 12, 15)
        assert dims.N == 15 and dims.N_f == 12
        assert dims.K == 5 and dims.m == 2

    def test_two_layer_sums(self):
        dims = DimsProfile.from_layer_sizes((2, 4, 3))
        assert dims.N == 6 and dims.N_f == 4

    def test_block_index_lookup(self):
        dims = DimsProfile.from_layer_sizes((3, 3, 3, 3, 3, 2))
        assert dims.block_index(7) == 3
        assert dims.block_index(1) == 1
        assert dims.block_index(15) == 5
        # S(k_i - 1) < i <= S(k_i) for every i
        for i in range(1, dims.N + 1):
            k = dims.block_index(i)
            assert dims.S[k - 1] < i <= dims.S[k]

    def test_from_network(self):
        dims = build_dims(random_network(10, 5, seed=0))
        assert dims.layer_sizes == (2, 10, 10, 10, 10, 2)
        assert dims.N == 42 and dims.N_f == 40


class TestTauIndexSet:
    def test_tau_zero_empty(self):
        assert tau_index_set(4, 0).pairs == ()

    def test_enumeration_matches_filter(self):
        got = tau_index_set(4, 2).pairs
        expected = tuple(
            (i, j) for i in range(1, 5) for j in range(i + 1, 5) if j - i <= 2
        )
        assert got == expected == ((1, 2), (1, 3), (2, 3), (2, 4), (3, 4))

    def test_dense_case(self):
        assert len(tau_index_set(4, 3).pairs) == 6

    def test_pair_count_formula(self):
        for n_f in (3, 5, 12):
            for tau in range(0, n_f):
                count = len(tau_index_set(n_f, tau).pairs)
                assert count == tau * n_f - tau * (tau + 1) // 2

    def test_clamp_warns(self):
        with pytest.warns(UserWarning, match="clamp"):
            iset = tau_index_set(4, 99)
        assert iset.tau == 3

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            tau_index_set(4, -1)


class TestBuildT:
    def test_diagonal_identity(self):
        layout = GammaLayout(tau_index_set(5, 0))
        T = build_T(layout, np.ones(5)).toarray()
        assert np.array_equal(T, np.eye(5))

    def test_single_difference_term(self):
        layout = GammaLayout(tau_index_set(2, 1))
        T = build_T(layout, np.array([0.0, 0.0, 1.0])).toarray()
        assert np.array_equal(T, np.array([[1.0, -1.0], [-1.0, 1.0]]))

    def test_brute_force_formula(self):
        layout = GammaLayout(tau_index_set(3, 2))
        g = np.ones(layout.n_alpha)
        T = build_T(layout, g).toarray()
        expected = np.zeros((3, 3))
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1.0
            expected += g[i] * np.outer(e, e)
        for t, (i, j) in enumerate(layout.index_set.pairs):
            e = np.zeros(3)
            e[i - 1], e[j - 1] = 1.0, -1.0
            expected += g[3 + t] * np.outer(e, e)
        assert np.allclose(T, expected, atol=1e-14)

    def test_negative_multiplier_rejected(self):
        layout = GammaLayout(tau_index_set(3, 0))
        with pytest.raises(ValueError, match="nonnegative"):
            build_T(layout, np.array([1.0, -0.1, 0.0]))

    def test_psd_for_nonnegative_multipliers(self):
        layout = GammaLayout(tau_index_set(6, 3))
        rng = np.random.default_rng(0)
        for _ in range(25):
            T = build_T(layout, rng.uniform(0, 2, layout.n_alpha)).toarray()
            assert np.linalg.eigvalsh(T).min() >= -1e-12


class TestBuildProblem:
    def test_zero_gamma_gives_output_gram_block(self):
        net = random_network(4, 4, seed=2)
        prob = build_problem(net, 0)
        Z0 = assemble_Z(prob, np.zeros(prob.d)).toarray()
        nK = net.layer_sizes[-2]
        assert np.allclose(Z0[-nK:, -nK:], net.weights[-1].T @ net.weights[-1])
        Z0[-nK:, -nK:] = 0.0
        assert not Z0.any()

    def test_relu_drops_first_quadratic_term(self):
        # With sector (0, 1) the block multiplier reduces to [[0, T], [T, -2T]],
        # so diagonal-coordinate basis matrices have no weight-row x weight-row
        # box: their support is the cross terms plus one diagonal entry.
        net = random_network(3, 3, seed=1)
        prob = build_problem(net, 0)
        dims = prob.dims
        Z0 = prob.basis_matrix(0).toarray()  # first activation coordinate
        a_box = Z0[dims.S[0] : dims.S[1], dims.S[0] : dims.S[1]]
        assert not a_box.any()
        g0 = dims.layer_sizes[0]  # its own global index (0-based)
        assert Z0[g0, g0] == -2.0

    def test_dense_formula_oracle_small_grid(self):
        rng = np.random.default_rng(3)
        for tau in (0, 1, 3):
            net = sector_net((3, 3, 3, 3, 3, 2), seed=4)
            prob = build_problem(net, tau)
            gamma = rng.uniform(0, 1.5, prob.d)
            Z = assemble_Z(prob, gamma).toarray()
            Zo = dense_constraint_matrix(
                net.weights, net.layer_sizes, prob.sector, tau, gamma
            )
            assert np.abs(Z - Zo).max() <= 1e-12

    def test_negative_tau_rejected(self):
        with pytest.raises(ValueError):
            build_problem(random_network(3, 3, seed=0), -1)

    def test_gamma_ell_basis_is_negated_input_identity(self):
        net = random_network(3, 3, seed=5)
        prob = build_problem(net, 1)
        Zl = prob.basis_matrix(prob.layout.ell_index).toarray()
        expected = np.zeros_like(Zl)
        expected[:2, :2] = -np.eye(2)
        assert np.array_equal(Zl, expected)

    def test_basis_matrices_symmetric(self):
        prob = build_problem(sector_net((2, 4, 3, 2), seed=6), 2)
        for i in range(prob.d):
            Zi = prob.basis_matrix(i).toarray()
            assert np.array_equal(Zi, Zi.T)

    def test_bias_invariance(self):
        base = random_network(4, 3, seed=7)
        biased = Network(
            base.layer_sizes,
            base.weights,
            tuple(np.full(b.shape, 0.7) for b in base.biases),
            base.activation,
        )
        p0, p1 = build_problem(base, 1), build_problem(biased, 1)
        assert np.array_equal(p0.basis_vals, p1.basis_vals)
        assert np.array_equal(p0.basis_rows, p1.basis_rows)
        assert np.array_equal(p0.basis_cols, p1.basis_cols)
        assert np.array_equal(p0.basis_col, p1.basis_col)
        assert (p0.z_aff != p1.z_aff).nnz == 0


class TestAssemble:
    def test_zero_gamma(self):
        prob = build_problem(random_network(3, 3, seed=8), 1)
        assert (assemble_Z(prob, np.zeros(prob.d)) != prob.z_aff).nnz == 0

    def test_unit_vector_linearity(self):
        prob = build_problem(sector_net((2, 3, 2), seed=9), 1)
        for i in (0, prob.d - 1):
            e = np.zeros(prob.d)
            e[i] = 1.0
            Z = assemble_Z(prob, e).toarray()
            expected = prob.z_aff.toarray() + prob.basis_matrix(i).toarray()
            assert np.allclose(Z, expected, atol=1e-14)

    def test_additivity(self):
        prob = build_problem(sector_net((2, 3, 3, 2), seed=10), 2)
        rng = np.random.default_rng(11)
        g1, g2 = rng.uniform(0, 1, prob.d), rng.uniform(0, 1, prob.d)
        lhs = (
            assemble_Z(prob, g1).toarray()
            + assemble_Z(prob, g2).toarray()
            - prob.z_aff.toarray()
        )
        rhs = assemble_Z(prob, g1 + g2).toarray()
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_length_mismatch(self):
        prob = build_problem(random_network(3, 3, seed=0), 0)
        with pytest.raises(ValueError):
            assemble_Z(prob, np.zeros(prob.d + 1))


class TestSupportContainment:
    def test_random_gamma_support_in_predicted_pattern(self):
        from lipchord.chordal import predicted_edge_set

        rng = np.random.default_rng(12)
        for kind in ("relu", "sector"):
            net = (
                random_network(3, 4, seed=13)
                if kind == "relu"
                else sector_net((3, 3, 3, 3, 2), seed=13)
            )
            prob = build_problem(net, 2)
            mask = predicted_edge_set(prob.dims, prob.tau).to_mask()
            for _ in range(200):
                Z = assemble_Z(prob, rng.uniform(0, 2, prob.d)).toarray()
                assert not Z[~mask].any()


class TestSectorSoundness:
    def test_relu_incremental_quadratic_constraint(self):
        # tau = 0, relu: random pre-activation pairs must satisfy the
        # abstraction inequality for any nonnegative diagonal multiplier.
        rng = np.random.default_rng(14)
        n_f = 12
        for _ in range(200):
            u, v = rng.standard_normal(n_f), rng.standard_normal(n_f)
            T = np.diag(rng.uniform(0, 3, n_f))
            du = u - v
            dphi = np.maximum(u, 0) - np.maximum(v, 0)
            assert sector_quadratic_form(du, dphi, T, (0.0, 1.0)) >= -1e-9

    def test_tanh_incremental_quadratic_constraint(self):
        rng = np.random.default_rng(15)
        n_f = 8
        for _ in range(200):
            u, v = rng.standard_normal(n_f), rng.standard_normal(n_f)
            T = np.diag(rng.uniform(0, 3, n_f))
            du = u - v
            dphi = np.tanh(u) - np.tanh(v)
            assert sector_quadratic_form(du, dphi, T, (0.0, 1.0)) >= -1e-9
