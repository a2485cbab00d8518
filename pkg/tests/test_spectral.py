import numpy as np
import pytest
from hypothesis import given, strategies as st

from netdiffusion.errors import Defective, NoZeroEigenvalue, Reducible
from netdiffusion.graph import P1, P2, transition_rate_matrix
from netdiffusion.networks import asymmetric_cycle, path_graph, star_graph
from netdiffusion.spectral import (degenerate_basis_choice, eigendecompose, gershgorin_disks, in_gershgorin_union,
                                   is_ctmc_generator, matrix_exponential, steady_state_vectors)
from strategies import digraphs, protocols

TWO = np.array([[-1.0, 1.0], [1.0, -1.0]])


def taylor_expm(M, terms=60):
    out = np.eye(len(M))
    term = np.eye(len(M))
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


class TestDecomposition:
    def test_two_node(self):
        d = eigendecompose(TWO)
        assert np.allclose(d.eigenvalues, [-2, 0])
        assert d.steady_index == 1
        assert np.allclose(d.right[:, 1], np.ones(2) / np.sqrt(2))

    def test_cycle_spectrum_and_steady_vector(self):
        Q = transition_rate_matrix(asymmetric_cycle(P1), P1)
        d = eigendecompose(Q)
        assert np.allclose(d.eigenvalues, [-3, -2, -1, 0], atol=1e-12)
        v = np.array([0.5, 1, 0.5, 1])
        assert np.allclose(d.right[:, -1], v / np.linalg.norm(v), atol=1e-12)

    def test_jordan_block_is_defective(self):
        with pytest.raises(Defective):
            eigendecompose(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_complex_pairs_preserved(self):
        # directed 3-cycle has eigenvalues 0 and -3/2 +- i sqrt(3)/2
        Q = np.array([[-1.0, 0, 1], [1, -1, 0], [0, 1, -1]])
        d = eigendecompose(Q)
        pair = sorted(d.eigenvalues[:2], key=lambda z: z.imag)
        assert np.allclose(pair, [-1.5 - 0.5j * np.sqrt(3), -1.5 + 0.5j * np.sqrt(3)])
        assert np.allclose(d.reconstruct(), Q, atol=1e-12)

    def test_not_square(self):
        with pytest.raises(ValueError):
            eigendecompose(np.zeros((2, 3)))

    @given(digraphs(), protocols)
    def test_reconstruction_and_biorthogonality(self, g, protocol):
        Q = np.asarray(transition_rate_matrix(g, protocol))
        try:
            d = eigendecompose(Q)
        except Defective:
            return
        scale = np.max(np.abs(Q))
        assert np.max(np.abs(d.reconstruct() - Q)) < 1e-9 * scale
        assert np.allclose(d.right @ d.left, np.eye(g.n), atol=1e-8)
        assert np.allclose(np.linalg.norm(d.right, axis=0), 1.0)
        assert np.allclose(Q @ d.right, d.right * d.eigenvalues, atol=1e-8 * scale)

    @given(digraphs(), protocols)
    def test_gershgorin_containment(self, g, protocol):
        Q = np.asarray(transition_rate_matrix(g, protocol))
        for z in np.linalg.eigvals(Q):
            assert in_gershgorin_union(z, Q)

    def test_gershgorin_disks(self):
        c, r = gershgorin_disks(TWO)
        assert np.array_equal(c, [-1, -1]) and np.array_equal(r, [1, 1])


class TestExponential:
    def test_zero_time_is_identity(self):
        Q = np.asarray(transition_rate_matrix(path_graph(5, 0.2), P2))
        assert np.allclose(matrix_exponential(Q, 0.0), np.eye(5))

    def test_long_time_equilibrates(self):
        assert np.allclose(matrix_exponential(TWO, 50.0), 0.5)

    def test_cycle_matches_taylor_series(self):
        Q = np.asarray(transition_rate_matrix(asymmetric_cycle(P1), P1))
        assert np.max(np.abs(matrix_exponential(Q, 1.0) - taylor_expm(Q))) < 1e-10

    def test_negative_time(self):
        with pytest.raises(ValueError):
            matrix_exponential(TWO, -1.0)

    @given(digraphs(), protocols, st.floats(0, 3), st.floats(0, 3))
    def test_semigroup(self, g, protocol, t, u):
        Q = np.asarray(transition_rate_matrix(g, protocol))
        lhs = matrix_exponential(Q, t + u)
        assert np.allclose(lhs, matrix_exponential(Q, t) @ matrix_exponential(Q, u), atol=1e-8)

    @given(digraphs(), protocols, st.floats(0, 5))
    def test_stochastic(self, g, protocol, t):
        Q = transition_rate_matrix(g, protocol)
        P = matrix_exponential(np.asarray(Q), t)
        assert np.all(P >= -1e-12)
        axis = 0 if Q.protocol is P1 else 1
        assert np.allclose(P.sum(axis=axis), 1.0, atol=1e-10)

    def test_spectral_propagator_matches(self):
        Q = np.asarray(transition_rate_matrix(asymmetric_cycle(P2), P2))
        assert np.allclose(eigendecompose(Q).propagator(0.7), matrix_exponential(Q, 0.7), atol=1e-12)


class TestSteadyVectors:
    def test_p2_right_vector_uniform(self):
        pair = steady_state_vectors(transition_rate_matrix(asymmetric_cycle(P2), P2))
        assert np.allclose(pair.right, 0.5)
        assert pair.psi == pytest.approx(2.0)

    def test_path_left_vector(self):
        pair = steady_state_vectors(transition_rate_matrix(path_graph(5, 0.2), P2))
        assert np.allclose(pair.left, [0.0016, 0.0078, 0.0392, 0.1960, 0.9798], atol=5e-5)
        assert pair.omega == pytest.approx(1.2244, abs=5e-5)

    def test_cycle_right_vector(self):
        pair = steady_state_vectors(transition_rate_matrix(asymmetric_cycle(P1), P1))
        v = np.array([0.5, 1, 0.5, 1])
        assert np.allclose(pair.right, v / np.linalg.norm(v))
        assert np.allclose(pair.left, 0.5)

    def test_nonsingular_rejected(self):
        with pytest.raises(NoZeroEigenvalue):
            steady_state_vectors(np.array([[-2.0, 1.0], [1.0, -2.0]]))

    def test_reducible_rejected(self):
        with pytest.raises(Reducible):
            steady_state_vectors(np.zeros((3, 3)))

    @given(digraphs(), protocols)
    def test_residuals(self, g, protocol):
        Q = np.asarray(transition_rate_matrix(g, protocol))
        pair = steady_state_vectors(Q)
        assert np.allclose(Q @ pair.right, 0, atol=1e-9)
        assert np.allclose(pair.left @ Q, 0, atol=1e-9)
        assert np.linalg.norm(pair.right) == pytest.approx(1.0)
        assert np.linalg.norm(pair.left) == pytest.approx(1.0)


class TestGeneratorCheck:
    @given(digraphs(strongly_connected=False), protocols)
    def test_built_matrices_are_generators(self, g, protocol):
        assert is_ctmc_generator(transition_rate_matrix(g, protocol))

    def test_modified_star(self):
        Q = np.full((5, 5), 0.025)
        Q[0, :] = Q[:, 0] = 0.9
        np.fill_diagonal(Q, -0.975)
        Q[0, 0] = -3.6
        assert is_ctmc_generator(Q, P1)

    def test_row_sum_violation(self):
        report = is_ctmc_generator(np.array([[-1.0, 2.0], [1.0, -2.0]]), P2)
        assert not report and len(report.violations) == 2

    def test_protocol_required(self):
        with pytest.raises(ValueError):
            is_ctmc_generator(TWO)


class TestDegenerateBasis:
    def test_star_cluster_basis_is_orthonormal(self):
        Q = np.asarray(transition_rate_matrix(star_graph(5), P1))
        d = degenerate_basis_choice(Q)
        cluster = d.right[:, 1:4]
        assert np.allclose(cluster.T @ cluster, np.eye(3), atol=1e-10)
        assert np.allclose(d.reconstruct(), Q, atol=1e-12)

    def test_independent_of_solver_choice(self):
        Q = np.asarray(transition_rate_matrix(star_graph(5), P1))
        d = eigendecompose(Q)
        rng = np.random.default_rng(3)
        R, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        right = d.right.copy()
        right[:, 1:4] = right[:, 1:4] @ R
        from dataclasses import replace
        rotated = replace(d, right=right, left=np.linalg.inv(right))
        assert np.allclose(degenerate_basis_choice(rotated).right, degenerate_basis_choice(d).right, atol=1e-10)
