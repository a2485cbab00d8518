import numpy as np
import pytest
from hypothesis import given, strategies as st

from netdiffusion.errors import Defective, Disconnected, UnstableClosedLoop
from netdiffusion.graph import P1, P2, build_graph, generate_random_graph, transition_rate_matrix
from netdiffusion.modal import (ControllerSpec, controlled_response, fiedler_analysis, from_quasi,
                                subsumed_quasi_input, subsumed_response, symmetrized_laplacian, to_quasi)
from netdiffusion.networks import asymmetric_cycle, symmetric_path
from netdiffusion.spectral import eigendecompose
from strategies import digraphs, protocols

IMPULSE = [1.0, 0, 1.0, 0]
R = np.sqrt(0.5)
REFS = {
    P1: [0.5 * np.array([-1, 1, -1, 1]), R * np.array([-1, 0, 1, 0]), R * np.array([0, -1, 0, 1]),
         -np.sqrt(0.4) * np.array([0.5, 1, 0.5, 1])],
    P2: [np.sqrt(0.4) * np.array([-1, 0.5, -1, 0.5]), R * np.array([1, 0, -1, 0]), R * np.array([0, -1, 0, 1]),
         0.5 * np.ones(4)],
}


def cycle(protocol):
    Q = transition_rate_matrix(asymmetric_cycle(protocol), protocol)
    return Q, eigendecompose(Q).aligned(REFS[protocol])


class TestQuasiCoordinates:
    def test_aligned_vectors_match_references(self):
        for protocol in (P1, P2):
            _, d = cycle(protocol)
            assert np.allclose(d.right, np.column_stack(REFS[protocol]), atol=1e-12)

    def test_cycle_quasi_inputs_p1(self):
        _, d = cycle(P1)
        assert np.allclose(to_quasi(d, IMPULSE), [-4 / 3, 0, 0, -2 * np.sqrt(5 / 18)], atol=1e-12)

    def test_cycle_quasi_inputs_p2(self):
        _, d = cycle(P2)
        assert np.allclose(to_quasi(d, IMPULSE), [-2 * np.sqrt(5 / 18), 0, 0, 2 / 3], atol=1e-12)

    def test_eigenvector_maps_to_indicator(self):
        _, d = cycle(P1)
        for k in range(4):
            assert np.allclose(to_quasi(d, d.right[:, k]), np.eye(4)[k], atol=1e-12)
            assert np.allclose(from_quasi(d, np.eye(4)[k]), d.right[:, k])

    @given(digraphs(), protocols, st.integers(0, 2**32 - 1))
    def test_round_trip(self, g, protocol, seed):
        try:
            d = eigendecompose(transition_rate_matrix(g, protocol))
        except Defective:
            return
        x = np.random.default_rng(seed).normal(size=g.n)
        assert np.allclose(from_quasi(d, to_quasi(d, x)), x, atol=1e-10)

    def test_quasi_outputs_to_closed_form(self):
        _, d = cycle(P1)
        for t in (0.0, 0.4, 2.0):
            s = [-4 / 3 * np.exp(-3 * t), 0, 0, -2 * np.sqrt(5 / 18)]
            e = np.exp(-3 * t)
            assert np.allclose(from_quasi(d, s), [(1 + 2 * e) / 3, 2 * (1 - e) / 3] * 2, atol=1e-12)


class TestControlledResponse:
    def test_no_control_closed_form(self):
        Q, d = cycle(P1)
        t = np.linspace(0, 3, 31)
        r = controlled_response(d, IMPULSE, None, t)
        e = np.exp(-3 * t)
        assert np.allclose(r.trajectory.values[:, 0], (1 + 2 * e) / 3, atol=1e-12)
        # settling time constant 1/3: the transient is down by e at t = 1/3
        early = controlled_response(d, IMPULSE, None, [0.0, 1 / 3]).trajectory.values[:, 0] - 1 / 3
        assert early[1] / early[0] == pytest.approx(np.exp(-1))

    def test_integral_control_zeroes_mode(self):
        _, d = cycle(P1)
        r = controlled_response(d, IMPULSE, ControllerSpec(0, "integral", 2.0), [0.0, 40.0])
        assert abs(r.quasi[-1, 0]) < 1e-12
        assert np.allclose(r.trajectory.final, from_quasi(d, [0, 0, 0, r.quasi[-1, 3]]), atol=1e-12)

    @pytest.mark.parametrize("K", [-1.0, 1.0])
    def test_proportional_scalar_mode(self, K):
        _, d = cycle(P1)
        t = np.linspace(0, 2, 21)
        r = controlled_response(d, IMPULSE, ControllerSpec(0, "proportional", K), t)
        assert np.allclose(r.quasi[:, 0], -4 / 3 * np.exp((-3 - K) * t), atol=1e-12)

    def test_unstable_loop(self):
        _, d = cycle(P1)
        with pytest.raises(UnstableClosedLoop):
            controlled_response(d, IMPULSE, ControllerSpec(0, "proportional", -4.0), [1.0])

    def test_marginal_loop_flagged(self):
        _, d = cycle(P1)
        r = controlled_response(d, IMPULSE, ControllerSpec(0, "proportional", -3.0), [1.0])
        assert r.marginal == (0,)

    @given(digraphs(), protocols, st.integers(0, 2**32 - 1))
    def test_modes_decouple_without_control(self, g, protocol, seed):
        try:
            d = eigendecompose(transition_rate_matrix(g, protocol))
        except Defective:
            return
        x = np.random.default_rng(seed).random(g.n)
        t = np.linspace(0, 3, 7)
        r = controlled_response(d, x, None, t)
        s0 = d.left @ x
        assert np.allclose(r.quasi, np.exp(np.outer(t, d.eigenvalues)) * s0, atol=1e-8)

    def test_controller_locality(self):
        _, d = cycle(P2)
        t = np.linspace(0, 3, 7)
        free = controlled_response(d, IMPULSE, None, t).quasi
        ctrl = controlled_response(d, IMPULSE, ControllerSpec(0, "integral", 1.5), t).quasi
        assert np.allclose(np.delete(free, 0, axis=1), np.delete(ctrl, 0, axis=1), atol=1e-14)

    def test_conservation_under_integral_control(self):
        Q, d = cycle(P1)
        S0 = np.array([0.2, 0.3, 0.1, 0.4])
        r = controlled_response(d, IMPULSE, ControllerSpec(0, "integral", 2.0), [60.0], S0=S0)
        assert r.trajectory.final.sum() == pytest.approx(S0.sum() + sum(IMPULSE), abs=1e-10)

    def test_duplicate_mode_rejected(self):
        _, d = cycle(P1)
        with pytest.raises(ValueError):
            controlled_response(d, IMPULSE, [ControllerSpec(0, "proportional", 1),
                                             ControllerSpec(0, "integral", 1)], [1.0])

    def test_multiple_controllers(self):
        _, d = cycle(P1)
        t = np.linspace(0, 2, 5)
        specs = [ControllerSpec(0, "proportional", 1.0), ControllerSpec(2, "proportional", 0.5)]
        r = controlled_response(d, [1, 0, 0, 2], specs, t)
        s0 = d.left @ np.array([1.0, 0, 0, 2])
        assert np.allclose(r.quasi[:, 0], s0[0] * np.exp(-4 * t))
        assert np.allclose(r.quasi[:, 2], s0[2] * np.exp(-1.5 * t))

    def test_parse(self):
        assert ControllerSpec.parse("p:1.5", 2) == ControllerSpec(2, "proportional", 1.5)
        assert ControllerSpec.parse("I:2", 0) == ControllerSpec(0, "integral", 2.0)
        assert ControllerSpec.parse("none", 1).kind == "none"
        with pytest.raises(ValueError):
            ControllerSpec.parse("d:1", 0)


class TestSubsumption:
    def test_zero_gain_is_identity(self):
        f = subsumed_quasi_input(ControllerSpec(0, "proportional", 0.0), -3.0)
        assert f.order == 0 and f.realized_transfer(1.3) == 1.0

    @pytest.mark.parametrize("kind,K", [("proportional", 1.0), ("proportional", -2.0), ("integral", 0.7)])
    def test_realization_matches_laplace_form(self, kind, K):
        f = subsumed_quasi_input(ControllerSpec(0, kind, K), -3.0)
        for s in (0.5, 1 + 2j, -0.2 + 0.1j):
            assert f.realized_transfer(s) == pytest.approx(f.transfer(s), rel=1e-12)

    def test_equivalence_on_cycle(self):
        for protocol in (P1, P2):
            _, d = cycle(protocol)
            t = np.linspace(0, 4, 41)
            for spec in (ControllerSpec(0, "proportional", 1.0), ControllerSpec(0, "integral", 2.0),
                         ControllerSpec(1, "proportional", 0.5)):
                a = controlled_response(d, IMPULSE, spec, t).trajectory.values
                b = subsumed_response(d, IMPULSE, spec, t).trajectory.values
                assert np.allclose(a, b, atol=1e-8)

    def test_scalar_closed_form(self):
        _, d = cycle(P1)
        t = np.linspace(0, 2, 11)
        r = subsumed_response(d, IMPULSE, ControllerSpec(0, "proportional", 1.0), t)
        assert np.allclose(r.quasi[:, 0], -4 / 3 * np.exp(-4 * t), atol=1e-12)

    @given(digraphs(), protocols, st.floats(0.1, 3), st.sampled_from(["proportional", "integral"]))
    def test_equivalence_property(self, g, protocol, K, kind):
        try:
            d = eigendecompose(transition_rate_matrix(g, protocol))
        except Defective:
            return
        if np.iscomplexobj(d.eigenvalues) and abs(d.eigenvalues[0].imag) > 0:
            return
        spec = ControllerSpec(0, kind, K)
        t = np.linspace(0, 3, 7)
        x = np.arange(1.0, g.n + 1)
        a = controlled_response(d, x, spec, t).trajectory.values
        b = subsumed_response(d, x, spec, t).trajectory.values
        assert np.allclose(a, b, atol=1e-8)

    def test_scope_all_filters_every_mode(self):
        _, d = cycle(P1)
        spec = ControllerSpec(0, "proportional", 1.0)
        r = subsumed_response(d, IMPULSE, spec, [0.0, 1.0], scope="all")
        assert r.trajectory.values.shape == (2, 4)
        with pytest.raises(ValueError):
            subsumed_response(d, IMPULSE, spec, [1.0], scope="some")


class TestFiedler:
    def test_path_three(self):
        res = fiedler_analysis(symmetric_path(3))
        assert np.allclose(res.vector, np.array([1, 0, -1]) / np.sqrt(2))
        assert res.eigenvalue == pytest.approx(1.0) and not res.degenerate

    def test_complete_graph_degenerate(self):
        g = build_graph(4, [(i, j) for i in range(4) for j in range(4) if i != j])
        res = fiedler_analysis(g)
        assert res.degenerate and res.eigenvalue == pytest.approx(4.0)
        assert res.variance == pytest.approx(np.var(res.vector))

    def test_disconnected(self):
        with pytest.raises(Disconnected):
            fiedler_analysis(build_graph(3, [(0, 1), (1, 0)]))

    def test_symmetrized_laplacian_balanced(self):
        from netdiffusion.graph import laplacian
        g = build_graph(3, [(0, 1, 1.0, 2.0), (1, 2, 1.0, 2.0), (2, 0, 1.0, 2.0)])
        L = laplacian(g, "out")
        assert np.allclose(symmetrized_laplacian(g), (L + L.T) / 2)

    @given(digraphs(strongly_connected=False))
    def test_symmetrized_laplacian_rows_sum_to_zero(self, g):
        L = symmetrized_laplacian(g)
        assert np.allclose(L, L.T) and np.allclose(L.sum(axis=1), 0, atol=1e-12)

    def test_clustered_network_has_wider_spread(self):
        ws = fiedler_analysis(generate_random_graph("watts-strogatz", 400, 1, k=10, p=0.05))
        er = fiedler_analysis(generate_random_graph("erdos-renyi", 400, 1, p=10 / 399))
        assert ws.spread > er.spread
        assert ws.value_range > er.value_range or ws.spread > 5 * er.spread
