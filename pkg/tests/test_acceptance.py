"""End-to-end acceptance checks, one test per criterion at its stated tolerance."""

import time

import numpy as np
import pytest
from scipy.linalg import expm

from netdiffusion.design import RespectrumPlan, respectrum
from netdiffusion.dynamics import (SwitchingSchedule, consensus_value, convergence_bound, expected_trajectory,
                                   simulate_switching, spread, stationary_value_conservative)
from netdiffusion.exogenous import (Constant, LearningGains, Piecewise, check_stubborn_invertibility,
                                    dynamic_learning_trajectory, inhomogeneous_trajectory, learning_fixed_point,
                                    learning_matrix, pid_expanded_response, pid_transfer, reduce_stubborn,
                                    stubborn_steady_state, stubborn_trajectory)
from netdiffusion.graph import P1, P2, Edge, WeightedDigraph, transition_rate_matrix
from netdiffusion.mdp import (MdpConfig, converged, random_actions, run_qlearning, run_trials, state_rewards,
                              stationary_distribution)
from netdiffusion.modal import ControllerSpec, controlled_response, to_quasi
from netdiffusion.montecarlo import ExactEvent, sample_path, sample_paths
from netdiffusion.networks import asymmetric_cycle, path_graph, star_graph, symmetric_path
from netdiffusion.spectral import eigendecompose, steady_state_vectors
from strategies import random_digraph

PULSE = np.array([0, 0, 0, 0, 1.0])
IMPULSE = np.array([1.0, 0, 1.0, 0])
R2 = np.sqrt(0.5)
CYCLE_REFS = {
    P1: [0.5 * np.array([-1, 1, -1, 1]), R2 * np.array([-1, 0, 1, 0]), R2 * np.array([0, -1, 0, 1]),
         -np.sqrt(0.4) * np.array([0.5, 1, 0.5, 1])],
    P2: [np.sqrt(0.4) * np.array([-1, 0.5, -1, 0.5]), R2 * np.array([1, 0, -1, 0]), R2 * np.array([0, -1, 0, 1]),
         0.5 * np.ones(4)],
}


@pytest.mark.criterion(1, "conservative path: Monte Carlo mean vs analytic trajectory")
def test_criterion_1_monte_carlo_path():
    g = path_graph(5, 0.2)
    grid = np.arange(0.0, 16.0)
    start = time.perf_counter()
    ens = sample_paths(g, P1, PULSE, 15.0, grid, n_trials=5000, seed=0, scheme=ExactEvent())
    elapsed = time.perf_counter() - start
    Q = transition_rate_matrix(g, P1)
    ref = expected_trajectory(Q, PULSE, grid).values
    err = np.abs(ens.mean.values - ref)
    bound = 3 * ens.stderr
    exact = ens.stderr == 0
    assert np.all(err[exact] < 1e-12)
    z = err[~exact] / ens.stderr[~exact]
    print(f"criterion 1: max |z| = {z.max():.2f} over {z.size} cells, {elapsed:.1f} s")
    assert np.all(err <= bound + 1e-12)
    stationary = stationary_value_conservative(Q, PULSE)
    assert np.array_equal(np.argsort(ens.mean.final), np.argsort(stationary))
    assert elapsed < 30


@pytest.mark.criterion(2, "non-conservative path: consensus value and steady vectors")
def test_criterion_2_consensus():
    Q = transition_rate_matrix(path_graph(5, 0.2), P2)
    c = consensus_value(Q, PULSE)
    assert abs(c - 0.8003) <= 5e-4
    final = expected_trajectory(Q, PULSE, [100.0]).final
    assert np.all(np.abs(final - 0.8003) <= 1e-3)
    pair = steady_state_vectors(Q)
    assert np.all(np.abs(pair.left - [0.0016, 0.0078, 0.0392, 0.1960, 0.9798]) <= 5e-4)
    assert abs(pair.omega - 1.2244) <= 5e-4


@pytest.mark.criterion(3, "symmetric path: equal sharing under both protocols")
def test_criterion_3_symmetric_path():
    g = path_graph(5, 1.0)
    t = np.linspace(0, 50, 101)
    a = expected_trajectory(transition_rate_matrix(g, P1), PULSE, t).values
    b = expected_trajectory(transition_rate_matrix(g, P2), PULSE, t).values
    assert np.all(np.abs(a[-1] - 0.2) < 1e-6)
    assert np.all(np.abs(b[-1] - 0.2) < 1e-6)
    assert np.max(np.abs(a - b)) < 1e-10


@pytest.mark.criterion(4, "asymmetric cycle: spectrum, quasi-inputs, closed forms, integral control")
def test_criterion_4_cycle_case_study():
    expected_inputs = {P1: [-4 / 3, 0, 0, -2 * np.sqrt(5 / 18)], P2: [-2 * np.sqrt(5 / 18), 0, 0, 2 / 3]}
    for protocol in (P1, P2):
        Q = transition_rate_matrix(asymmetric_cycle(protocol), protocol)
        d = eigendecompose(Q).aligned(CYCLE_REFS[protocol])
        assert np.max(np.abs(d.eigenvalues - [-3, -2, -1, 0])) < 1e-10
        assert np.max(np.abs(to_quasi(d, IMPULSE) - expected_inputs[protocol])) < 1e-10
    Q = transition_rate_matrix(asymmetric_cycle(P1), P1)
    d = eigendecompose(Q).aligned(CYCLE_REFS[P1])
    t = np.linspace(0, 3, 301)
    values = controlled_response(d, IMPULSE, None, t).trajectory.values
    e = np.exp(-3 * t)
    odd, even = (1 + 2 * e) / 3, 2 * (1 - e) / 3
    assert np.max(np.abs(values - np.column_stack([odd, even, odd, even]))) < 1e-9
    ctrl = controlled_response(d, IMPULSE, ControllerSpec(0, "integral", 2.0), [0.0, 60.0])
    assert abs(ctrl.quasi[-1, 0]) < 1e-6


@pytest.mark.criterion(5, "star respectrum: modified matrix and identity edit")
def test_criterion_5_respectrum():
    Q = transition_rate_matrix(star_graph(5), P1)
    target = np.full((5, 5), 0.025)
    target[0, :] = target[:, 0] = 0.9
    np.fill_diagonal(target, -0.975)
    target[0, 0] = -3.6
    res = respectrum(RespectrumPlan.from_matrix(Q, {0: -4.5}))
    assert np.max(np.abs(res.Q - target)) < 1e-9
    assert res.report.valid
    same = respectrum(RespectrumPlan.from_matrix(Q, {}))
    assert np.max(np.abs(same.Q - np.asarray(Q))) < 1e-10


def anchored_graph(rng, n):
    """Random P2 graph plus a stubborn set every free agent polls directly."""
    base = random_digraph(rng, n, density=0.3)
    m = int(rng.integers(1, n // 2 + 1))
    stubborn = sorted(rng.choice(n, size=m, replace=False).tolist())
    edges = {(e.i, e.j): e for e in base.edges}
    for i in range(n):
        if i not in stubborn and not any((i, s) in edges for s in stubborn):
            s = int(rng.choice(stubborn))
            edges[(i, s)] = Edge(i, s, float(rng.uniform(0.05, 1)), float(rng.uniform(0.2, 3)))
    return WeightedDigraph(n, tuple(edges.values())), stubborn


@pytest.mark.criterion(6, "stubborn agents: invertibility, fixed point, counter-example")
def test_criterion_6_stubborn():
    rng = np.random.default_rng(2024)
    for _ in range(10):
        n = int(rng.integers(4, 9))
        g, stubborn = anchored_graph(rng, n)
        rs = reduce_stubborn(transition_rate_matrix(g, P2), stubborn, rng.random(len(stubborn)))
        check = check_stubborn_invertibility(rs, g)
        assert check.lemma_condition and check.diagonally_dominant and check.invertible
        steady = stubborn_steady_state(rs)
        assert np.allclose(steady, -np.linalg.solve(rs.Qr, rs.b))
        rate = np.max(np.linalg.eigvals(rs.Qr).real)
        final = stubborn_trajectory(rs, rng.random(len(rs.free)), [40 / abs(rate)]).final
        assert np.max(np.abs(final - steady)) < 1e-6
    rs = reduce_stubborn(transition_rate_matrix(symmetric_path(3), P2), [2], 1.0)
    check = check_stubborn_invertibility(rs, symmetric_path(3))
    assert (check.lemma_condition, check.invertible) == (False, True)
    assert np.allclose(stubborn_steady_state(rs), [1, 1], atol=1e-12)


@pytest.mark.criterion(7, "dynamic learning: spectrum shift, fixed point, PID final value")
def test_criterion_7_dynamic_learning():
    rng = np.random.default_rng(7)
    for _ in range(10):
        Q = np.asarray(transition_rate_matrix(random_digraph(rng, 6), P2))
        beta = float(rng.uniform(0.1, 2))
        shifted = np.sort_complex(np.linalg.eigvals(learning_matrix(Q, beta)))
        assert np.max(np.abs(shifted - np.sort_complex(np.linalg.eigvals(Q) - beta))) < 1e-10
        X = np.full(6, 0.4)
        assert np.max(np.abs(learning_fixed_point(Q, beta, X) - X)) < 1e-9
        tr = dynamic_learning_trajectory(Q, beta, Constant(X), rng.random(6), [60 / beta])
        assert np.max(np.abs(tr.final - X)) < 1e-9
    Q = np.asarray(transition_rate_matrix(path_graph(5, 0.2), P2))
    step = np.array([0.3, 1.0, 0.0, 0.5, 0.2])
    for gains in (LearningGains(1.0, 0.0, 0.5), LearningGains(1.0, 0.2, 0.5), LearningGains(0.5, 0.0, 2.0)):
        assert np.max(np.abs(pid_transfer(Q, gains, 1e-12) @ step - step)) < 1e-6
        X = Piecewise([0.0, 5.0], [np.zeros(5), step])
        tr = pid_expanded_response(Q, gains, X, np.zeros(5), times=[600.0])
        assert np.max(np.abs(tr.final - step)) < 1e-6
    two = np.array([[-1.0, 1.0], [1.0, -1.0]])
    tr = pid_expanded_response(two, LearningGains(1.0, 0.0, 0.5), Constant([0.6, 0.6]), np.zeros(2), times=[60.0])
    assert np.max(np.abs(tr.final - 0.6)) < 1e-6


def greedy_mass(cfg, quality, targets):
    Q_g = np.array(cfg.actions[0])
    for x, a in enumerate(quality.argmax(axis=1)):
        Q_g[:, x] = cfg.actions[a][:, x]
    return stationary_distribution(Q_g)[targets].sum()


@pytest.mark.criterion(8, "desk-scale learning: reward concentration, convergence, single-action CTMC")
def test_criterion_8_learning():
    n, targets = 10, [3, 7]
    start = time.perf_counter()
    cfg = MdpConfig(random_actions(n, 50, seed=0), state_rewards(n, 50, targets), mu=0.2, gamma=0.995,
                    epsilon=0.4, n_steps=200_000, seed=0, tracked=[(3, 0), (7, 0), (0, 0)], record_every=1000)
    results = run_trials(cfg, 20)
    mass = np.array([r.stationary[targets].sum() for r in results])
    greedy = np.array([greedy_mass(cfg, r.quality, targets) for r in results])
    curves = {p: np.mean([r.history[p] for r in results], axis=0) for p in cfg.tracked}
    proxy = {p: converged(h) for p, h in curves.items()}
    # single-action process against its own CTMC stationary law, batch means over seeds
    Q1 = cfg.actions[0]
    v0 = stationary_distribution(Q1)
    occ = np.array([run_qlearning(MdpConfig((Q1,), np.zeros((n, 1)), n_steps=50_000, seed=s)).occupancy_fraction
                    for s in range(20)])
    z = np.abs(occ.mean(axis=0) - v0) / (occ.std(axis=0, ddof=1) / np.sqrt(len(occ)))
    elapsed = time.perf_counter() - start
    print(f"criterion 8: final-Q_g mass {mass.mean():.4f} (need >= 0.24), greedy-policy mass {greedy.mean():.4f}, "
          f"uniform 0.2; convergence proxy {proxy}; occupancy max |z| {z.max():.2f}; {elapsed:.0f} s")
    assert all(proxy.values())
    assert np.all(z <= 3)
    assert elapsed < 120
    assert mass.mean() >= 0.2 * 1.2


@pytest.mark.criterion(9, "invariant suites over 50 seeded instances each")
def test_criterion_9_invariants():
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    t = np.linspace(0, 5, 11)
    for _ in range(50):
        n = int(rng.integers(3, 8))
        g = random_digraph(rng, n, 0.4)
        soft = WeightedDigraph(n, tuple(Edge(e.i, e.j, min(e.c, 0.9), e.r) for e in g.edges))
        path = sample_path(soft, P1, rng.random(n), 5.0, rng)
        assert np.max(np.abs(path.states.sum(axis=1) - path.states[0].sum())) < 1e-12
        path = sample_path(soft, P2, rng.random(n), 5.0, rng)
        prev = path.states[:-1]
        assert np.all(path.states[1:] >= prev.min(axis=1, keepdims=True) - 1e-15)
        assert np.all(path.states[1:] <= prev.max(axis=1, keepdims=True) + 1e-15)
        for protocol in (P1, P2):
            Q = np.asarray(transition_rate_matrix(g, protocol))
            d = eigendecompose(Q)
            scale = np.max(np.abs(Q))
            assert np.max(np.abs(d.reconstruct() - Q)) < 1e-9 * scale
            assert np.max(np.abs(d.right @ d.left - np.eye(n))) < 1e-8
            a, b = rng.uniform(0, 3, size=2)
            assert np.max(np.abs(expm(Q * (a + b)) - expm(Q * a) @ expm(Q * b))) < 1e-8
            S0 = rng.random(n)
            u = Piecewise([0.0, 2.0], rng.normal(size=(2, n)))
            full = inhomogeneous_trajectory(Q, S0, u, t).values
            parts = expected_trajectory(Q, S0, t).values + inhomogeneous_trajectory(Q, np.zeros(n), u, t).values
            assert np.max(np.abs(full - parts)) < 1e-10
        gs = random_digraph(rng, n, 0.4, symmetric=True)
        Qs = transition_rate_matrix(gs, P1)
        d0 = rng.normal(size=n)
        d0 -= d0.mean()
        cb = convergence_bound(Qs, d0)
        norms = np.linalg.norm(expected_trajectory(Qs, d0, t).values, axis=1)
        assert np.all(norms <= cb.bound(t) * (1 + 1e-9) + 1e-15)
        Q1, Q2 = (np.asarray(transition_rate_matrix(random_digraph(rng, n, 0.4), P2)) for _ in range(2))
        S0 = rng.random(n)
        horizon = 40 / min(abs(convergence_bound(Q1, S0).q_max), abs(convergence_bound(Q2, S0).q_max))
        final = simulate_switching(SwitchingSchedule.alternating([Q1, Q2], 0.5, horizon), S0, [horizon]).final
        assert spread(final) < 1e-6
    elapsed = time.perf_counter() - start
    print(f"criterion 9: 50 instances per suite in {elapsed:.1f} s")
    assert elapsed < 300
