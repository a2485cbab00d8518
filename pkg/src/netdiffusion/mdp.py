"""Tabular Q-learning over network structures.

States are agents, actions are candidate rate matrices.  Whenever the
process enters a state the agent picks an action and splices the
matching column (conservative) or row (non-conservative) of that action
into the grand matrix ``Q_g`` which drives the next jump.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AbsorbingState, BadParams, DimensionMismatch, Reducible
from .graph import P1, Protocol, generate_random_graph, transition_rate_matrix
from .spectral import ZERO_SNAP, is_ctmc_generator

REWARD_MODES = ("paper", "realized")
CHECK_EVERY = 10_000


@dataclass(frozen=True, eq=False)
class MdpConfig:
    """Learning problem and hyper-parameters.

    ``rewards[x, a]`` is the reward of state ``x`` under action ``a``.
    ``epsilon`` is the exploitation probability.  ``reward_mode="paper"``
    credits ``max_a R(x_next, a)`` in the update, ``"realized"`` the
    reward ``R(x, a)`` of the pair being updated.
    """

    actions: tuple
    rewards: np.ndarray
    mu: float = 0.2
    gamma: float = 0.995
    epsilon: float = 0.4
    n_steps: int = 100_000
    seed: int = 0
    initial_state: int = 0
    initial_grand: np.ndarray | None = None
    initial_quality: np.ndarray | None = None
    protocol: Protocol = P1
    reward_mode: str = "paper"
    tracked: tuple = ()
    record_every: int = 100

    def __post_init__(self):
        protocol = Protocol.parse(self.protocol)
        actions = tuple(np.array(a, dtype=float) for a in self.actions)
        if not actions:
            raise BadParams("at least one action is required")
        n = actions[0].shape[0]
        for k, a in enumerate(actions):
            if a.shape != (n, n):
                raise DimensionMismatch(f"action {k} has shape {a.shape}, expected {(n, n)}")
            report = is_ctmc_generator(a, protocol)
            if not report:
                raise BadParams(f"action {k} is not a {protocol.value} generator: {report.violations[0]}")
        rewards = np.asarray(self.rewards, dtype=float)
        if rewards.shape != (n, len(actions)):
            raise DimensionMismatch(f"rewards must have shape {(n, len(actions))}, got {rewards.shape}")
        if not 0 < self.mu <= 1:
            raise BadParams(f"mu must lie in (0, 1], got {self.mu}")
        if not 0 < self.gamma < 1:
            raise BadParams(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 <= self.epsilon <= 1:
            raise BadParams(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.n_steps < 1:
            raise BadParams("n_steps must be positive")
        if not 0 <= self.initial_state < n:
            raise BadParams(f"initial_state must lie in [0, {n})")
        if self.reward_mode not in REWARD_MODES:
            raise BadParams(f"reward_mode must be one of {REWARD_MODES}")
        if self.record_every < 1:
            raise BadParams("record_every must be positive")
        grand = None
        if self.initial_grand is not None:
            grand = np.array(self.initial_grand, dtype=float)
            if grand.shape != (n, n) or not is_ctmc_generator(grand, protocol):
                raise BadParams(f"initial_grand must be an {n}x{n} {protocol.value} generator")
        quality = None
        if self.initial_quality is not None:
            quality = np.array(self.initial_quality, dtype=float)
            if quality.shape != rewards.shape:
                raise DimensionMismatch("initial_quality must match the reward table")
        tracked = tuple((int(x), int(a)) for x, a in self.tracked)
        for x, a in tracked:
            if not (0 <= x < n and 0 <= a < len(actions)):
                raise BadParams(f"tracked pair {(x, a)} out of range")
        for name, value in (("protocol", protocol), ("actions", actions), ("rewards", rewards),
                            ("initial_grand", grand), ("initial_quality", quality), ("tracked", tracked)):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.actions[0].shape[0]

    @property
    def n_actions(self) -> int:
        return len(self.actions)


@dataclass(frozen=True, eq=False)
class LearningResult:
    quality: np.ndarray
    grand_matrix: np.ndarray
    visits: np.ndarray
    occupancy: np.ndarray
    reward_trace: np.ndarray
    stationary: np.ndarray | None
    history_steps: np.ndarray
    history: dict = field(default_factory=dict)
    elapsed: float = 0.0
    seed: int = 0

    @property
    def occupancy_fraction(self) -> np.ndarray:
        return self.occupancy / self.occupancy.sum()


def epsilon_greedy(row, eps: float, rng: np.random.Generator) -> int:
    """Greedy action with probability ``eps`` (lowest index on ties), else uniform."""
    row = np.asarray(row)
    if row.size == 0:
        raise ValueError("empty quality row")
    if rng.random() < eps:
        return int(np.argmax(row))
    return int(rng.integers(row.size))


def stationary_distribution(Q_g, protocol=P1, tol: float = ZERO_SNAP) -> np.ndarray:
    """Probability vector in the null space of ``Q_g`` (right for P1, left for P2)."""
    Q = np.asarray(Q_g, dtype=float)
    M = Q if Protocol.parse(protocol) is P1 else Q.T
    U, s, Vh = np.linalg.svd(M)
    null = int(np.sum(s <= tol * max(s[0], 1e-300)))
    if null == 0:
        raise ValueError("matrix has no null vector; not a generator")
    if null > 1:
        raise Reducible(f"null space has dimension {null}")
    v = Vh[-1]
    v = v / v.sum()
    if np.any(v < -1e-9):
        raise Reducible("null vector has mixed signs")
    v = np.clip(v, 0.0, None)
    return v / v.sum()


def _kernels(actions, protocol):
    """Cumulative jump distribution and total exit rate of every (action, state)."""
    w, n = len(actions), actions[0].shape[0]
    cum = np.empty((w, n, n))
    total = np.empty((w, n))
    for a, Q in enumerate(actions):
        rates = Q.T.copy() if protocol is P1 else Q.copy()  # rates[x, y]: x -> y
        np.fill_diagonal(rates, 0.0)
        total[a] = rates.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cum[a] = np.cumsum(rates, axis=1) / total[a][:, None]
    return cum, total


def _assemble(cfg: MdpConfig, owner: np.ndarray) -> np.ndarray:
    Q_g = np.array(cfg.initial_grand if cfg.initial_grand is not None else cfg.actions[0], dtype=float)
    for x, a in enumerate(owner):
        if a < 0:
            continue
        if cfg.protocol is P1:
            Q_g[:, x] = cfg.actions[a][:, x]
        else:
            Q_g[x, :] = cfg.actions[a][x, :]
    return Q_g


def run_qlearning(cfg: MdpConfig) -> LearningResult:
    """Event-driven Q-learning; bit-identical for a fixed seed."""
    import time

    start = time.perf_counter()
    n, w = cfg.n, cfg.n_actions
    rng = np.random.default_rng(cfg.seed)
    cum, total = _kernels(cfg.actions, cfg.protocol)
    if cfg.initial_grand is not None:
        g_cum, g_total = _kernels((cfg.initial_grand,), cfg.protocol)
    V = np.zeros((n, w)) if cfg.initial_quality is None else cfg.initial_quality.copy()
    R = cfg.rewards
    R_best = R.max(axis=1)
    paper = cfg.reward_mode == "paper"
    mu, gamma, eps = cfg.mu, cfg.gamma, cfg.epsilon

    owner = np.full(n, -1 if cfg.initial_grand is not None else 0, dtype=np.intp)
    visits = np.zeros(n, dtype=np.int64)
    occupancy = np.zeros(n)
    rewards_seen = np.empty(cfg.n_steps)
    n_rec = cfg.n_steps // cfg.record_every + 1
    hist = np.empty((n_rec, len(cfg.tracked)))
    hist_steps = np.empty(n_rec, dtype=np.int64)
    tx = [x for x, _ in cfg.tracked]
    ta = [a for _, a in cfg.tracked]

    def choose(row, u_explore, u_pick):
        if u_explore < eps:
            return int(np.argmax(row))
        return min(int(u_pick * w), w - 1)

    x = cfg.initial_state
    u = rng.random(3)
    a = choose(V[x], u[0], u[1])
    owner[x] = a
    visits[x] += 1
    hist[0] = V[tx, ta]
    hist_steps[0] = 0
    rec = 1
    block = 65_536
    for start_k in range(0, cfg.n_steps, block):
        m = min(block, cfg.n_steps - start_k)
        draws = rng.random((m, 4))
        holds = -np.log1p(-draws[:, 0])
        for k in range(m):
            step = start_k + k
            o = owner[x]
            if o >= 0:
                rate, row = total[o, x], cum[o, x]
            else:
                rate, row = g_total[0, x], g_cum[0, x]
            if not rate > 0:
                raise AbsorbingState(x, _assemble(cfg, owner))
            occupancy[x] += holds[k] / rate
            y = int(np.searchsorted(row, draws[k, 1], side="right"))
            if y >= n:
                y = n - 1
            r = R_best[y] if paper else R[x, a]
            rewards_seen[step] = r
            V[x, a] = (1.0 - mu) * V[x, a] + mu * (r + gamma * V[y].max())
            a = choose(V[y], draws[k, 2], draws[k, 3])
            owner[y] = a
            x = y
            visits[x] += 1
            if (step + 1) % cfg.record_every == 0:
                hist[rec] = V[tx, ta]
                hist_steps[rec] = step + 1
                rec += 1
            if (step + 1) % CHECK_EVERY == 0:
                report = is_ctmc_generator(_assemble(cfg, owner), cfg.protocol)
                assert report, f"grand matrix lost generator structure: {report.violations}"
    Q_g = _assemble(cfg, owner)
    try:
        v0 = stationary_distribution(Q_g, cfg.protocol)
    except (Reducible, ValueError):
        v0 = None
    history = {pair: hist[:rec, k].copy() for k, pair in enumerate(cfg.tracked)}
    return LearningResult(V, Q_g, visits, occupancy, rewards_seen, v0, hist_steps[:rec].copy(),
                          history, time.perf_counter() - start, cfg.seed)


def trial_seed(seed: int, trial: int) -> int:
    """Deterministic per-trial seed derived from ``(seed, trial)``."""
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)).generate_state(1, np.uint64)[0])


def run_trials(cfg: MdpConfig, n_trials: int, workers: int = 1) -> list[LearningResult]:
    """Independent runs with seeds derived from ``cfg.seed``; order-independent."""
    from dataclasses import replace

    cfgs = [replace(cfg, seed=trial_seed(cfg.seed, k)) for k in range(n_trials)]
    if workers <= 1:
        return [run_qlearning(c) for c in cfgs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_qlearning, cfgs))


def random_actions(n: int, n_actions: int, seed: int, protocol=P1) -> tuple[np.ndarray, ...]:
    """Generators of random complete graphs with weights in (0, 1]."""
    ss = np.random.SeedSequence(seed)
    seeds = ss.generate_state(n_actions, np.uint32)
    return tuple(np.asarray(transition_rate_matrix(generate_random_graph("random-complete", n, int(s)), protocol))
                 for s in seeds)


def state_rewards(n: int, n_actions: int, targets: Sequence[int], value: float = 5.0) -> np.ndarray:
    """Reward ``value`` in each target state whatever the action, zero elsewhere."""
    R = np.zeros((n, n_actions))
    R[list(targets), :] = value
    return R


def quality_bound(rewards, gamma: float) -> tuple[float, float]:
    """Interval containing every quality value for nonnegative rewards."""
    r_max = float(np.max(rewards))
    return 0.0, r_max / (1.0 - gamma) + r_max


def converged(history: np.ndarray, tail: float = 0.1, frac: float = 0.01) -> bool:
    """Variance of the last ``tail`` of a learning curve below ``frac`` of its overall range."""
    history = np.asarray(history, dtype=float)
    k = max(2, int(np.ceil(tail * history.size)))
    span = float(history.max() - history.min())
    if span == 0:
        return True
    return float(history[-k:].var()) < frac * span
