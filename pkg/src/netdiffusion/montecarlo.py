"""Event-driven sample paths of the two update protocols.

Every edge carries an independent Poisson clock.  When the clock of edge
``(i, j)`` ticks, the conservative protocol moves ``c * S_j`` from agent
``j`` to agent ``i`` and the non-conservative protocol replaces ``S_i``
by ``c * S_j + (1 - c) * S_i``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory, check_times
from .errors import BadHorizon, BadParams, DimensionMismatch
from .graph import P1, Protocol, WeightedDigraph


@dataclass(frozen=True)
class ExactEvent:
    """Exponential race between edge clocks; statistically exact."""

    def __str__(self):
        return "exact"


@dataclass(frozen=True)
class Discretized:
    """Fixed substeps of ``1/substeps``; each edge fires with probability ``r * dt``."""

    substeps: int = 1000
    strict: bool = False

    def __post_init__(self):
        if int(self.substeps) < 1:
            raise BadParams("substeps must be at least 1")

    def __str__(self):
        return f"disc:{self.substeps}"


def parse_scheme(text: str):
    text = str(text).strip().lower()
    if text == "exact":
        return ExactEvent()
    if text.startswith("disc"):
        _, _, k = text.partition(":")
        return Discretized(int(k) if k else 1000)
    raise BadParams(f"unknown scheme {text!r}; expected 'exact' or 'disc:K'")


@dataclass(frozen=True, eq=False)
class SamplePath:
    """One trial: event times, firing edges and the state after each event.

    ``states[0]`` is the initial state; ``states[k]`` follows event ``k-1``.
    """

    event_times: np.ndarray
    event_edges: np.ndarray
    states: np.ndarray

    def sample(self, grid) -> np.ndarray:
        idx = np.searchsorted(self.event_times, grid, side="right")
        return self.states[idx]


def _edge_arrays(g: WeightedDigraph):
    src = np.array([e.i for e in g.edges], dtype=np.intp)
    dst = np.array([e.j for e in g.edges], dtype=np.intp)
    conf = np.array([e.c for e in g.edges], dtype=float)
    rate = np.array([e.r for e in g.edges], dtype=float)
    return src, dst, conf, rate


def _exact_events(rate: np.ndarray, horizon: float, rng: np.random.Generator):
    total = rate.sum()
    times = []
    t = 0.0
    block = max(16, int(total * horizon * 1.2) + 16)
    while True:
        gaps = rng.exponential(1.0 / total, size=block)
        arrivals = t + np.cumsum(gaps)
        keep = arrivals[arrivals <= horizon]
        times.append(keep)
        if keep.size < block:
            break
        t = arrivals[-1]
    times = np.concatenate(times)
    cum = np.cumsum(rate) / total
    edges = np.searchsorted(cum, rng.random(times.size), side="right")
    return times, np.minimum(edges, rate.size - 1)


def _discretized_events(rate: np.ndarray, horizon: float, substeps: int, rng: np.random.Generator):
    dt = 1.0 / substeps
    n_steps = int(np.ceil(horizon * substeps - 1e-9))
    fires = rng.random((n_steps, rate.size)) < rate * dt
    step, edges = np.nonzero(fires)  # row-major: edges of one substep in index order
    times = (step + 1) * dt
    return times, edges


def sample_path(g: WeightedDigraph, protocol, S0, horizon: float, rng: np.random.Generator,
                scheme=ExactEvent()) -> SamplePath:
    """Simulate a single trial up to ``horizon``."""
    protocol = Protocol.parse(protocol)
    S = np.array(S0, dtype=float).ravel()
    if S.size != g.n:
        raise DimensionMismatch(f"S0 has length {S.size}, expected {g.n}")
    if not horizon > 0:
        raise BadHorizon(f"horizon must be positive, got {horizon}")
    if not g.edges:
        return SamplePath(np.empty(0), np.empty(0, dtype=np.intp), S[None, :].copy())
    src, dst, conf, rate = _edge_arrays(g)
    if isinstance(scheme, Discretized):
        times, edges = _discretized_events(rate, horizon, int(scheme.substeps), rng)
    else:
        times, edges = _exact_events(rate, horizon, rng)
    states = np.empty((times.size + 1, g.n))
    states[0] = S
    conservative = protocol is P1
    for k, e in enumerate(edges.tolist()):
        i, j, c = src[e], dst[e], conf[e]
        if conservative:
            moved = c * S[j]
            S[i] += moved
            S[j] -= moved
        else:
            S[i] = c * S[j] + (1.0 - c) * S[i]
        states[k + 1] = S
    return SamplePath(times, edges, states)


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    times: np.ndarray
    trials: np.ndarray  # (n_trials, n_times, n)
    mean: Trajectory
    stderr: np.ndarray
    seed: int | None
    scheme: object
    protocol: Protocol

    @property
    def n_trials(self) -> int:
        return self.trials.shape[0]

    def trajectory(self, k: int) -> Trajectory:
        return Trajectory(self.times, self.trials[k], self.protocol, "sample-path")


def trial_rng(seed, trial: int) -> np.random.Generator:
    """Independent stream for one trial, fixed by ``(seed, trial)`` alone."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))


def _reduce(trials: np.ndarray, times, protocol, seed, scheme) -> TrajectoryEnsemble:
    n_trials = trials.shape[0]
    mean = trials.mean(axis=0)
    if n_trials > 1:
        stderr = trials.std(axis=0, ddof=1) / np.sqrt(n_trials)
    else:
        stderr = np.zeros_like(mean)
    return TrajectoryEnsemble(times, trials, Trajectory(times, mean, protocol, "ensemble-mean"),
                              stderr, seed, scheme, protocol)


def sample_paths(g: WeightedDigraph, protocol, S0, horizon: float, grid=None, n_trials: int = 1000,
                 seed: int | None = 0, scheme=ExactEvent()) -> TrajectoryEnsemble:
    """Monte Carlo ensemble sampled on a common time grid.

    Trial ``k`` uses a generator derived from ``(seed, k)`` so the ensemble
    does not depend on execution order.
    """
    protocol = Protocol.parse(protocol)
    if not horizon > 0:
        raise BadHorizon(f"horizon must be positive, got {horizon}")
    grid = check_times(np.linspace(0.0, horizon, 101) if grid is None else grid)
    if grid.size and grid[-1] > horizon:
        raise BadHorizon("grid extends past the horizon")
    if n_trials < 1:
        raise BadParams("n_trials must be at least 1")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**63))
    if isinstance(scheme, Discretized) and g.edges:
        worst = max(e.r for e in g.edges) / scheme.substeps
        if worst > 0.1:
            msg = f"max r*dt = {worst:.3g} exceeds 0.1; Bernoulli approximation is coarse"
            if scheme.strict:
                raise BadParams(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if not g.edges:
        warnings.warn("graph has no edges; trajectories are constant", RuntimeWarning, stacklevel=2)
    trials = np.empty((n_trials, grid.size, g.n))
    for k in range(n_trials):
        path = sample_path(g, protocol, S0, horizon, trial_rng(seed, k), scheme)
        trials[k] = path.sample(grid)
    return _reduce(trials, grid, protocol, seed, scheme)


def ensemble_mean(e: TrajectoryEnsemble) -> Trajectory:
    if e.n_trials < 1:
        raise BadParams("empty ensemble")
    return Trajectory(e.times, e.trials.mean(axis=0), e.protocol, "ensemble-mean")


def ensemble_from_trials(trials, times, protocol, seed=None, scheme=None) -> TrajectoryEnsemble:
    trials = np.asarray(trials, dtype=float)
    if trials.ndim == 2:
        trials = trials[None]
    return _reduce(trials, check_times(times), Protocol.parse(protocol), seed, scheme)
