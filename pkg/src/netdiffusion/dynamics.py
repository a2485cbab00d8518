"""Deterministic evolution of the expected node property."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (Defective, DimensionMismatch, NoZeroEigenvalue, NotConservative,
                     NotNonConservative, NotStronglyConnected, RankDeficient, UnstableSpectrum)
from .graph import P1, P2, Protocol, as_generator, is_strongly_connected
from .spectral import (ZERO_SNAP, SpectralDecomposition, _scale, eigendecompose, matrix_exponential,
                       steady_state_vectors)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Node-property vectors sampled at ascending times.

    ``values[k]`` is the state at ``times[k]``.
    """

    times: np.ndarray
    values: np.ndarray
    protocol: Protocol | None = None
    source: str = "analytic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != times.size:
            raise DimensionMismatch(f"{times.size} times but {values.shape[0]} state vectors")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("sample times must be strictly ascending")
        if times.size and times[0] < 0:
            raise ValueError("sample times must be nonnegative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[k], t, rtol=0, atol=1e-12 * max(1.0, abs(t))):
            raise KeyError(f"t={t} is not a sample time")
        return self.values[k]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"node{k + 1}" for k in range(self.n)])
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, **kwargs) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:], **kwargs)


def check_times(times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1:
        raise ValueError("times must be one-dimensional")
    if np.any(times < 0):
        raise ValueError("sample times must be nonnegative")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("sample times must be strictly ascending")
    return times


def _state(S0, n: int, name: str = "S0") -> np.ndarray:
    S0 = np.asarray(S0, dtype=float).ravel()
    if S0.size != n:
        raise DimensionMismatch(f"{name} has length {S0.size}, expected {n}")
    return S0


def _spectral_path(d: SpectralDecomposition, S0: np.ndarray, times: np.ndarray) -> np.ndarray:
    coeff = d.left @ S0
    modes = np.exp(np.outer(times, d.eigenvalues)) * coeff
    vals = modes @ d.right.T
    if np.iscomplexobj(vals):
        scale = max(1.0, float(np.max(np.abs(vals))))
        residue = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
        assert residue < 1e-8 * scale, f"imaginary residue {residue:.3g} in real dynamics"
        vals = vals.real
    return vals


def _expm_path(Q: np.ndarray, S0: np.ndarray, times: np.ndarray) -> np.ndarray:
    return np.array([matrix_exponential(Q, t) @ S0 for t in times]).reshape(times.size, S0.size)


def expected_trajectory(Q, S0, times, method: str = "auto") -> Trajectory:
    """``exp(Q t) S0`` at each sample time.

    ``method`` is ``"spectral"`` (raises :class:`Defective` when ``Q`` is
    not diagonalizable), ``"expm"``, or ``"auto"`` which prefers the
    spectral route and falls back to the matrix exponential.
    """
    Qa = np.asarray(Q, dtype=float)
    S0 = _state(S0, Qa.shape[0])
    times = check_times(times)
    if method not in ("auto", "spectral", "expm"):
        raise ValueError(f"unknown method {method!r}")
    vals = None
    if method in ("auto", "spectral"):
        try:
            vals = _spectral_path(eigendecompose(Qa), S0, times)
        except Defective:
            if method == "spectral":
                raise
    if vals is None:
        vals = _expm_path(Qa, S0, times)
    if times.size and times[0] == 0:
        vals[0] = S0
    return Trajectory(times, vals, getattr(Q, "protocol", None), "analytic")


def stationary_value_conservative(Q, S0) -> np.ndarray:
    """Long-run node values of a strongly connected conservative network."""
    Qt = as_generator(Q, getattr(Q, "protocol", P1))
    if Qt.protocol is not P1:
        raise NotConservative("stationary value requires a conservative (P1) generator")
    if not is_strongly_connected(Qt.Q):
        raise NotStronglyConnected("the network is not strongly connected")
    S0 = _state(S0, Qt.n)
    pair = steady_state_vectors(Qt.Q)
    c_s = S0.sum() / pair.psi
    return c_s * pair.right


def consensus_value(Q, S0) -> float:
    """Consensus reached by a strongly connected non-conservative network."""
    Qt = as_generator(Q, getattr(Q, "protocol", P2))
    if Qt.protocol is not P2:
        raise NotNonConservative("consensus value requires a non-conservative (P2) generator")
    if not is_strongly_connected(Qt.Q):
        raise NotStronglyConnected("the network is not strongly connected")
    S0 = _state(S0, Qt.n)
    pair = steady_state_vectors(Qt.Q)
    return float(pair.left @ S0 / pair.omega)


@dataclass(frozen=True, eq=False)
class SwitchingSchedule:
    """Piecewise-constant generator: ``Q_k`` is active from ``start_k`` onwards."""

    matrices: tuple
    starts: tuple
    horizon: float

    def __post_init__(self):
        mats = tuple(np.asarray(Q, dtype=float) for Q in self.matrices)
        starts = tuple(float(s) for s in self.starts)
        if not mats or len(mats) != len(starts):
            raise ValueError("need one start time per matrix and at least one segment")
        if starts[0] != 0.0:
            raise ValueError("first segment must start at t=0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment start times must be strictly ascending")
        n = mats[0].shape
        for Q in mats:
            if Q.shape != n or Q.shape[0] != Q.shape[1]:
                raise DimensionMismatch("all schedule matrices must be square and the same size")
        if self.horizon < starts[-1]:
            raise ValueError("horizon precedes the last segment start")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "starts", starts)

    @classmethod
    def alternating(cls, matrices: Sequence, period: float, horizon: float) -> "SwitchingSchedule":
        n_seg = int(np.ceil(horizon / period))
        mats = [matrices[k % len(matrices)] for k in range(n_seg)]
        return cls(tuple(mats), tuple(k * period for k in range(n_seg)), horizon)

    @property
    def n(self) -> int:
        return self.matrices[0].shape[0]

    def index_at(self, t: float) -> int:
        return int(np.searchsorted(self.starts, t, side="right") - 1)


def simulate_switching(schedule: SwitchingSchedule, S0, times) -> Trajectory:
    """Exact piecewise propagation; the state is continuous across switches."""
    S = _state(S0, schedule.n)
    times = check_times(times)
    if times.size and times[-1] > schedule.horizon + 1e-12:
        raise ValueError("sample times extend past the schedule horizon")
    knots = sorted(set(schedule.starts) | set(times.tolist()))
    out = {}
    t_prev = 0.0
    for t in knots:
        if t > t_prev:
            k = schedule.index_at(t_prev)
            S = matrix_exponential(schedule.matrices[k], t - t_prev) @ S
            t_prev = t
        out[t] = S
    vals = np.array([out[t] for t in times.tolist()]).reshape(times.size, schedule.n)
    return Trajectory(times, vals, None, "analytic")


def _null_direction(M: np.ndarray, tol: float) -> np.ndarray:
    U, s, Vh = np.linalg.svd(M)
    cutoff = tol * max(s[0], 1e-300)
    rank = int(np.sum(s > cutoff))
    if rank < M.shape[0] - 1:
        raise RankDeficient(f"rank {rank} < n-1 = {M.shape[0] - 1}")
    return Vh[-1]


def shares_steady_eigenvector(Q1, Q2, protocol=None, tol: float = 1e-9, side: str = "auto") -> bool:
    """Whether two rank ``n-1`` generators share the steady eigenvector.

    With ``side="auto"`` the right null spaces are compared for
    conservative networks and the left null spaces for non-conservative
    ones, which is the vector that fixes the common limit.  ``side`` may
    also force ``"right"`` or ``"left"``.
    """
    if side not in ("auto", "right", "left"):
        raise ValueError("side must be 'auto', 'right' or 'left'")
    A1, A2 = np.asarray(Q1, dtype=float), np.asarray(Q2, dtype=float)
    if A1.shape != A2.shape:
        raise DimensionMismatch("generators differ in size")
    if side == "auto":
        if protocol is None:
            protocol = getattr(Q1, "protocol", None) or getattr(Q2, "protocol", None)
        side = "left" if Protocol.parse(protocol) is P2 else "right"
    if side == "left":
        A1, A2 = A1.T, A2.T
    v1 = _null_direction(A1, ZERO_SNAP)
    v2 = _null_direction(A2, ZERO_SNAP)
    return bool(abs(abs(np.vdot(v1, v2)) - 1.0) < tol)


class ConvergenceBound(NamedTuple):
    q_max: float
    bound: Callable[[float], float]


def convergence_bound(Q, delta0) -> ConvergenceBound:
    """Slowest decay rate and the exponential envelope ``|delta0| exp(q_max t)``.

    ``q_max`` is the real part of the nonzero eigenvalue with the smallest
    absolute real part.  The envelope is a guaranteed bound only for
    symmetric generators with ``delta0`` orthogonal to the steady vector.
    """
    Qa = np.asarray(Q, dtype=float)
    delta0 = _state(delta0, Qa.shape[0], "delta0")
    w = np.linalg.eigvals(Qa)
    zero = np.abs(w) < ZERO_SNAP * _scale(Qa)
    if not zero.any():
        raise NoZeroEigenvalue("matrix has no zero eigenvalue")
    rest = w[~zero]
    if zero.sum() > 1 or rest.size == 0 or np.any(rest.real >= -ZERO_SNAP * _scale(Qa)):
        raise UnstableSpectrum("nonzero eigenvalues must all have negative real parts "
                               "and the zero eigenvalue must be simple")
    q_max = float(rest.real[np.argmin(np.abs(rest.real))])
    norm0 = float(np.linalg.norm(delta0))

    def bound(t):
        return norm0 * np.exp(q_max * np.asarray(t, dtype=float))

    return ConvergenceBound(q_max, bound)


def spread(values: np.ndarray) -> np.ndarray:
    """Per-sample max-min spread of node values."""
    values = np.asarray(values)
    return values.max(axis=-1) - values.min(axis=-1)


__all__ = [
    "Trajectory", "SwitchingSchedule", "ConvergenceBound", "NotConservative", "NotNonConservative",
    "expected_trajectory", "stationary_value_conservative", "consensus_value", "simulate_switching",
    "shares_steady_eigenvector", "convergence_bound", "check_times", "spread",
]
