"""Driven dynamics: exogenous inputs, stubborn agents, dynamic learning and PID tracking."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.integrate
import scipy.linalg

from .dynamics import Trajectory, _state, check_times
from .errors import (AllStubborn, DegenerateLeadingCoefficient, DimensionMismatch, EmptyStubborn,
                     SingularReduced, StubbornSetError, WrongProtocol)
from .graph import P2, WeightedDigraph, adjacency_matrix, as_generator
from .spectral import matrix_exponential, steady_state_vectors


# --- input signals ---------------------------------------------------------

class InputSignal:
    """Base class for exogenous inputs ``U(t)`` of a fixed dimension."""

    n: int

    def __call__(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def scaled(self, k: float) -> "InputSignal":
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Constant(InputSignal):
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float).ravel())

    @property
    def n(self):
        return self.value.size

    def __call__(self, t):
        return self.value

    def scaled(self, k):
        return Constant(k * self.value)


@dataclass(frozen=True, eq=False)
class Impulse(InputSignal):
    """``value * delta(t)``: an instantaneous jump of the state at ``t = 0+``."""

    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float).ravel())

    @property
    def n(self):
        return self.value.size

    def __call__(self, t):
        return np.zeros(self.n)

    def scaled(self, k):
        return Impulse(k * self.value)


@dataclass(frozen=True, eq=False)
class Piecewise(InputSignal):
    """Piecewise-constant input; ``values[k]`` holds on ``[knots[k], knots[k+1])``.

    The input is zero before the first knot and the last value holds forever.
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).ravel()
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.shape[0] != knots.size:
            raise DimensionMismatch("one value vector per knot is required")
        if knots.size > 1 and np.any(np.diff(knots) <= 0):
            raise ValueError("piecewise knots must be strictly ascending")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_pairs(cls, pairs: Sequence):
        pairs = list(pairs)
        return cls([t for t, _ in pairs], [v for _, v in pairs])

    @property
    def n(self):
        return self.values.shape[1]

    def __call__(self, t):
        k = int(np.searchsorted(self.knots, t, side="right")) - 1
        return self.values[k] if k >= 0 else np.zeros(self.n)

    def scaled(self, k):
        return Piecewise(self.knots, k * self.values)


@dataclass(frozen=True, eq=False)
class CallableInput(InputSignal):
    func: Callable[[float], np.ndarray]
    dim: int
    derivative: Callable[[float], np.ndarray] | None = None

    @property
    def n(self):
        return self.dim

    def __call__(self, t):
        return np.asarray(self.func(t), dtype=float).ravel()

    def rate(self, t, h: float = 1e-6) -> np.ndarray:
        if self.derivative is not None:
            return np.asarray(self.derivative(t), dtype=float).ravel()
        lo = max(t - h, 0.0)
        return (self(t + h) - self(lo)) / (t + h - lo)

    def scaled(self, k):
        d = None if self.derivative is None else (lambda t, f=self.derivative: k * np.asarray(f(t)))
        return CallableInput(lambda t, f=self.func: k * np.asarray(f(t), dtype=float), self.dim, d)


def as_input(u, n: int | None = None) -> InputSignal:
    if isinstance(u, InputSignal):
        sig = u
    elif callable(u):
        if n is None:
            raise ValueError("dimension needed for a callable input")
        sig = CallableInput(u, n)
    else:
        sig = Constant(u)
    if n is not None and sig.n != n:
        raise DimensionMismatch(f"input has dimension {sig.n}, system has {n}")
    return sig


# --- inhomogeneous propagation ----------------------------------------------

def _step_constant(M: np.ndarray, x: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    """Exact ``x(dt)`` for ``x' = M x + b`` with constant ``b`` (``M`` may be singular)."""
    if dt == 0:
        return x
    n = x.size
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = M
    aug[:n, n] = b
    E = scipy.linalg.expm(aug * dt)
    return E[:n, :n] @ x + E[:n, n]


def _step_callable(M: np.ndarray, x: np.ndarray, u: Callable, t0: float, t1: float,
                   rtol: float = 1e-9) -> np.ndarray:
    if t1 == t0:
        return x
    conv, _ = scipy.integrate.quad_vec(lambda tau: matrix_exponential(M, t1 - tau) @ u(tau),
                                       t0, t1, epsrel=rtol, epsabs=1e-13)
    return matrix_exponential(M, t1 - t0) @ x + conv


def _breakpoints(sig: InputSignal) -> np.ndarray:
    return sig.knots if isinstance(sig, Piecewise) else np.empty(0)


def inhomogeneous_trajectory(Q, S0, u, times) -> Trajectory:
    """``S(t) = exp(Qt) S0 + int_0^t exp(Q(t - tau)) U(tau) dtau``.

    Constant and piecewise-constant inputs are integrated in closed form,
    impulses are a jump at ``t = 0+`` and callables use adaptive quadrature.
    """
    M = np.asarray(Q, dtype=float)
    n = M.shape[0]
    x = _state(S0, n)
    sig = as_input(u, n)
    times = check_times(times)
    if isinstance(sig, Impulse):
        x = x + sig.value
        sig = Constant(np.zeros(n))
    knots = sorted(set(times.tolist()) | {float(k) for k in _breakpoints(sig) if k >= 0})
    out = {}
    t_prev = 0.0
    for t in knots:
        if t > t_prev:
            if isinstance(sig, CallableInput):
                x = _step_callable(M, x, sig, t_prev, t)
            else:
                x = _step_constant(M, x, sig(t_prev), t - t_prev)
            t_prev = t
        out[t] = x
    vals = np.array([out[t] for t in times.tolist()]).reshape(times.size, n)
    return Trajectory(times, vals, getattr(Q, "protocol", None), "inhomogeneous")


@dataclass(frozen=True)
class DivergenceReport:
    """Asymptotic linear drift ``growth * t`` caused by a constant input."""

    diverges: bool
    steady_coefficient: float
    growth: np.ndarray


def constant_input_divergence(Q, b, tol: float = 1e-9) -> DivergenceReport:
    """Linear growth induced on the undamped steady mode by a constant input ``b``."""
    Q = np.asarray(Q, dtype=float)
    b = _state(b, Q.shape[0], "b")
    pair = steady_state_vectors(Q)
    coeff = float(pair.left @ b / (pair.left @ pair.right))
    growth = coeff * pair.right
    scale = max(1.0, float(np.max(np.abs(b))))
    return DivergenceReport(abs(coeff) > tol * scale, coeff, growth)


# --- stubborn agents ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """Free-agent dynamics ``S' = Q' S + B u`` with stubborn agents held at ``u``."""

    Qr: np.ndarray
    B: np.ndarray
    u: np.ndarray
    stubborn: tuple[int, ...]
    free: tuple[int, ...]

    @property
    def b(self) -> np.ndarray:
        return self.B @ self.u

    @property
    def n_full(self) -> int:
        return len(self.stubborn) + len(self.free)

    def expand(self, reduced_values) -> np.ndarray:
        """Full-network state(s) from reduced ones, stubborn agents at ``u``."""
        reduced_values = np.asarray(reduced_values, dtype=float)
        shape = reduced_values.shape[:-1] + (self.n_full,)
        full = np.empty(shape)
        full[..., list(self.free)] = reduced_values
        full[..., list(self.stubborn)] = self.u
        return full

    def restrict(self, full_values) -> np.ndarray:
        return np.asarray(full_values, dtype=float)[..., list(self.free)]


def reduce_stubborn(Q, stubborn, values) -> ReducedSystem:
    """Eliminate stubborn agents from a non-conservative generator.

    ``stubborn`` lists 0-based agent indices; ``values`` their fixed
    property (a scalar is broadcast).
    """
    Qt = as_generator(Q, getattr(Q, "protocol", P2))
    if Qt.protocol is not P2:
        raise WrongProtocol("stubborn-agent reduction applies to non-conservative (P2) networks")
    n = Qt.n
    stubborn = tuple(sorted({int(s) for s in np.atleast_1d(stubborn)}))
    if not stubborn:
        raise EmptyStubborn("stubborn set is empty")
    if any(not 0 <= s < n for s in stubborn):
        raise StubbornSetError(f"stubborn index out of range [0, {n})")
    if len(stubborn) == n:
        raise AllStubborn("every agent is stubborn; nothing left to evolve")
    u = np.broadcast_to(np.asarray(values, dtype=float), (len(stubborn),)).copy()
    free = tuple(k for k in range(n) if k not in stubborn)
    Qm = Qt.Q
    return ReducedSystem(Qm[np.ix_(free, free)].copy(), Qm[np.ix_(free, stubborn)].copy(), u,
                         stubborn, free)


@dataclass(frozen=True)
class StubbornCheck:
    lemma_condition: bool
    invertible: bool
    diagonally_dominant: bool
    unanchored: tuple[int, ...] = ()

    def __bool__(self):
        return self.lemma_condition


def check_stubborn_invertibility(rs: ReducedSystem, g: WeightedDigraph | None = None,
                                 tol: float = 1e-12) -> StubbornCheck:
    """Whether every free agent polls some stubborn agent, and what that buys.

    ``unanchored`` lists free agents (full-network indices) with no link to
    a stubborn agent.
    """
    if g is not None:
        A = adjacency_matrix(g)
        links = A[np.ix_(rs.free, rs.stubborn)]
    else:
        links = rs.B
    anchored = np.any(links > 0, axis=1)
    unanchored = tuple(rs.free[k] for k in np.flatnonzero(~anchored))
    Qr = rs.Qr
    off = np.abs(Qr).sum(axis=1) - np.abs(np.diag(Qr))
    dominant = bool(np.all(np.abs(np.diag(Qr)) > off + tol))
    if Qr.size:
        s = np.linalg.svd(Qr, compute_uv=False)
        invertible = bool(s[-1] > 1e-12 * max(s[0], 1.0))
    else:
        invertible = True
    condition = not unanchored
    if condition:
        assert dominant, "every free agent is anchored but Q' is not strictly diagonally dominant"
    return StubbornCheck(condition, invertible, dominant, unanchored)


def stubborn_steady_state(rs: ReducedSystem) -> np.ndarray:
    """Fixed point ``-Q'^-1 b`` of the reduced dynamics."""
    try:
        s = np.linalg.svd(rs.Qr, compute_uv=False)
        if s[-1] <= 1e-12 * max(s[0], 1.0):
            raise np.linalg.LinAlgError
        return -np.linalg.solve(rs.Qr, rs.b)
    except np.linalg.LinAlgError:
        raise SingularReduced("reduced rate matrix is singular") from None


def stubborn_trajectory(rs: ReducedSystem, S0_free, times) -> Trajectory:
    return inhomogeneous_trajectory(rs.Qr, S0_free, Constant(rs.b), times)


# --- dynamic learning and PID tracking ------------------------------------------

@dataclass(frozen=True)
class LearningGains:
    """Raw gains and measurement rate; the effective (primed) gains are ``gain * rho``.

    ``proportional``, ``derivative`` and ``integral`` are the raw
    P, D and I gains.
    """

    proportional: float
    derivative: float = 0.0
    integral: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"measurement rate must be positive, got {self.rho}")
        if np.isclose(1.0 + self.d, 0.0):
            raise DegenerateLeadingCoefficient("1 + derivative gain * rho must be nonzero")

    @property
    def p(self) -> float:
        return self.proportional * self.rho

    @property
    def d(self) -> float:
        return self.derivative * self.rho

    @property
    def i(self) -> float:
        return self.integral * self.rho


def learning_matrix(Q, beta: float) -> np.ndarray:
    """``Q - beta I``."""
    Q = np.asarray(Q, dtype=float)
    return Q - beta * np.eye(Q.shape[0])


def dynamic_learning_trajectory(Q, gains, X, S0, times) -> Trajectory:
    """Trajectory of ``S' = (Q - b I) S + b X(t)`` with ``b`` the effective proportional gain."""
    beta = gains.p if isinstance(gains, LearningGains) else float(gains)
    if not beta > 0:
        raise ValueError("effective learning gain must be positive")
    Q = np.asarray(Q, dtype=float)
    sig = as_input(X, Q.shape[0])
    return inhomogeneous_trajectory(learning_matrix(Q, beta), S0, sig.scaled(beta), times)


def learning_fixed_point(Q, beta: float, X_star) -> np.ndarray:
    QD = learning_matrix(Q, beta)
    return -np.linalg.solve(QD, beta * np.asarray(X_star, dtype=float))


def pid_system_matrix(Q, gains: LearningGains) -> np.ndarray:
    """State matrix for ``z = (S, E)`` with ``E = Y - T`` the integrated tracking error.

    Its eigenvalues are the roots of ``det[(1+d) s^2 I + (p I - Q) s + i I]``.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    lead = 1.0 + gains.d
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = (Q - gains.p * np.eye(n)) / lead
    M[:n, n:] = gains.i * np.eye(n) / lead
    M[n:, :n] = -np.eye(n)
    return M


def _pid_input_matrix(n: int, gains: LearningGains) -> tuple[np.ndarray, np.ndarray]:
    lead = 1.0 + gains.d
    Bx = np.zeros((2 * n, n))
    Bx[:n] = gains.p * np.eye(n) / lead
    Bx[n:] = np.eye(n)
    Bdx = np.zeros((2 * n, n))
    Bdx[:n] = gains.d * np.eye(n) / lead
    return Bx, Bdx


def pid_transfer(Q, gains: LearningGains, s: complex) -> np.ndarray:
    """``S(s)/X(s) = (d s^2 + p s + i) [(1+d) s^2 I + (p I - Q) s + i I]^-1``."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    QE = (1 + gains.d) * s**2 * np.eye(n) + (gains.p * np.eye(n) - Q) * s + gains.i * np.eye(n)
    return (gains.d * s**2 + gains.p * s + gains.i) * np.linalg.inv(QE)


def pid_characteristic_roots(Q, gains: LearningGains) -> np.ndarray:
    return np.linalg.eigvals(pid_system_matrix(Q, gains))


def pid_expanded_response(Q, gains: LearningGains, X, S0, T0=None, times=None,
                          return_integral: bool = False):
    """Node trajectory of the PID-augmented dynamics.

    ``X`` is assumed to have held its initial value before ``t = 0`` (no
    derivative kick at the origin); jumps of a piecewise input later on
    kick ``S`` by ``d / (1 + d)`` times the jump.  The reference integral
    ``Y`` starts at zero and ``T0`` is the initial integral of ``S``.
    With ``return_integral`` the ``T`` trajectory is returned as well.
    """
    if times is None:
        raise ValueError("times are required")
    M0 = np.asarray(Q, dtype=float)
    n = M0.shape[0]
    sig = as_input(X, n)
    if isinstance(sig, Impulse):
        raise ValueError("impulse references are not supported by the PID response")
    S = _state(S0, n)
    T = np.zeros(n) if T0 is None else _state(T0, n, "T0")
    times = check_times(times)
    M = pid_system_matrix(M0, gains)
    Bx, Bdx = _pid_input_matrix(n, gains)
    z = np.concatenate([S, -T])
    Y = np.zeros(n)
    lead = 1.0 + gains.d
    knots = sorted(set(times.tolist()) | {float(k) for k in _breakpoints(sig) if k > 0})
    out = {}
    t_prev = 0.0
    for t in knots:
        if t > t_prev:
            if isinstance(sig, CallableInput):
                def drive(tau):
                    return Bx @ sig(tau) + Bdx @ sig.rate(tau)
                z = _step_callable(M, z, drive, t_prev, t)
                Y = Y + scipy.integrate.quad_vec(sig, t_prev, t, epsrel=1e-10)[0]
            else:
                x_seg = sig(t_prev)
                z = _step_constant(M, z, Bx @ x_seg, t - t_prev)
                Y = Y + x_seg * (t - t_prev)
            t_prev = t
            if isinstance(sig, Piecewise) and np.any(sig.knots == t):
                jump = sig(t) - sig(np.nextafter(t, -np.inf))
                z[:n] += gains.d / lead * jump
        out[t] = (z.copy(), Y.copy())
    S_vals = np.array([out[t][0][:n] for t in times.tolist()]).reshape(times.size, n)
    traj = Trajectory(times, S_vals, getattr(Q, "protocol", None), "pid")
    if not return_integral:
        return traj
    T_vals = np.array([out[t][1] - out[t][0][n:] for t in times.tolist()]).reshape(times.size, n)
    return traj, Trajectory(times, T_vals, getattr(Q, "protocol", None), "pid-integral")


# --- stability -------------------------------------------------------------------

class Stability(str, enum.Enum):
    BIBO_STABLE = "BIBOStable"
    MARGINALLY_STABLE = "MarginallyStable"
    UNSTABLE = "Unstable"


def bibo_stability(M, tol: float | None = None) -> Stability:
    """Classify ``x' = M x`` by the real parts of its eigenvalues.

    Eigenvalues on the imaginary axis (within ``tol``) count as marginal
    only if they are non-defective; a Jordan block there grows polynomially
    and is reported unstable.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if tol is None:
        tol = 1e-9 * max(float(np.linalg.norm(M)), 1e-300)
    w = np.linalg.eigvals(M)
    re = w.real
    if np.all(re < -tol):
        return Stability.BIBO_STABLE
    if np.any(re > tol):
        return Stability.UNSTABLE
    n = M.shape[0]
    axis = w[np.abs(re) <= tol]
    rank_tol = max(tol, 1e-9) * max(1.0, float(np.linalg.norm(M)))
    for lam in _distinct(axis, rank_tol):
        alg = int(np.sum(np.abs(axis - lam) <= 1e-6 * max(1.0, abs(lam))))
        geo = n - np.linalg.matrix_rank(M - lam * np.eye(n), tol=max(rank_tol, 1e-7))
        if geo < alg:
            return Stability.UNSTABLE
    return Stability.MARGINALLY_STABLE


def _distinct(values, tol):
    out = []
    for v in values:
        if all(abs(v - o) > max(tol, 1e-6) for o in out):
            out.append(v)
    return out
