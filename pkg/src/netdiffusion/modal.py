"""Quasi-mode coordinates, per-mode feedback control and Fiedler-vector statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .dynamics import Trajectory, _state, check_times
from .errors import Disconnected, UnstableClosedLoop
from .graph import WeightedDigraph, adjacency_matrix, is_strongly_connected
from .spectral import SpectralDecomposition, _realify, eigendecompose


def _decomposition(Q) -> SpectralDecomposition:
    return Q if isinstance(Q, SpectralDecomposition) else eigendecompose(Q)


def to_quasi(d: SpectralDecomposition, x) -> np.ndarray:
    """Quasi coordinates ``A^-1 x``."""
    return d.coefficients(x)


def from_quasi(d: SpectralDecomposition, s) -> np.ndarray:
    """Node coordinates ``A s``."""
    return _realify(d.right @ np.asarray(s))


# --- controllers -------------------------------------------------------------------

KINDS = ("none", "proportional", "integral")


@dataclass(frozen=True)
class ControllerSpec:
    """Feedback ``F`` on quasi-mode ``mode``: ``F = K`` (proportional) or ``F = K/s`` (integral)."""

    mode: int
    kind: str = "none"
    gain: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"controller kind must be one of {KINDS}, got {self.kind!r}")
        if not np.isfinite(self.gain):
            raise ValueError("controller gain must be finite")
        if int(self.mode) < 0:
            raise ValueError("mode index must be nonnegative")

    @classmethod
    def parse(cls, text: str, mode: int) -> "ControllerSpec":
        """``"none"``, ``"p:K"`` or ``"i:K"``."""
        text = text.strip().lower()
        if text == "none":
            return cls(mode)
        kind, _, gain = text.partition(":")
        kinds = {"p": "proportional", "i": "integral"}
        if kind not in kinds or not gain:
            raise ValueError(f"controller must be 'none', 'p:K' or 'i:K', got {text!r}")
        return cls(mode, kinds[kind], float(gain))

    def loop_matrix(self, q: complex) -> np.ndarray:
        """State matrix of the closed loop of mode ``q`` (state first, integrator second)."""
        if self.kind == "proportional":
            return np.array([[q - self.gain]])
        if self.kind == "integral":
            return np.array([[q, -self.gain], [1.0, 0.0]], dtype=np.result_type(q, float))
        return np.array([[q]])


def _controllers(ctrl, n: int) -> dict[int, ControllerSpec]:
    if ctrl is None:
        return {}
    specs = [ctrl] if isinstance(ctrl, ControllerSpec) else list(ctrl)
    out: dict[int, ControllerSpec] = {}
    for c in specs:
        if c.mode >= n:
            raise ValueError(f"mode {c.mode} out of range for {n} modes")
        if c.mode in out:
            raise ValueError(f"two controllers target mode {c.mode}")
        if c.kind != "none":
            out[c.mode] = c
    return out


def _check_loop(M: np.ndarray, mode: int, tol: float = 1e-12) -> bool:
    """Raise on a growing closed loop; return whether it is only marginal."""
    w = np.linalg.eigvals(M)
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.any(w.real > tol * scale):
        raise UnstableClosedLoop(f"closed loop of mode {mode} has poles {w}")
    return bool(np.any(w.real >= -tol * scale))


def _first_state(M: np.ndarray, x0: np.ndarray, times: np.ndarray) -> np.ndarray:
    if M.shape == (1, 1):
        return x0[0] * np.exp(M[0, 0] * times)
    return np.array([(scipy.linalg.expm(M * t) @ x0)[0] for t in times])


@dataclass(frozen=True, eq=False)
class ModalResponse:
    """Node-space trajectory plus the quasi-mode trajectories that produced it.

    ``quasi[k, i]`` is mode ``i`` at ``times[k]``; ``marginal`` lists modes
    whose closed loop has a pole on the imaginary axis.
    """

    trajectory: Trajectory
    quasi: np.ndarray
    decomposition: SpectralDecomposition
    marginal: tuple[int, ...] = ()

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times


def controlled_response(Q, impulse, ctrl=None, times=None, S0=None) -> ModalResponse:
    """Impulse response with feedback on selected quasi-modes.

    The impulse is a quasi-state jump at ``t = 0+``.  Controlled modes run
    their closed loop from the post-jump state, every other mode decays
    open-loop as ``exp(q_i t)``.
    """
    d = _decomposition(Q)
    n = d.n
    times = check_times(times)
    x0 = _state(impulse, n, "impulse") + (np.zeros(n) if S0 is None else _state(S0, n))
    s0 = np.asarray(d.left @ x0)
    loops = _controllers(ctrl, n)
    quasi = np.exp(np.outer(times, d.eigenvalues)) * s0
    marginal = []
    for k, c in loops.items():
        M = c.loop_matrix(d.eigenvalues[k])
        if _check_loop(M, k):
            marginal.append(k)
        init = np.zeros(M.shape[0], dtype=M.dtype if np.iscomplexobj(M) else np.result_type(s0))
        init[0] = s0[k]
        quasi[:, k] = _first_state(M, init, times)
    node = _realify(quasi @ d.right.T)
    if np.iscomplexobj(node):
        raise ValueError("controller produced a complex node trajectory; control conjugate modes in pairs")
    traj = Trajectory(times, node, getattr(Q, "protocol", None), "modal")
    return ModalResponse(traj, _realify(quasi), d, tuple(sorted(marginal)))


@dataclass(frozen=True, eq=False)
class QuasiInputFilter:
    """``H(s) = (s - q_y) / (s - q_y + F(s))`` realized as ``(A, B, C, D = 1)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    ctrl: ControllerSpec
    q_y: complex

    def transfer(self, s: complex) -> complex:
        """Evaluate the Laplace-domain expression directly."""
        F = {"none": 0.0, "proportional": self.ctrl.gain, "integral": self.ctrl.gain / s}[self.ctrl.kind]
        return (s - self.q_y) / (s - self.q_y + F)

    def realized_transfer(self, s: complex) -> complex:
        m = self.A.shape[0]
        if m == 0:
            return 1.0
        return 1.0 + complex(self.C @ np.linalg.solve(s * np.eye(m) - self.A, self.B))

    @property
    def order(self) -> int:
        return self.A.shape[0]


def subsumed_quasi_input(ctrl: ControllerSpec, q_y: complex) -> QuasiInputFilter:
    """Fold the feedback loop of mode ``q_y`` into a filter on quasi-inputs."""
    K = ctrl.gain
    if ctrl.kind == "proportional" and K != 0:
        return QuasiInputFilter(np.array([[q_y - K]]), np.array([1.0]), np.array([-K]), ctrl, q_y)
    if ctrl.kind == "integral" and K != 0:
        A = np.array([[q_y, -K], [1.0, 0.0]], dtype=np.result_type(q_y, float))
        return QuasiInputFilter(A, np.array([1.0, 0.0]), np.array([0.0, -K]), ctrl, q_y)
    return QuasiInputFilter(np.zeros((0, 0)), np.zeros(0), np.zeros(0), ctrl, q_y)


def subsumed_response(Q, impulse, ctrl: ControllerSpec, times, S0=None, scope: str = "target") -> ModalResponse:
    """Open-loop modes driven by filtered quasi-inputs.

    ``scope="target"`` filters only the controlled mode's input, which is
    equivalent to :func:`controlled_response`.  ``scope="all"`` passes
    every mode's input through the same filter, modelling a controller
    that feeds back into node space.
    """
    if scope not in ("target", "all"):
        raise ValueError("scope must be 'target' or 'all'")
    d = _decomposition(Q)
    n = d.n
    times = check_times(times)
    x0 = _state(impulse, n, "impulse") + (np.zeros(n) if S0 is None else _state(S0, n))
    s0 = np.asarray(d.left @ x0)
    filt = subsumed_quasi_input(ctrl, d.eigenvalues[ctrl.mode])
    quasi = np.exp(np.outer(times, d.eigenvalues)) * s0
    modes = [ctrl.mode] if scope == "target" else range(n)
    m = filt.order
    if m:
        for k in modes:
            # mode k driven by u(t) = s0 delta(t) passed through the filter
            M = np.zeros((m + 1, m + 1), dtype=np.result_type(filt.A, d.eigenvalues[k]))
            M[0, 0] = d.eigenvalues[k]
            M[0, 1:] = filt.C
            M[1:, 1:] = filt.A
            _check_loop(M, k)
            init = np.zeros(m + 1, dtype=np.result_type(M, s0))
            init[0] = s0[k]
            init[1:] = filt.B * s0[k]
            quasi[:, k] = _first_state(M, init, times)
    node = _realify(quasi @ d.right.T)
    traj = Trajectory(times, np.real_if_close(node), getattr(Q, "protocol", None), "modal-subsumed")
    return ModalResponse(traj, _realify(quasi), d)


# --- Fiedler vector ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiedlerResult:
    """Fiedler vector of the symmetrized Laplacian and spread statistics of its entries.

    ``spread`` is the interquartile range, which unlike the variance is
    not fixed by the unit normalization.
    """

    vector: np.ndarray
    eigenvalue: float
    degenerate: bool
    spread: float
    variance: float
    std: float
    value_range: float
    histogram: tuple[np.ndarray, np.ndarray]


def symmetrized_laplacian(g: WeightedDigraph) -> np.ndarray:
    """Laplacian of the undirected graph with weights ``(A + A^T) / 2``.

    It equals ``(L + L^T) / 2`` when every node's in- and out-degree agree
    and keeps zero row sums when they do not.
    """
    A = adjacency_matrix(g)
    W = (A + A.T) / 2
    return np.diag(W.sum(axis=1)) - W


def fiedler_analysis(g: WeightedDigraph, bins: int | Sequence[float] = 20, tol: float = 1e-9) -> FiedlerResult:
    """Second-smallest eigenpair of the symmetrized Laplacian.

    Degenerate eigenvalues keep the lowest-index eigenvector from the
    ascending symmetric eigensolver and set ``degenerate``.
    """
    L = symmetrized_laplacian(g)
    if g.n < 2 or not is_strongly_connected(L != 0):
        raise Disconnected("Fiedler vector needs a connected graph")
    w, V = np.linalg.eigh(L)
    scale = max(1.0, float(np.max(np.abs(w))))
    lam = float(w[1])
    degenerate = g.n > 2 and abs(w[2] - lam) <= tol * scale
    v = V[:, 1]
    k = int(np.argmax(np.round(np.abs(v), 12)))
    v = v * np.sign(v[k])
    q1, q3 = np.percentile(v, [25, 75])
    return FiedlerResult(v, lam, bool(degenerate), float(q3 - q1), float(v.var()), float(v.std()),
                         float(v.max() - v.min()), np.histogram(v, bins=bins))
