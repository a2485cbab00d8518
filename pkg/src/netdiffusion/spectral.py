"""Eigen-analysis of transition rate matrices."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import Defective, NoZeroEigenvalue, Reducible
from .graph import P1, Protocol

ZERO_SNAP = 1e-9
MAX_CONDITION = 1e8


def _scale(Q: np.ndarray) -> float:
    d = np.max(np.abs(np.diag(Q))) if Q.size else 0.0
    if d == 0.0:
        d = np.max(np.abs(Q)) if Q.size else 0.0
    return float(d) if d > 0 else 1.0


def _orient(v: np.ndarray) -> np.ndarray:
    """Unit norm, with the first largest-magnitude entry made real positive."""
    v = v / np.linalg.norm(v)
    mags = np.round(np.abs(v), 12)
    k = int(np.argmax(mags))
    return v * (np.conj(v[k]) / abs(v[k]))


def _realify(x: np.ndarray, rtol: float = 1e-8) -> np.ndarray:
    """Drop a negligible imaginary part; keep complex values otherwise."""
    x = np.asarray(x)
    if not np.iscomplexobj(x):
        return x
    scale = max(float(np.max(np.abs(x))) if x.size else 0.0, 1.0)
    if np.all(np.abs(x.imag) <= rtol * scale):
        return np.ascontiguousarray(x.real)
    return x


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """``Q = A diag(q) A^-1`` with unit-norm columns of ``A``.

    ``right`` holds the unit right eigenvectors as columns, ``left`` is
    ``A^-1`` whose rows are the biorthogonally scaled left eigenvectors.
    Eigenvalues are sorted by ascending real part, so for a generator the
    steady mode comes last.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    steady_index: int | None = None
    condition: float = 1.0
    zero_indices: tuple[int, ...] = field(default=())

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def is_real(self) -> bool:
        return not (np.iscomplexobj(self.eigenvalues) or np.iscomplexobj(self.right))

    def reconstruct(self, eigenvalues=None) -> np.ndarray:
        q = self.eigenvalues if eigenvalues is None else np.asarray(eigenvalues)
        return _realify((self.right * q) @ self.left)

    def coefficients(self, x) -> np.ndarray:
        """Mode coefficients ``A^-1 x``."""
        return _realify(self.left @ np.asarray(x))

    def propagator(self, t: float) -> np.ndarray:
        return _realify((self.right * np.exp(self.eigenvalues * t)) @ self.left)

    def left_unit(self, k: int) -> np.ndarray:
        """Row ``k`` of ``A^-1`` rescaled to unit norm."""
        return _realify(_orient(self.left[k]))

    def clusters(self, tol: float = 1e-8) -> list[list[int]]:
        """Groups of mode indices whose eigenvalues agree within ``tol``."""
        groups: list[list[int]] = []
        for k, q in enumerate(self.eigenvalues):
            for g in groups:
                if abs(self.eigenvalues[g[0]] - q) < tol:
                    g.append(k)
                    break
            else:
                groups.append([k])
        return groups

    def aligned(self, references) -> "SpectralDecomposition":
        """Re-phase eigenvectors to agree with reference vectors.

        ``references`` maps mode index to a vector (or is a sequence with
        ``None`` for modes to leave alone).  Only the phase of each column
        changes; ``left`` is rescaled to stay biorthogonal.
        """
        if not isinstance(references, dict):
            references = {k: r for k, r in enumerate(references) if r is not None}
        right = self.right.astype(complex if np.iscomplexobj(self.right) else float, copy=True)
        left = self.left.astype(right.dtype, copy=True)
        for k, ref in references.items():
            overlap = np.vdot(np.asarray(ref), right[:, k])
            if abs(overlap) == 0:
                continue
            phase = np.conj(overlap) / abs(overlap)
            if not np.iscomplexobj(right):
                phase = float(np.sign(phase.real)) or 1.0
            right[:, k] *= phase
            left[k, :] /= phase
        return replace(self, right=right, left=left)


def eigendecompose(Q, tol: float = ZERO_SNAP, max_condition: float = MAX_CONDITION) -> SpectralDecomposition:
    """Full right/left eigen-decomposition of a square matrix.

    Eigenvalues within ``tol * max|Q_ii|`` of zero are snapped to exactly
    zero.  Raises :class:`Defective` when the eigenvector matrix is too
    ill-conditioned (condition number above ``max_condition``).
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"matrix must be square, got shape {Q.shape}")
    n = Q.shape[0]
    scale = _scale(Q)
    if np.allclose(Q, Q.T, rtol=0, atol=1e-14 * scale):
        w, V = np.linalg.eigh((Q + Q.T) / 2)
    else:
        w, V = scipy.linalg.eig(Q)
        w = _realify(w, rtol=1e-12)
    w = np.array(w)
    zero = np.abs(w) < tol * scale
    w[zero] = 0
    order = np.lexsort((np.round(w.imag, 12) if np.iscomplexobj(w) else np.zeros(n),
                        np.round(w.real, 12)))
    w = w[order]
    V = V[:, order]
    zero = zero[order]
    V = np.column_stack([_orient(V[:, k]) for k in range(n)]) if n else V
    if not np.iscomplexobj(w):
        V = _realify(V, rtol=1e-10)
    cond = float(np.linalg.cond(V)) if n else 1.0
    if not np.isfinite(cond) or cond > max_condition:
        raise Defective(f"eigenvector matrix condition number {cond:.3g} exceeds {max_condition:.1g}; "
                        "matrix is not reliably diagonalizable")
    left = np.linalg.inv(V)
    zero_idx = tuple(int(k) for k in np.flatnonzero(zero))
    steady = zero_idx[0] if zero_idx else None
    return SpectralDecomposition(w, V, left, steady, cond, zero_idx)


def degenerate_basis_choice(Q, tol: float = 1e-8) -> SpectralDecomposition:
    """Decomposition with an orthonormal, deterministic basis in each degenerate cluster.

    The basis is Gram-Schmidt applied, in index order, to the columns of
    the cluster's spectral projector, which does not depend on how the
    eigensolver happened to pick vectors inside the cluster.
    """
    d = Q if isinstance(Q, SpectralDecomposition) else eigendecompose(Q)
    right = d.right.astype(complex, copy=True)
    changed = False
    for group in d.clusters(tol):
        if len(group) < 2:
            continue
        changed = True
        P = right[:, group] @ d.left[group, :]
        thresh = 1e-8 * max(np.linalg.norm(P), 1.0)
        basis: list[np.ndarray] = []
        for col in P.T:
            v = col.astype(complex)
            for b in basis:
                v = v - np.vdot(b, v) * b
            if np.linalg.norm(v) > thresh:
                basis.append(_orient(v))
            if len(basis) == len(group):
                break
        if len(basis) != len(group):
            raise Defective(f"cluster {group} does not span {len(group)} dimensions")
        for k, b in zip(group, basis):
            right[:, k] = b
    if not changed:
        return d
    right = _realify(right, rtol=1e-10)
    left = np.linalg.inv(right)
    return replace(d, right=right, left=left, condition=float(np.linalg.cond(right)))


def matrix_exponential(Q, t: float = 1.0) -> np.ndarray:
    """``exp(Q t)`` by scaling-and-squaring with Pade approximants."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return scipy.linalg.expm(np.asarray(Q, dtype=float) * t)


@dataclass(frozen=True, eq=False)
class SteadyStatePair:
    right: np.ndarray
    left: np.ndarray
    psi: float
    omega: float


def _null_vectors(M: np.ndarray, tol: float):
    U, s, Vh = np.linalg.svd(M)
    cutoff = tol * max(s[0], 1e-300) if s.size else 0.0
    null_dim = int(np.sum(s <= cutoff))
    return U, s, Vh, null_dim


def _positive(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    total = v.sum()
    if abs(total) > 1e-12:
        return v * np.sign(total)
    return _orient(v).real


def steady_state_vectors(Q, tol: float = ZERO_SNAP) -> SteadyStatePair:
    """Unit right/left null vectors of ``Q`` and their entry sums.

    Raises :class:`NoZeroEigenvalue` if ``Q`` is nonsingular and
    :class:`Reducible` if the null space is not one-dimensional.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    if n == 1:
        if abs(Q[0, 0]) > tol:
            raise NoZeroEigenvalue("1x1 matrix is nonzero")
        one = np.ones(1)
        return SteadyStatePair(one, one, 1.0, 1.0)
    U, s, Vh, null_dim = _null_vectors(Q, tol)
    if null_dim == 0:
        raise NoZeroEigenvalue(f"smallest singular value {s[-1]:.3g} is not zero; Q is not a generator")
    if null_dim > 1:
        raise Reducible(f"null space has dimension {null_dim}")
    right = _positive(Vh[-1].real)
    left = _positive(U[:, -1].real)
    return SteadyStatePair(right, left, float(right.sum()), float(left.sum()))


@dataclass(frozen=True)
class GeneratorReport:
    valid: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.valid


def is_ctmc_generator(Q, protocol=None, tol: float | None = None) -> GeneratorReport:
    """Check the Metzler sign pattern and the protocol's zero line sums."""
    if protocol is None:
        protocol = getattr(Q, "protocol", None)
    if protocol is None:
        raise ValueError("protocol is required")
    protocol = Protocol.parse(protocol)
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        return GeneratorReport(False, (f"not square: shape {Q.shape}",))
    if tol is None:
        tol = 1e-9 * max(1.0, float(np.max(np.abs(Q))) if Q.size else 1.0)
    violations = []
    off = Q.copy()
    np.fill_diagonal(off, 0.0)
    for i, j in zip(*np.nonzero(off < -tol)):
        violations.append(f"negative off-diagonal Q[{i},{j}] = {Q[i, j]:.6g}")
    axis, label = (0, "column") if protocol is P1 else (1, "row")
    sums = Q.sum(axis=axis)
    for k in np.flatnonzero(np.abs(sums) > tol):
        violations.append(f"{label} {k} sums to {sums[k]:.6g}")
    return GeneratorReport(not violations, tuple(violations))


def gershgorin_disks(Q) -> tuple[np.ndarray, np.ndarray]:
    """Row Gershgorin disks as ``(centres, radii)``."""
    Q = np.asarray(Q)
    centres = np.diag(Q).copy()
    radii = np.abs(Q).sum(axis=1) - np.abs(centres)
    return centres, radii


def in_gershgorin_union(z, Q, slack: float = 1e-9) -> bool:
    centres, radii = gershgorin_disks(Q)
    return bool(np.any(np.abs(z - centres) <= radii + slack * max(1.0, float(np.max(np.abs(centres))))))
