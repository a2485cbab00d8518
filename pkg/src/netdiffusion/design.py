"""Spectral redesign: keep the eigenvector basis, move eigenvalues, rebuild the rate matrix."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InvalidPlan, SteadyModeEdited
from .graph import Protocol
from .spectral import GeneratorReport, SpectralDecomposition, _realify, eigendecompose, is_ctmc_generator

CLUSTER_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class RespectrumPlan:
    """Eigenvalue edits ``{mode index: new eigenvalue}`` against a fixed basis.

    Mode indices refer to ``decomposition.eigenvalues`` (ascending real
    part, steady mode last).  Validation rejects edits of the steady mode,
    eigenvalues with positive real part, unpaired complex values and edits
    that split a degenerate cluster.
    """

    decomposition: SpectralDecomposition
    edits: Mapping[int, complex]
    protocol: Protocol | None = None
    cluster_tol: float = CLUSTER_TOL
    _new: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = self.decomposition
        edits = {int(k): complex(v) for k, v in dict(self.edits).items()}
        for k, v in edits.items():
            if not 0 <= k < d.n:
                raise InvalidPlan(f"mode {k} out of range for {d.n} modes")
            if k in d.zero_indices and v != 0:
                raise SteadyModeEdited("the steady eigenvalue q_s = 0 must be preserved")
            if v.real > 0:
                raise InvalidPlan(f"edited eigenvalue {v} has positive real part")
        for group in d.clusters(self.cluster_tol):
            touched = [k for k in group if k in edits]
            if touched and (len(touched) != len(group) or not self._one_value([edits[k] for k in group])):
                raise InvalidPlan(f"degenerate cluster {group} must be edited as a whole, to one value")
        new = np.array(d.eigenvalues, dtype=complex)
        for k, v in edits.items():
            new[k] = v
        self._check_conjugates(new)
        object.__setattr__(self, "edits", edits)
        object.__setattr__(self, "_new", new)
        if self.protocol is not None:
            object.__setattr__(self, "protocol", Protocol.parse(self.protocol))

    def _one_value(self, values: list[complex]) -> bool:
        v = np.asarray(values)
        return bool(np.ptp(v.real) + np.ptp(v.imag) <= self.cluster_tol * max(1.0, float(np.max(np.abs(v)))))

    def _check_conjugates(self, new: np.ndarray) -> None:
        tol = 1e-9 * max(1.0, float(np.max(np.abs(new))))
        d = self.decomposition
        for k in np.flatnonzero(np.abs(new.imag) > tol):
            partner = np.flatnonzero(np.abs(d.eigenvalues - np.conj(d.eigenvalues[k])) < self.cluster_tol)
            partner = [p for p in partner if p != k]
            if not partner or not any(abs(new[p] - np.conj(new[k])) <= tol for p in partner):
                raise InvalidPlan(f"complex eigenvalue {new[k]} at mode {k} needs its conjugate partner edited to match")

    @classmethod
    def from_matrix(cls, Q, edits: Mapping[int, complex], **kwargs) -> "RespectrumPlan":
        kwargs.setdefault("protocol", getattr(Q, "protocol", None))
        return cls(eigendecompose(Q), edits, **kwargs)

    @property
    def new_eigenvalues(self) -> np.ndarray:
        return _realify(self._new, rtol=1e-12)


def expand_cluster_edits(d: SpectralDecomposition, edits: Mapping[int, complex],
                         tol: float = CLUSTER_TOL) -> dict[int, complex]:
    """Apply each edit to every mode in the same degenerate cluster."""
    out: dict[int, complex] = {}
    groups = d.clusters(tol)
    for k, v in edits.items():
        group = next((g for g in groups if k in g), [k])
        for m in group:
            if m in out and out[m] != v:
                raise InvalidPlan(f"conflicting edits for cluster {group}")
            out[m] = v
    return out


@dataclass(frozen=True, eq=False)
class RespectrumResult:
    Q: np.ndarray
    report: GeneratorReport | None
    eigenvalues: np.ndarray


def respectrum(plan: RespectrumPlan) -> RespectrumResult:
    """``Q_new = A diag(q_edited) A^-1`` and its generator validity for the plan's protocol."""
    d = plan.decomposition
    Q_new = d.reconstruct(plan.new_eigenvalues)
    if np.iscomplexobj(Q_new):
        raise InvalidPlan("reconstruction is not real; check conjugate pairing of the edits")
    report = is_ctmc_generator(Q_new, plan.protocol) if plan.protocol is not None else None
    return RespectrumResult(Q_new, report, plan.new_eigenvalues)


@dataclass(frozen=True)
class EdgeChange:
    """Change of the rate ``Q[i, j]`` (weight of link ``(i, j)``)."""

    i: int
    j: int
    old: float
    new: float

    @property
    def delta(self) -> float:
        return self.new - self.old


def edge_changes(Q_old, Q_new, tol: float = 1e-12) -> list[EdgeChange]:
    """Off-diagonal entries that differ, i.e. the per-link weight changes."""
    Q_old = np.asarray(Q_old, dtype=float)
    Q_new = np.asarray(Q_new, dtype=float)
    if Q_old.shape != Q_new.shape:
        raise ValueError("matrices differ in shape")
    diff = np.abs(Q_new - Q_old) > tol * max(1.0, float(np.max(np.abs(Q_old))))
    np.fill_diagonal(diff, False)
    return [EdgeChange(int(i), int(j), float(Q_old[i, j]), float(Q_new[i, j])) for i, j in zip(*np.nonzero(diff))]
