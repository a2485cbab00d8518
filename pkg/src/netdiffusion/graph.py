"""Weighted digraphs and the matrices derived from them.

Edges follow the ``(i, j)`` convention of the adjacency matrix: an edge
``Edge(i, j, c, r)`` contributes ``A[i, j] = c * r``.  Under the
conservative protocol agent ``i`` takes a fraction ``c`` of agent ``j``'s
property when the edge's Poisson clock (rate ``r``) ticks; under the
non-conservative protocol agent ``i`` polls agent ``j`` with confidence
``c``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import networkx as nx
import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import BadParams, BadWeight, DuplicateEdge, GraphError, SelfLoop


class Protocol(str, enum.Enum):
    CONSERVATIVE = "P1"
    NONCONSERVATIVE = "P2"

    @classmethod
    def parse(cls, value) -> "Protocol":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper()
        aliases = {"P1": cls.CONSERVATIVE, "CONSERVATIVE": cls.CONSERVATIVE,
                   "P2": cls.NONCONSERVATIVE, "NONCONSERVATIVE": cls.NONCONSERVATIVE,
                   "NON-CONSERVATIVE": cls.NONCONSERVATIVE}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown protocol {value!r}") from None


P1 = Protocol.CONSERVATIVE
P2 = Protocol.NONCONSERVATIVE


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    c: float = 1.0
    r: float = 1.0

    @property
    def weight(self) -> float:
        return self.c * self.r

    def reversed(self) -> "Edge":
        return Edge(self.j, self.i, self.c, self.r)


@dataclass(frozen=True)
class WeightedDigraph:
    n: int
    edges: tuple[Edge, ...] = ()

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise GraphError(f"agent count must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", tuple(self.edges))
        seen = set()
        for e in self.edges:
            if not (0 <= e.i < self.n and 0 <= e.j < self.n):
                raise GraphError(f"edge {e} references an agent outside [0, {self.n})")
            if e.i == e.j:
                raise SelfLoop(f"self-loop on agent {e.i}: {e}")
            if (e.i, e.j) in seen:
                raise DuplicateEdge(f"duplicate directed edge ({e.i}, {e.j}): {e}")
            if not (0.0 < e.c <= 1.0) or not np.isfinite(e.c):
                raise BadWeight(f"confidence must lie in (0, 1]: {e}")
            if not (e.r > 0.0) or not np.isfinite(e.r):
                raise BadWeight(f"rate must be strictly positive: {e}")
            seen.add((e.i, e.j))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def reverse(self) -> "WeightedDigraph":
        return WeightedDigraph(self.n, tuple(e.reversed() for e in self.edges))

    def adjacency(self) -> np.ndarray:
        return adjacency_matrix(self)


def _as_edge(item) -> Edge:
    if isinstance(item, Edge):
        return item
    item = tuple(item)
    if len(item) == 4:
        return Edge(int(item[0]), int(item[1]), float(item[2]), float(item[3]))
    if len(item) == 3:
        return edge_from_weight(int(item[0]), int(item[1]), float(item[2]))
    if len(item) == 2:
        return Edge(int(item[0]), int(item[1]))
    raise GraphError(f"cannot interpret edge {item!r}")


def edge_from_weight(i: int, j: int, w: float) -> Edge:
    """Split a combined weight into confidence and rate.

    Confidence saturates at 1; anything above goes into the rate.
    """
    if not (w > 0) or not np.isfinite(w):
        raise BadWeight(f"combined weight must be positive: ({i}, {j}, {w})")
    c = min(w, 1.0)
    return Edge(i, j, c, w / c)


def build_graph(n: int, edges: Iterable = ()) -> WeightedDigraph:
    """Validated graph from 0-based edge tuples.

    Each edge is an :class:`Edge`, ``(i, j, c, r)``, ``(i, j, w)`` (split by
    :func:`edge_from_weight`) or ``(i, j)`` with unit confidence and rate.
    """
    return WeightedDigraph(n, tuple(_as_edge(e) for e in edges))


def graph_from_weights(W, tol: float = 0.0) -> WeightedDigraph:
    """Graph whose adjacency matrix is ``W`` (diagonal ignored)."""
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    edges = [edge_from_weight(i, j, W[i, j])
             for i in range(n) for j in range(n) if i != j and W[i, j] > tol]
    return WeightedDigraph(n, tuple(edges))


def adjacency_matrix(g: WeightedDigraph) -> np.ndarray:
    A = np.zeros((g.n, g.n))
    for e in g.edges:
        A[e.i, e.j] = e.weight
    return A


def _direction(direction: str) -> str:
    direction = str(direction).lower()
    if direction not in ("in", "out"):
        raise ValueError(f"direction must be 'in' or 'out', got {direction!r}")
    return direction


def degree_matrix(g: WeightedDigraph, direction: str = "in") -> np.ndarray:
    A = adjacency_matrix(g)
    axis = 0 if _direction(direction) == "in" else 1
    return np.diag(A.sum(axis=axis))


def laplacian(g: WeightedDigraph, direction: str = "in") -> np.ndarray:
    return degree_matrix(g, direction) - adjacency_matrix(g)


@dataclass(frozen=True, eq=False)
class TransitionRateMatrix:
    """A generator ``Q`` together with the protocol it was built for."""

    Q: np.ndarray
    protocol: Protocol

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError(f"rate matrix must be square, got shape {Q.shape}")
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "protocol", Protocol.parse(self.protocol))

    def __array__(self, dtype=None, copy=None):
        return self.Q if dtype is None else self.Q.astype(dtype)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def T(self) -> np.ndarray:
        return self.Q.T


def transition_rate_matrix(g: WeightedDigraph, protocol) -> TransitionRateMatrix:
    protocol = Protocol.parse(protocol)
    direction = "in" if protocol is P1 else "out"
    return TransitionRateMatrix(-laplacian(g, direction), protocol)


def as_generator(Q, protocol=None) -> TransitionRateMatrix:
    """Coerce ``Q`` into a :class:`TransitionRateMatrix`.

    A bare array needs an explicit ``protocol``; a tagged matrix keeps its
    own tag unless one is given.
    """
    if isinstance(Q, TransitionRateMatrix):
        if protocol is None or Protocol.parse(protocol) is Q.protocol:
            return Q
        return TransitionRateMatrix(Q.Q, protocol)
    if protocol is None:
        raise ValueError("a protocol is required for an untagged matrix")
    return TransitionRateMatrix(np.asarray(Q, dtype=float), protocol)


def protocol_of(Q):
    return Q.protocol if isinstance(Q, TransitionRateMatrix) else None


def is_strongly_connected(Q_or_graph, tol: float = 0.0) -> bool:
    """Directed reachability on the off-diagonal support of a matrix or graph."""
    if isinstance(Q_or_graph, WeightedDigraph):
        M = adjacency_matrix(Q_or_graph)
    else:
        M = np.array(Q_or_graph, dtype=float)
    n = M.shape[0]
    if n == 1:
        return True
    support = np.abs(M) > tol
    np.fill_diagonal(support, False)
    ncomp, _ = connected_components(support.astype(float), directed=True, connection="strong")
    return ncomp == 1


# --- random graph models ---------------------------------------------------

RANDOM_MODELS = ("erdos-renyi", "barabasi-albert", "watts-strogatz", "random-complete")


def _undirected_to_digraph(G: nx.Graph, n: int) -> WeightedDigraph:
    edges = []
    for u, v in sorted(G.edges()):
        edges.append(Edge(u, v))
        edges.append(Edge(v, u))
    return WeightedDigraph(n, tuple(edges))


def generate_random_graph(model: str, n: int, seed: int | None = None, **params) -> WeightedDigraph:
    """Sample a graph from one of :data:`RANDOM_MODELS`.

    Undirected models (Erdos-Renyi ``p``, Barabasi-Albert ``m``,
    Watts-Strogatz ``k``/``p``) yield symmetric unit-weight digraphs.
    ``random-complete`` draws every directed link weight uniformly on
    ``(0, 1]`` and stores it as the confidence with unit rate.
    """
    model = str(model).lower().replace("_", "-")
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise BadParams(f"n must be a positive integer, got {n!r}")
    n = int(n)
    try:
        if model == "erdos-renyi":
            p = float(params.pop("p"))
            if not 0.0 <= p <= 1.0:
                raise BadParams(f"edge probability must lie in [0, 1], got {p}")
            G = nx.gnp_random_graph(n, p, seed=seed)
        elif model == "barabasi-albert":
            m = int(params.pop("m"))
            if not 1 <= m < n:
                raise BadParams(f"barabasi-albert needs 1 <= m < n, got m={m}")
            G = nx.barabasi_albert_graph(n, m, seed=seed)
        elif model == "watts-strogatz":
            k = int(params.pop("k"))
            p = float(params.pop("p"))
            if not (2 <= k < n) or not 0.0 <= p <= 1.0:
                raise BadParams(f"watts-strogatz needs 2 <= k < n and p in [0, 1], got k={k}, p={p}")
            G = nx.connected_watts_strogatz_graph(n, k, p, seed=seed)
        elif model == "random-complete":
            rng = np.random.default_rng(seed)
            W = 1.0 - rng.random((n, n))  # (0, 1]
            edges = tuple(Edge(i, j, float(W[i, j]), 1.0)
                          for i in range(n) for j in range(n) if i != j)
            G = None
        else:
            raise BadParams(f"unknown model {model!r}; expected one of {RANDOM_MODELS}")
    except KeyError as exc:
        raise BadParams(f"{model} requires parameter {exc.args[0]!r}") from None
    if params:
        raise BadParams(f"unexpected parameters for {model}: {sorted(params)}")
    if G is None:
        return WeightedDigraph(n, edges)
    return _undirected_to_digraph(G, n)


# --- JSON graph files (1-based node ids) -----------------------------------

def graph_to_dict(g: WeightedDigraph, protocol=None) -> dict:
    out = {"n": g.n}
    if protocol is not None:
        out["protocol"] = Protocol.parse(protocol).value
    out["edges"] = [{"from": e.i + 1, "to": e.j + 1, "c": e.c, "r": e.r} for e in g.edges]
    return out


def graph_from_dict(data: dict) -> tuple[WeightedDigraph, Protocol | None]:
    try:
        n = data["n"]
        raw = data.get("edges", [])
        edges = [Edge(int(e["from"]) - 1, int(e["to"]) - 1,
                      float(e.get("c", 1.0)), float(e.get("r", 1.0))) for e in raw]
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph description: {exc}") from None
    protocol = Protocol.parse(data["protocol"]) if data.get("protocol") else None
    return WeightedDigraph(n, tuple(edges)), protocol


def load_graph(path) -> tuple[WeightedDigraph, Protocol | None]:
    with open(path) as fh:
        return graph_from_dict(json.load(fh))


def save_graph(g: WeightedDigraph, path, protocol=None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(graph_to_dict(g, protocol), indent=2) + "\n")
    return path
