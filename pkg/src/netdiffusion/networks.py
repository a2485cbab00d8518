"""Small reference networks used throughout the tests and ``repro`` commands."""

from __future__ import annotations

from .graph import P1, P2, Edge, Protocol, WeightedDigraph


def path_graph(n: int = 5, alpha: float = 1.0) -> WeightedDigraph:
    """Path with forward links ``(k, k+1)`` of weight 1 and backward links of weight ``alpha``.

    Backward links carry ``alpha`` as confidence with unit rate.
    """
    edges = []
    for k in range(n - 1):
        edges.append(Edge(k, k + 1, 1.0, 1.0))
        edges.append(Edge(k + 1, k, alpha, 1.0))
    return WeightedDigraph(n, tuple(edges))


def asymmetric_cycle(protocol=P1) -> WeightedDigraph:
    """Four-node asymmetric cycle with weights {1, 0.5}.

    Spectrum of the generator is {-3, -2, -1, 0} under both protocols; the
    conservative stationary vector is proportional to [1/2, 1, 1/2, 1].
    For the non-conservative protocol every link is reversed, so that its
    generator is the transpose of the conservative one and the consensus
    weights are [1/2, 1, 1/2, 1] as well.
    """
    # (i, j, w): agent i draws from / polls agent j at combined weight w
    links = [(1, 0, 1.0), (2, 1, 0.5), (3, 2, 1.0), (0, 3, 0.5),
             (3, 0, 1.0), (2, 3, 0.5), (1, 2, 1.0), (0, 1, 0.5)]
    g = WeightedDigraph(4, tuple(Edge(i, j, w, 1.0) for i, j, w in links))
    return g.reverse() if Protocol.parse(protocol) is P2 else g


def star_graph(n: int = 5) -> WeightedDigraph:
    """Star with centre 0 and symmetric unit links to every leaf."""
    edges = []
    for leaf in range(1, n):
        edges.append(Edge(0, leaf))
        edges.append(Edge(leaf, 0))
    return WeightedDigraph(n, tuple(edges))


def symmetric_path(n: int = 3) -> WeightedDigraph:
    return path_graph(n, 1.0)


def symmetric_cycle(n: int = 4) -> WeightedDigraph:
    edges = []
    for k in range(n):
        edges.append(Edge(k, (k + 1) % n))
        edges.append(Edge((k + 1) % n, k))
    return WeightedDigraph(n, tuple(edges))
