import logging
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Iterator, Optional, Sequence

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import PreconditionError, TopologyError

logger = logging.getLogger(__name__)

Edge = tuple[int, int]


class Graph(BaseModel, frozen=True):
    """Undirected labelled graph with an ordered edge list.

    Labels are 1-based. Edge order is kept as supplied since downstream shape
    vectors pair their slots with it; use `Graph.canonical` for lexicographic order.
    """

    n: int = Field(ge=3)
    edges: tuple[Edge, ...]

    @field_validator("edges", mode="before")
    @classmethod
    def _normalize_edges(cls, value: Iterable[Sequence[int]]) -> tuple[Edge, ...]:
        if isinstance(value, (str, bytes)) or not isinstance(value, Iterable):
            raise ValueError("Edges must be a list of vertex pairs")
        edges = []
        for pair in value:
            try:
                u, v = (int(x) for x in pair)
            except (TypeError, ValueError):
                raise ValueError(f"Malformed edge {pair!r}") from None
            edges.append((min(u, v), max(u, v)))
        return tuple(edges)

    @model_validator(mode="after")
    def _check_edges(self) -> "Graph":
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"Self-loop on vertex {u}")
            if u < 1 or v > self.n:
                raise ValueError(f"Edge ({u}, {v}) has a label outside [1, {self.n}]")
            if (u, v) in seen:
                raise ValueError(f"Duplicate edge ({u}, {v})")
            seen.add((u, v))
        return self

    @classmethod
    def canonical(cls, n: int, edges: Iterable[Sequence[int]]) -> "Graph":
        pairs = sorted((min(u, v), max(u, v)) for u, v in edges)
        return cls(n=n, edges=pairs)

    @property
    def m(self) -> int:
        return len(self.edges)

    def __contains__(self, edge: Sequence[int]) -> bool:
        u, v = edge
        return (min(u, v), max(u, v)) in self.edge_lookup

    @property
    def edge_lookup(self) -> dict[Edge, int]:
        return {edge: k for k, edge in enumerate(self.edges)}

    def edge_index(self, u: int, v: int) -> int:
        """0-based position of the edge joining u and v."""
        try:
            return self.edge_lookup[(min(u, v), max(u, v))]
        except KeyError:
            raise KeyError((u, v)) from None

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(1, self.n + 1))
        g.add_edges_from(self.edges)
        return g

    def neighbors(self, vertex: int) -> list[int]:
        return sorted(self.to_networkx().neighbors(vertex))

    def is_connected(self) -> bool:
        return nx.is_connected(self.to_networkx())


@dataclass(frozen=True, eq=False)
class OrientedIncidence:
    """|E|×|V| incidence with +1 at the higher-labelled (sink) vertex."""

    matrix: np.ndarray

    @cached_property
    def expanded(self) -> np.ndarray:
        return np.kron(self.matrix, np.eye(2))

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.matrix))


@dataclass(frozen=True)
class Triangle:
    """A triangle of G_Δ given by 0-based edge indices i < j < gamma.

    `signs` records the composition e_gamma = signs[0]·e_i + signs[1]·e_j under the
    lower-to-higher orientation.
    """

    edges: tuple[int, int, int]
    vertices: tuple[int, int, int]
    signs: tuple[int, int]

    @property
    def labels(self) -> tuple[int, int, int]:
        return tuple(k + 1 for k in self.edges)  # type: ignore[return-value]

    def closing(self, a: int, b: int) -> int:
        """The edge of this triangle that is neither a nor b."""
        (gamma,) = set(self.edges) - {a, b}
        return gamma


@dataclass(frozen=True)
class TriangleSet:
    triangles: tuple[Triangle, ...]
    graph_edges: int

    def __len__(self) -> int:
        return len(self.triangles)

    def __iter__(self) -> Iterator[Triangle]:
        return iter(self.triangles)

    def is_parent(self, triangle: Triangle) -> bool:
        # both i and j are edges of G, so e_gamma is computable from G's geometry
        return triangle.edges[1] < self.graph_edges

    def parent_of(self, gamma: int) -> Optional[Triangle]:
        """Lowest (i, j) triangle that composes complement edge gamma from two graph edges."""
        for triangle in self.triangles:
            if triangle.edges[2] == gamma and self.is_parent(triangle):
                return triangle
        return None


def _require_connected(g: Graph) -> None:
    if not g.is_connected():
        raise TopologyError("Graph is not connected")


def oriented_incidence(g: Graph) -> OrientedIncidence:
    _require_connected(g)
    matrix = np.zeros((g.m, g.n))
    for k, (u, v) in enumerate(g.edges):
        matrix[k, u - 1] = -1.0
        matrix[k, v - 1] = 1.0
    return OrientedIncidence(matrix)


def triangular_complement(g: Graph) -> Graph:
    """Graph on the same vertices joining every pair at distance exactly 2 in g."""
    _require_connected(g)
    lengths = dict(nx.all_pairs_shortest_path_length(g.to_networkx(), cutoff=2))
    pairs = [
        (u, v)
        for u, v in combinations(range(1, g.n + 1), 2)
        if lengths[u].get(v) == 2
    ]
    return Graph(n=g.n, edges=pairs)


def graph_sum(g: Graph, gc: Graph) -> Graph:
    if g.n != gc.n:
        raise TopologyError("Graphs do not share a vertex set")
    overlap = [edge for edge in gc.edges if edge in g]
    if overlap:
        raise TopologyError(f"Edge {overlap[0]} appears in both graphs")
    return Graph(n=g.n, edges=g.edges + gc.edges)


def _composition_sign(edge: Edge, start: int, end: int) -> int:
    # sign s such that z_end - z_start = s * e_edge
    u, v = edge
    if (u, v) == (min(start, end), max(start, end)):
        return 1 if end > start else -1
    raise TopologyError(f"Edge {edge} does not join {start} and {end}")


def enumerate_triangles(gsum: Graph, graph_edges: Optional[int] = None) -> TriangleSet:
    """All 3-cliques of gsum with composition signs.

    `graph_edges` is |E|, the number of leading edges that belong to G; it defaults to
    every edge of gsum.
    """
    m = gsum.m if graph_edges is None else graph_edges
    if not 0 <= m <= gsum.m:
        raise TopologyError(f"Graph edge count {m} outside [0, {gsum.m}]")
    g = gsum.to_networkx()
    triangles = []
    for clique in nx.enumerate_all_cliques(g):
        if len(clique) < 3:
            continue
        if len(clique) > 3:
            break
        a, b, c = sorted(clique)
        indexed = sorted(
            (gsum.edge_index(p, q), (p, q)) for p, q in ((a, b), (a, c), (b, c))
        )
        (i, edge_i), (j, edge_j), (gamma, (p, q)) = indexed
        # vertex shared by edges i and j is the one not on gamma
        (shared,) = {a, b, c} - {p, q}
        if p in edge_i:
            signs = (_composition_sign(edge_i, p, shared), _composition_sign(edge_j, shared, q))
        else:
            signs = (_composition_sign(edge_i, shared, q), _composition_sign(edge_j, p, shared))
        triangles.append(Triangle(edges=(i, j, gamma), vertices=(a, b, c), signs=signs))
    triangles.sort(key=lambda t: t.edges)
    return TriangleSet(triangles=tuple(triangles), graph_edges=m)


def is_minimally_rigid(g: Graph, z: np.ndarray) -> bool:
    from .geometry import as_realization, edge_vector, is_collinear, rigidity_matrix

    z = as_realization(z, g.n)
    if is_collinear(z):
        raise PreconditionError("Realization is collinear")
    target = 2 * g.n - 3
    if g.m != target:
        return False
    incidence = oriented_incidence(g)
    R = rigidity_matrix(edge_vector(z, incidence), incidence)
    singular_values = np.linalg.svd(R, compute_uv=False)
    tol = 1e-9 * singular_values[0]
    return int(np.sum(singular_values > tol)) == target


@dataclass(frozen=True, eq=False)
class FormationTopology:
    """G together with G', G_Δ, their incidences and the triangles of G_Δ."""

    graph: Graph
    complement: Graph
    gsum: Graph
    incidence: OrientedIncidence
    gsum_incidence: OrientedIncidence
    triangles: TriangleSet
    parents: dict[int, Triangle] = field(default_factory=dict)

    @classmethod
    def build(cls, graph: Graph) -> "FormationTopology":
        complement = triangular_complement(graph)
        gsum = graph_sum(graph, complement)
        triangles = enumerate_triangles(gsum, graph.m)
        parents = {}
        for gamma in range(graph.m, gsum.m):
            parent = triangles.parent_of(gamma)
            if parent is None:
                raise TopologyError(f"Complement edge {gsum.edges[gamma]} has no parent triangle")
            parents[gamma] = parent
        logger.debug(
            "Topology with %d edges, %d complement edges, %d triangles",
            graph.m,
            complement.m,
            len(triangles),
        )
        return cls(
            graph=graph,
            complement=complement,
            gsum=gsum,
            incidence=oriented_incidence(graph),
            gsum_incidence=oriented_incidence(gsum),
            triangles=triangles,
            parents=parents,
        )

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def m(self) -> int:
        return self.graph.m

    @property
    def m_hat(self) -> int:
        return self.gsum.m
