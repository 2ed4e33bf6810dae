from contextlib import nullcontext
from itertools import combinations

import networkx as nx
import numpy as np
import pytest

from shapeformation.errors import PreconditionError, TopologyError
from shapeformation.graph import (
    FormationTopology,
    Graph,
    enumerate_triangles,
    graph_sum,
    is_minimally_rigid,
    oriented_incidence,
    triangular_complement,
)

TRIANGLE = Graph(n=3, edges=[(1, 2), (2, 3), (1, 3)])
SQUARE_WITH_DIAGONAL = Graph(n=4, edges=[(1, 2), (2, 3), (3, 4), (1, 4), (1, 3)])
SQUARE_START = [0.0, 0.0, 1.0, 0.0, 1.0, 2.0, 0.0, 2.0]


class TestGraph:
    @pytest.mark.parametrize(
        ("edges", "error"),
        [
            pytest.param([(1, 2), (2, 3)], None, id="valid"),
            pytest.param([(2, 1)], None, id="reversed-pair"),
            pytest.param([(1, 2), (2,)], ValueError("Malformed edge"), id="short-pair"),
            pytest.param([(1, 1)], ValueError("Self-loop on vertex 1"), id="self-loop"),
            pytest.param([(1, 4)], ValueError("outside"), id="label-out-of-range"),
            pytest.param([(0, 1)], ValueError("outside"), id="label-zero"),
            pytest.param([(1, 2), (2, 1)], ValueError("Duplicate edge"), id="duplicate"),
            pytest.param("12", ValueError("list of vertex pairs"), id="string"),
        ],
    )
    def test_validation(self, edges, error):
        with maybe_raises(error):
            Graph(n=3, edges=edges)

    def test_needs_three_vertices(self):
        with pytest.raises(ValueError, match="greater than or equal to 3"):
            Graph(n=2, edges=[(1, 2)])

    def test_edges_keep_supplied_order(self):
        subject = Graph(n=3, edges=[(2, 3), (2, 1)])
        assert subject.edges == ((2, 3), (1, 2))
        assert Graph.canonical(3, [(2, 3), (2, 1)]).edges == ((1, 2), (2, 3))

    def test_edge_index(self):
        assert SQUARE_WITH_DIAGONAL.edge_index(3, 1) == 4
        assert (4, 1) in SQUARE_WITH_DIAGONAL
        assert (2, 4) not in SQUARE_WITH_DIAGONAL
        with pytest.raises(KeyError):
            SQUARE_WITH_DIAGONAL.edge_index(2, 4)

    def test_neighbors(self):
        assert SQUARE_WITH_DIAGONAL.neighbors(1) == [2, 3, 4]
        assert SQUARE_WITH_DIAGONAL.neighbors(2) == [1, 3]

    def test_is_connected(self):
        assert TRIANGLE.is_connected()
        assert not Graph(n=4, edges=[(1, 2), (3, 4)]).is_connected()


class TestOrientedIncidence:
    def test_triangle(self):
        subject = oriented_incidence(TRIANGLE)
        expected = np.array([[-1, 1, 0], [0, -1, 1], [-1, 0, 1]], dtype=float)
        np.testing.assert_array_equal(subject.matrix, expected)
        assert subject.rank() == 2
        assert subject.expanded.shape == (6, 6)

    def test_rows_sum_to_zero(self):
        subject = oriented_incidence(SQUARE_WITH_DIAGONAL)
        np.testing.assert_array_equal(subject.matrix.sum(axis=1), np.zeros(5))
        assert subject.rank() == SQUARE_WITH_DIAGONAL.n - 1

    def test_disconnected(self):
        with pytest.raises(TopologyError, match="Graph is not connected"):
            oriented_incidence(Graph(n=4, edges=[(1, 2), (3, 4)]))


class TestTriangularComplement:
    @pytest.mark.parametrize(
        ("graph", "expected"),
        [
            pytest.param(SQUARE_WITH_DIAGONAL, ((2, 4),), id="square-with-diagonal"),
            pytest.param(Graph(n=4, edges=[(1, 2), (2, 3), (3, 4), (1, 4)]), ((1, 3), (2, 4)), id="4-cycle"),
            pytest.param(Graph(n=3, edges=[(1, 2), (2, 3)]), ((1, 3),), id="path"),
            pytest.param(TRIANGLE, (), id="complete"),
            pytest.param(Graph(n=4, edges=[(1, 2), (1, 3), (1, 4)]), ((2, 3), (2, 4), (3, 4)), id="star"),
        ],
    )
    def test_complement(self, graph: Graph, expected):
        assert triangular_complement(graph).edges == expected

    def test_long_path_only_joins_distance_two(self):
        subject = triangular_complement(Graph(n=4, edges=[(1, 2), (2, 3), (3, 4)]))
        assert subject.edges == ((1, 3), (2, 4))

    def test_graph_sum(self):
        complement = triangular_complement(SQUARE_WITH_DIAGONAL)
        subject = graph_sum(SQUARE_WITH_DIAGONAL, complement)
        assert subject.edges == SQUARE_WITH_DIAGONAL.edges + ((2, 4),)

    @pytest.mark.parametrize("seed", range(50))
    def test_graph_sum_matches_two_hop_reachability(self, seed: int):
        graph = random_connected_graph(np.random.default_rng(seed))
        adjacency = nx.to_numpy_array(graph.to_networkx(), nodelist=range(1, graph.n + 1)) > 0
        two_hop = (adjacency.astype(int) @ adjacency.astype(int) > 0) & ~adjacency & ~np.eye(graph.n, dtype=bool)
        expected = {(u + 1, v + 1) for u, v in zip(*np.nonzero(np.triu(two_hop)))}

        complement = triangular_complement(graph)
        subject = graph_sum(graph, complement)
        assert set(complement.edges) == expected
        assert subject.edges[: graph.m] == graph.edges
        assert set(subject.edges[graph.m :]) == expected

    @pytest.mark.parametrize(
        ("other", "error"),
        [
            pytest.param(Graph(n=5, edges=[(4, 5)]), TopologyError("vertex set"), id="vertex-mismatch"),
            pytest.param(Graph(n=4, edges=[(1, 3)]), TopologyError("both graphs"), id="overlap"),
        ],
    )
    def test_graph_sum__invalid(self, other: Graph, error):
        with maybe_raises(error):
            graph_sum(SQUARE_WITH_DIAGONAL, other)


class TestTriangles:
    def test_single_triangle(self):
        (subject,) = enumerate_triangles(TRIANGLE)
        assert subject.edges == (0, 1, 2)
        assert subject.vertices == (1, 2, 3)
        assert subject.signs == (1, 1)
        assert subject.labels == (1, 2, 3)

    def test_square_with_diagonal(self):
        gsum = graph_sum(SQUARE_WITH_DIAGONAL, triangular_complement(SQUARE_WITH_DIAGONAL))
        subject = enumerate_triangles(gsum, SQUARE_WITH_DIAGONAL.m)
        assert [t.edges for t in subject] == [(0, 1, 4), (0, 3, 5), (1, 2, 5), (2, 3, 4)]
        parent = subject.parent_of(5)
        assert parent.edges == (0, 3, 5)
        assert parent.signs == (-1, 1)
        assert parent.closing(0, 5) == 3

    def test_every_three_clique_is_listed(self):
        graph = Graph(n=6, edges=[(2, 4), (2, 3), (1, 4), (4, 5), (1, 5), (2, 5), (3, 5), (2, 6), (3, 6)])
        gsum = graph_sum(graph, triangular_complement(graph))
        subject = enumerate_triangles(gsum, graph.m)
        g = gsum.to_networkx()
        expected = sum(1 for clique in nx.enumerate_all_cliques(g) if len(clique) == 3)
        assert len(subject) == expected

    def test_composition_signs(self):
        graph = Graph(n=6, edges=[(2, 4), (2, 3), (1, 3), (1, 4), (1, 5), (4, 6), (3, 4), (4, 5), (5, 6)])
        topology = FormationTopology.build(graph)
        z = np.random.default_rng(7).normal(size=12)
        e = (topology.gsum_incidence.expanded @ z).reshape(-1, 2)
        for triangle in topology.triangles:
            i, j, gamma = triangle.edges
            sigma_i, sigma_j = triangle.signs
            np.testing.assert_allclose(e[gamma], sigma_i * e[i] + sigma_j * e[j], atol=1e-12)

    def test_graph_edge_count_out_of_range(self):
        with pytest.raises(TopologyError):
            enumerate_triangles(TRIANGLE, 4)


class TestRigidity:
    @pytest.mark.parametrize(
        ("graph", "z", "expected"),
        [
            pytest.param(SQUARE_WITH_DIAGONAL, SQUARE_START, True, id="square-with-diagonal"),
            pytest.param(
                Graph(n=4, edges=[(1, 2), (2, 3), (3, 4), (1, 4)]), SQUARE_START, False, id="4-cycle"
            ),
            pytest.param(TRIANGLE, [0.0, 0.0, 1.0, 0.0, 0.0, 1.0], True, id="triangle"),
            pytest.param(
                Graph(n=4, edges=[(1, 2), (2, 3), (3, 4), (1, 4), (1, 3), (2, 4)]),
                SQUARE_START,
                False,
                id="over-braced",
            ),
        ],
    )
    def test_is_minimally_rigid(self, graph: Graph, z, expected: bool):
        assert is_minimally_rigid(graph, z) is expected

    def test_collinear(self):
        with pytest.raises(PreconditionError, match="collinear"):
            is_minimally_rigid(TRIANGLE, [0.0, 0.0, 1.0, 0.0, 2.0, 0.0])


class TestFormationTopology:
    def test_build(self):
        subject = FormationTopology.build(SQUARE_WITH_DIAGONAL)
        assert (subject.n, subject.m, subject.m_hat) == (4, 5, 6)
        assert subject.complement.edges == ((2, 4),)
        assert list(subject.parents) == [5]
        assert subject.incidence.matrix.shape == (5, 4)
        assert subject.gsum_incidence.matrix.shape == (6, 4)

    def test_complete_graph_has_no_complement(self):
        subject = FormationTopology.build(TRIANGLE)
        assert subject.m_hat == subject.m == 3
        assert subject.parents == {}


def random_connected_graph(rng: np.random.Generator) -> Graph:
    n = int(rng.integers(3, 10))
    edges = {(int(rng.integers(1, v)), v) for v in range(2, n + 1)}
    for u, v in combinations(range(1, n + 1), 2):
        if rng.random() < 0.25:
            edges.add((u, v))
    return Graph(n=n, edges=sorted(edges))


def maybe_raises(error, **kwargs):
    if isinstance(error, BaseException):
        return pytest.raises(type(error), match=str(error), **kwargs)
    elif isinstance(error, type) and issubclass(error, BaseException):
        return pytest.raises(error, **kwargs)
    else:
        return nullcontext()
