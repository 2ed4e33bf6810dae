"""Scale selection and the control laws that drive a formation to its shape.

Two regimes are supported. A constant scale s_c turns the problem into plain
gradient descent on ½‖r(e) − s_c S̄‖². A state-dependent scale ŝ*(e) is built
from the matrix D̂ over the triangles of G_Δ, and the gain M̂(e) makes the
closed loop descend ‖r(e) − ŝ*(e) S̄‖².
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DegenerateConfigurationError, PreconditionError, TopologyError
from .geometry import (
    Geometry,
    Realization,
    ShapeVector,
    edge_matrix,
    edge_vector,
    lambda_matrix,
    rigidity_function,
    rigidity_matrix,
)
from .graph import FormationTopology, Graph, OrientedIncidence, TriangleSet

logger = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-14


class DhatConvention(str, Enum):
    """Diagonal sign of D̂.

    PUBLISHED uses Σ s̄_k − 4 s̄_i. GRAM uses Σ s̄_k + 4 s̄_i, under which
    D̂ r̂ = R Rᵀ S̄ on the graph-edge rows.
    """

    PUBLISHED = "published"
    GRAM = "gram"


@dataclass(frozen=True, eq=False)
class ControllerArtifacts:
    topology: FormationTopology
    shape: ShapeVector
    dhat: np.ndarray
    shape_hat: np.ndarray
    convention: DhatConvention

    @property
    def graph(self) -> Graph:
        return self.topology.graph

    @property
    def incidence(self) -> OrientedIncidence:
        return self.topology.incidence

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def m(self) -> int:
        return self.topology.m

    def edges(self, z: Realization) -> Geometry:
        return edge_vector(z, self.topology.incidence)

    def extended_edges(self, z: Realization) -> Geometry:
        return edge_vector(z, self.topology.gsum_incidence)


@dataclass(frozen=True, eq=False)
class ScaleState:
    s_n: float
    s_d: float
    s_star: float
    variational: float
    r_hat: np.ndarray


@dataclass(frozen=True, eq=False)
class GainMatrix:
    matrix: np.ndarray

    @property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    @property
    def min_singular_value(self) -> float:
        return float(self.singular_values[-1])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def is_singular(self, tol: float = 1e-8) -> bool:
        return self.min_singular_value < tol * self.norm


def build_artifacts(
    graph: Graph,
    shape: ShapeVector,
    convention: DhatConvention = DhatConvention.PUBLISHED,
) -> ControllerArtifacts:
    if shape.m != graph.m:
        raise PreconditionError(f"Shape has {shape.m} entries, graph has {graph.m} edges")
    if graph.m != 2 * graph.n - 3:
        logger.warning(
            "Graph has %d edges, a minimally rigid graph on %d vertices has %d",
            graph.m,
            graph.n,
            2 * graph.n - 3,
        )
    topology = FormationTopology.build(graph)
    dhat = build_dhat(topology.gsum, topology.triangles, shape, convention)
    shape_hat = np.concatenate([shape.squared, np.zeros(topology.complement.m)])
    return ControllerArtifacts(
        topology=topology,
        shape=shape,
        dhat=dhat,
        shape_hat=shape_hat,
        convention=DhatConvention(convention),
    )


def optimal_constant_scale(e0: Geometry, shape: ShapeVector) -> float:
    sq = shape.squared
    denominator = 2.0 * float(sq @ sq)
    if denominator == 0.0:
        raise PreconditionError("Shape vector is zero")
    lengths_sq = 2.0 * rigidity_function(e0)
    return float(lengths_sq @ sq) / denominator


def constant_cost_closed_form(e0: Geometry, shape: ShapeVector, s_c: float) -> float:
    if s_c <= 0:
        raise PreconditionError("Constant scale must be positive")
    lengths_sq = 2.0 * rigidity_function(e0)
    return float(np.sum((lengths_sq - 2.0 * s_c * shape.squared) ** 2) / 8.0)


def control_constant(
    e: Geometry, shape: ShapeVector, s_c: float, incidence: OrientedIncidence
) -> np.ndarray:
    residual = rigidity_function(e) - s_c * shape.squared
    return -rigidity_matrix(e, incidence).T @ residual


def lyapunov_constant(e: Geometry, shape: ShapeVector, s_c: float) -> float:
    residual = rigidity_function(e) - s_c * shape.squared
    return 0.5 * float(residual @ residual)


def lyapunov_varying(r: np.ndarray, shape: ShapeVector, s_star: float) -> float:
    residual = r - s_star * shape.squared
    return float(residual @ residual)


def build_dhat(
    gsum: Graph,
    triangles: TriangleSet,
    shape: ShapeVector,
    convention: DhatConvention = DhatConvention.PUBLISHED,
) -> np.ndarray:
    """D̂ over the edges of G_Δ, graph edges first.

    Rows of complement edges vanish. For a graph edge i, the neighbours are the
    edges that share a triangle with it.
    """
    m = triangles.graph_edges
    m_hat = gsum.m
    if shape.m != m:
        raise PreconditionError(f"Shape has {shape.m} entries, graph has {m} edges")
    sq = shape.squared
    D = np.zeros((m_hat, m_hat))
    for triangle in triangles:
        if max(triangle.edges) >= m_hat or min(triangle.edges) < 0:
            raise TopologyError(f"Triangle {triangle.labels} has an edge outside G_Δ")
        for i in triangle.edges:
            if i >= m:
                continue
            for j in triangle.edges:
                if j == i:
                    continue
                gamma = triangle.closing(i, j)
                if j < m:
                    D[i, i] += sq[j]
                    D[i, j] += sq[j]
                if gamma < m:
                    D[i, j] -= sq[gamma]
    sign = 4.0 if DhatConvention(convention) is DhatConvention.GRAM else -4.0
    D[np.arange(m), np.arange(m)] += sign * sq
    return D


def variational_scale(e: Geometry, shape: ShapeVector, incidence: OrientedIncidence) -> float:
    """argmin over Θ of ‖R(e)ᵀ(r(e) − Θ S̄)‖²."""
    R = rigidity_matrix(e, incidence)
    a = R.T @ shape.squared
    b = R.T @ rigidity_function(e)
    denominator = float(a @ a)
    if denominator <= DEGENERATE_TOL * max(1.0, float(b @ b)):
        raise DegenerateConfigurationError("Rigidity matrix annihilates the shape vector")
    return float(a @ b) / denominator


def scale_function(
    z: Realization, artifacts: ControllerArtifacts, variational: bool = True
) -> ScaleState:
    """ŝ* = r̂ᵀD̂r̂ / ŜᵀD̂r̂, with the variational minimizer alongside when requested."""
    e = artifacts.edges(z)
    r_hat = rigidity_function(artifacts.extended_edges(z))
    D, shape_hat = artifacts.dhat, artifacts.shape_hat
    d_r = D @ r_hat
    s_n = float(r_hat @ d_r)
    s_d = float(shape_hat @ d_r)
    bound = np.linalg.norm(D) * np.linalg.norm(shape_hat) * np.linalg.norm(r_hat)
    if abs(s_d) <= DEGENERATE_TOL * max(1.0, bound):
        raise DegenerateConfigurationError(f"Scale denominator vanishes (s_D = {s_d:.3e})")
    reference = float("nan")
    if variational:
        try:
            reference = variational_scale(e, artifacts.shape, artifacts.incidence)
        except DegenerateConfigurationError:
            logger.debug("Variational scale undefined at this state")
    return ScaleState(
        s_n=s_n,
        s_d=s_d,
        s_star=s_n / s_d,
        variational=reference,
        r_hat=r_hat,
    )


def gain_matrix(artifacts: ControllerArtifacts, state: ScaleState) -> GainMatrix:
    """M̂ = s_D²[I 0] − s_D S̄ r̂ᵀ(D̂ᵀ + D̂) + s_N S̄ ŜᵀD̂, of shape |E|×|E_Δ|."""
    m = artifacts.m
    D, shape_hat = artifacts.dhat, artifacts.shape_hat
    sq = artifacts.shape.squared
    selector = np.eye(m, D.shape[0])
    matrix = (
        state.s_d ** 2 * selector
        - state.s_d * np.outer(sq, state.r_hat @ (D.T + D))
        + state.s_n * np.outer(sq, shape_hat @ D)
    )
    return GainMatrix(matrix)


def lambda_hat(z: Realization, artifacts: ControllerArtifacts) -> np.ndarray:
    """∂r̂/∂e as a 2|E|×|E_Δ| matrix.

    Each complement column comes from its parent triangle: for
    e_γ = σ_i e_i + σ_j e_j the blocks of e_i and e_j hold σ_i e_γ and σ_j e_γ.
    """
    topology = artifacts.topology
    e = artifacts.edges(z)
    extended = edge_matrix(artifacts.extended_edges(z))
    m, m_hat = topology.m, topology.m_hat
    out = np.zeros((2 * m, m_hat))
    out[:, :m] = lambda_matrix(e)
    for gamma, parent in topology.parents.items():
        i, j, _ = parent.edges
        sigma_i, sigma_j = parent.signs
        out[2 * i:2 * i + 2, gamma] = sigma_i * extended[gamma]
        out[2 * j:2 * j + 2, gamma] = sigma_j * extended[gamma]
    return out


def control_varying(
    z: Realization,
    artifacts: ControllerArtifacts,
    state: Optional[ScaleState] = None,
) -> np.ndarray:
    """Node velocities −ĤᵀΛ̂ Gᵀ(r − ŝ*S̄) with the gain normalized as G = M̂/s_D².

    With this normalization the flow is ż = −½∇_z ‖r − ŝ* S̄‖².
    """
    if state is None:
        state = scale_function(z, artifacts, variational=False)
    r = state.r_hat[: artifacts.m]
    residual = r - state.s_star * artifacts.shape.squared
    gain = gain_matrix(artifacts, state).matrix / state.s_d ** 2
    edge_velocity = lambda_hat(z, artifacts) @ (gain.T @ residual)
    return -artifacts.incidence.expanded.T @ edge_velocity


def singularity_criterion(
    r: np.ndarray, shape: ShapeVector, D: np.ndarray
) -> tuple[float, float]:
    """Both sides of S̄ᵀDr·rᵀDS̄ = rᵀDr·S̄ᵀDS̄, equal exactly when M is singular."""
    sq = shape.squared
    lhs = float(sq @ D @ r) * float(r @ D @ sq)
    rhs = float(r @ D @ r) * float(sq @ D @ sq)
    return lhs, rhs
