import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import pdist

from .errors import PreconditionError
from .graph import Graph, OrientedIncidence

logger = logging.getLogger(__name__)

Realization = np.ndarray
Geometry = np.ndarray
ArrayLike = Union[np.ndarray, Sequence[float], Sequence[Sequence[float]]]

COLLINEAR_TOL = 1e-9
SIMILARITY_TOL = 1e-8


def as_realization(z: ArrayLike, n: Optional[int] = None) -> Realization:
    """Flatten z to the stacked form [x1, y1, ..., xn, yn] and validate it."""
    flat = np.asarray(z, dtype=float).reshape(-1)
    if flat.size % 2:
        raise PreconditionError(f"Realization has odd length {flat.size}")
    if n is not None and flat.size != 2 * n:
        raise PreconditionError(f"Realization has {flat.size // 2} agents, expected {n}")
    if not np.all(np.isfinite(flat)):
        raise PreconditionError("Realization has non-finite entries")
    return flat


def points(z: ArrayLike) -> np.ndarray:
    return np.asarray(z, dtype=float).reshape(-1, 2)


def centroid(z: ArrayLike) -> np.ndarray:
    return points(z).mean(axis=0)


def diameter(z: ArrayLike) -> float:
    p = points(z)
    if len(p) < 2:
        return 0.0
    return float(pdist(p).max())


def rotate(z: ArrayLike, phi: float, about: Optional[Sequence[float]] = None) -> Realization:
    p = points(z)
    pivot = np.zeros(2) if about is None else np.asarray(about, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    rotation = np.array([[c, -s], [s, c]])
    return ((p - pivot) @ rotation.T + pivot).reshape(-1)


def _triple_areas(p: np.ndarray) -> np.ndarray:
    triples = np.array(list(combinations(range(len(p)), 3)))
    a, b, c = p[triples[:, 0]], p[triples[:, 1]], p[triples[:, 2]]
    u, v = b - a, c - a
    return 0.5 * np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])


def is_collinear(z: ArrayLike, tol: float = COLLINEAR_TOL) -> bool:
    """True when every vertex triple spans an area below tol·diameter²."""
    p = points(z)
    if len(p) < 3:
        return True
    scale = diameter(p) ** 2
    if scale == 0.0:
        return True
    return bool(_triple_areas(p).max() <= tol * scale)


def edge_vector(z: ArrayLike, incidence: OrientedIncidence) -> Geometry:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != 2 * incidence.n:
        raise PreconditionError(
            f"Realization of length {z.size} does not match {incidence.n} vertices"
        )
    return incidence.expanded @ z


def edge_matrix(e: Geometry) -> np.ndarray:
    """Edge vectors as rows."""
    return np.asarray(e, dtype=float).reshape(-1, 2)


def rigidity_function(e: Geometry) -> np.ndarray:
    return 0.5 * np.sum(edge_matrix(e) ** 2, axis=1)


def lambda_matrix(e: Geometry) -> np.ndarray:
    """Block diagonal Λ(e) of shape 2|E|×|E| with e_k in column k."""
    edges = edge_matrix(e)
    m = len(edges)
    out = np.zeros((2 * m, m))
    for k, vector in enumerate(edges):
        out[2 * k:2 * k + 2, k] = vector
    return out


def rigidity_matrix(e: Geometry, incidence: OrientedIncidence) -> np.ndarray:
    edges = edge_matrix(e)
    if len(edges) != incidence.m:
        raise PreconditionError(f"Geometry has {len(edges)} edges, expected {incidence.m}")
    H = incidence.matrix
    return (H[:, :, None] * edges[:, None, :]).reshape(incidence.m, 2 * incidence.n)


@dataclass(frozen=True, eq=False)
class ShapeVector:
    """Desired edge lengths s with s̄ = s² in graph edge order.

    Build with `from_lengths` or `from_squared`; the latter keeps the supplied
    squares verbatim so tabulated s̄ values are not perturbed by a square root.
    """

    lengths: np.ndarray
    squared: np.ndarray

    def __post_init__(self) -> None:
        lengths = np.asarray(self.lengths, dtype=float).reshape(-1)
        squared = np.asarray(self.squared, dtype=float).reshape(-1)
        if lengths.size == 0:
            raise PreconditionError("Shape vector is empty")
        if lengths.shape != squared.shape:
            raise PreconditionError("Shape lengths and squares differ in size")
        if not np.all(np.isfinite(squared)) or np.any(squared <= 0):
            raise PreconditionError("Shape vector entries must be positive")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "squared", squared)

    @classmethod
    def from_lengths(cls, values: Sequence[float]) -> "ShapeVector":
        lengths = np.asarray(values, dtype=float)
        if np.any(lengths <= 0):
            raise PreconditionError("Shape vector entries must be positive")
        return cls(lengths, lengths * lengths)

    @classmethod
    def from_squared(cls, values: Sequence[float]) -> "ShapeVector":
        squared = np.asarray(values, dtype=float)
        if np.any(squared <= 0):
            raise PreconditionError("Shape vector entries must be positive")
        return cls(np.sqrt(squared), squared)

    @property
    def m(self) -> int:
        return self.lengths.size

    def __len__(self) -> int:
        return self.m


def shape_from_realization(z: ArrayLike, graph: Graph) -> ShapeVector:
    p = points(as_realization(z, graph.n))
    lengths = [np.linalg.norm(p[v - 1] - p[u - 1]) for u, v in graph.edges]
    return ShapeVector.from_lengths(lengths)


def shape_scale(e: Geometry, shape: ShapeVector) -> float:
    first = edge_matrix(e)[0]
    return float(first @ first / (2.0 * shape.squared[0]))


def is_similar(z: ArrayLike, zd: ArrayLike, tol: float = SIMILARITY_TOL) -> bool:
    """Label-preserving similarity: all pairwise length ratios agree within tol."""
    p, q = points(z), points(zd)
    if p.shape != q.shape:
        raise PreconditionError("Realizations have different agent counts")
    if is_collinear(p) or is_collinear(q):
        raise PreconditionError("Realization is collinear")
    dp, dq = pdist(p), pdist(q)
    # pdist lists the (1, 2) pair first
    ref_p = dp[0] if dp[0] > COLLINEAR_TOL * dp.max() else dp.max()
    ref_q = dq[0] if dq[0] > COLLINEAR_TOL * dq.max() else dq.max()
    return bool(np.max(np.abs(dp / ref_p - dq / ref_q)) <= tol)


@dataclass(frozen=True, eq=False)
class SimilarityDegree:
    rho: np.ndarray
    rho_norm_sq: float
    similar: bool

    @property
    def value(self) -> float:
        return float("inf") if self.similar else 1.0 / self.rho_norm_sq


def _weighted_edges(e: Geometry, weights: np.ndarray) -> np.ndarray:
    return (edge_matrix(e) * weights[:, None]).reshape(-1)


def dos(
    e: Geometry, eref: Geometry, theta: float, incidence: OrientedIncidence
) -> SimilarityDegree:
    if theta <= 0:
        raise PreconditionError("Scale must be positive")
    weights = rigidity_function(e) - theta * rigidity_function(eref)
    stacked = _weighted_edges(e, weights)
    rho = incidence.expanded.T @ stacked
    norm_sq = float(rho @ rho)
    floor = np.finfo(float).eps * max(1.0, float(np.abs(stacked).max(initial=0.0)))
    return SimilarityDegree(rho=rho, rho_norm_sq=norm_sq, similar=norm_sq <= floor ** 2)


def cost_integrand(
    e: Geometry, shape: ShapeVector, theta: float, incidence: OrientedIncidence
) -> float:
    if theta < 0:
        raise PreconditionError("Scale must be non-negative")
    residual = rigidity_function(e) - theta * shape.squared
    gradient = rigidity_matrix(e, incidence).T @ residual
    return float(gradient @ gradient)
