"""Bearing-only localization quality of a three-agent formation.

Three sensors measure bearings to a target with noise σ. The Fisher
information determinant depends on the angles the sensor pairs subtend at the
target and is largest when the sensors sit on an equilateral triangle around it.
"""

import csv
import logging
from dataclasses import dataclass
from typing import IO, Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from .errors import PreconditionError
from .geometry import (
    Realization,
    ShapeVector,
    as_realization,
    cost_integrand,
    edge_vector,
    is_collinear,
    points,
)
from .graph import Graph
from .scale import build_artifacts, optimal_constant_scale, variational_scale
from .simulation import (
    ConstantScaleController,
    SimConfig,
    Trajectory,
    VaryingScaleController,
    format_number,
    integrate,
)

logger = logging.getLogger(__name__)

TRIANGLE = Graph(n=3, edges=[(1, 2), (2, 3), (1, 3)])
RANGE_TOL = 1e-6
OPTIMAL_DETERMINANT = 9.0 / 4.0

Angles = tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class SensorScene:
    sensors: np.ndarray
    target: np.ndarray
    sigma: float
    r: float
    range_spread: float = 0.0

    @classmethod
    def create(
        cls,
        sensors: Sequence[Sequence[float]],
        target: Sequence[float],
        sigma: float = 1.0,
        strict: bool = True,
    ) -> "SensorScene":
        """Scene with common range r; `strict=False` reports range spread instead of rejecting it."""
        sensors = np.asarray(sensors, dtype=float).reshape(3, 2)
        target = np.asarray(target, dtype=float).reshape(2)
        if sigma <= 0:
            raise PreconditionError("Bearing noise must be positive")
        ranges = np.linalg.norm(sensors - target, axis=1)
        if np.any(ranges <= 0):
            raise PreconditionError("Target coincides with a sensor")
        r = float(ranges.mean())
        spread = float((ranges.max() - ranges.min()) / r)
        if strict and spread > RANGE_TOL:
            raise PreconditionError(f"Sensor ranges differ by {spread:.3e} relative")
        return cls(sensors=sensors, target=target, sigma=float(sigma), r=r, range_spread=spread)

    @property
    def ranges(self) -> np.ndarray:
        return np.linalg.norm(self.sensors - self.target, axis=1)


def circumcenter(z: Realization) -> np.ndarray:
    a, b, c = points(z)[:3]
    d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
    if abs(d) <= 1e-12 * max(1.0, float(np.max(np.abs([a, b, c]))) ** 2):
        raise PreconditionError("Collinear sensors have no circumcenter")
    sa, sb, sc = a @ a, b @ b, c @ c
    x = (sa * (b[1] - c[1]) + sb * (c[1] - a[1]) + sc * (a[1] - b[1])) / d
    y = (sa * (c[0] - b[0]) + sb * (a[0] - c[0]) + sc * (b[0] - a[0])) / d
    return np.array([x, y])


def subtended_angles(scene: SensorScene) -> Angles:
    """(θ12, θ13, θ23): the arcs at the target between each pair of sensors.

    Each arc is the one not containing the third bearing, so the three sum to
    2π. One of them exceeds π exactly when the target lies outside the sensor
    triangle.
    """
    offsets = scene.sensors - scene.target
    bearings = np.arctan2(offsets[:, 1], offsets[:, 0])
    order = np.argsort(bearings, kind="stable")
    arcs = {}
    for position in range(3):
        i, j = order[position], order[(position + 1) % 3]
        gap = bearings[j] - bearings[i]
        if position == 2:
            gap += 2.0 * np.pi
        arcs[frozenset((int(i), int(j)))] = float(gap)
    return arcs[frozenset((0, 1))], arcs[frozenset((0, 2))], arcs[frozenset((1, 2))]


def optimal_angles() -> Angles:
    half = 0.5 * float(np.arccos(-0.5))
    return half, half, 2.0 * np.pi - 2.0 * half


def _sorted(angles: Sequence[float]) -> tuple[float, float, float]:
    # descending: θ'23 ≥ θ'12 ≥ θ'13
    a, b, c = sorted((float(x) for x in angles), reverse=True)
    return a, b, c


def angle_differences(angles: Sequence[float]) -> tuple[float, float]:
    """(Δ1, Δ2) = (θ'12 − θ'13, θ'23 − θ'12) after sorting."""
    a, b, c = _sorted(angles)
    return b - c, a - b


def delta_inverse(angles: Sequence[float]) -> float:
    delta1, delta2 = angle_differences(angles)
    return delta1 + delta2


def fisher_determinant(angles: Sequence[float], r: float = 1.0, sigma: float = 1.0) -> float:
    if r <= 0 or sigma <= 0:
        raise PreconditionError("Range and bearing noise must be positive")
    return float(np.sum(np.sin(np.asarray(angles, dtype=float)) ** 2)) / (r ** 4 * sigma ** 4)


def fisher_information(scene: SensorScene) -> np.ndarray:
    """2×2 bearing-only information matrix with each sensor at its own range."""
    offsets = scene.sensors - scene.target
    bearings = np.arctan2(offsets[:, 1], offsets[:, 0])
    weights = 1.0 / (scene.ranges ** 2 * scene.sigma ** 2)
    s, c = np.sin(bearings), np.cos(bearings)
    return np.array(
        [
            [np.sum(weights * s * s), -np.sum(weights * s * c)],
            [-np.sum(weights * s * c), np.sum(weights * c * c)],
        ]
    )


def determinant_gap(angles: Sequence[float], r: float = 1.0, sigma: float = 1.0) -> float:
    """det(I) at the optimum minus det(I) at the given angles."""
    return OPTIMAL_DETERMINANT / (r ** 4 * sigma ** 4) - fisher_determinant(angles, r, sigma)


def published_gap(angles: Sequence[float], r: float = 1.0, sigma: float = 1.0) -> float:
    """The trigonometric sum Σ cos θ'_k cos(θ'_i − θ'_j) over the sorted angles.

    On angle triples summing to 2π it equals Σ cos 2θ, and
    determinant_gap = (3/4 + published_gap / 2) at r = σ = 1.
    """
    t23, t12, t13 = _sorted(angles)
    value = (
        np.cos(t23) * np.cos(t12 - t13)
        + np.cos(t13) * np.cos(t12 - t23)
        + np.cos(t12) * np.cos(t23 - t13)
    )
    return float(value) / (r ** 4 * sigma ** 4)


def angles_from_differences(delta1: float, delta2: float) -> Angles:
    """(θ12, θ13, θ23) with θ'13 = (2π − 2Δ1 − Δ2)/3."""
    smallest = (2.0 * np.pi - 2.0 * delta1 - delta2) / 3.0
    return smallest + delta1, smallest, smallest + delta1 + delta2


def is_admissible(delta1: float, delta2: float) -> bool:
    return delta1 >= 0 and 0 < delta2 - delta1 < np.pi / 2 and 0 < 2 * delta1 + delta2 < np.pi / 2


@dataclass(frozen=True)
class MonotonicityReport:
    checked: int
    violations: tuple[tuple[float, float, str, float], ...]

    @property
    def passed(self) -> bool:
        return not self.violations


def monotonicity_check(
    step: float = 0.01,
    h: float = 1e-6,
    delta1: Optional[Sequence[float]] = None,
    delta2: Optional[Sequence[float]] = None,
) -> MonotonicityReport:
    """Central-difference signs of ∂Δ/∂Δ1 and ∂Δ/∂Δ2 over the admissible grid."""
    grid1 = np.arange(0.0, np.pi / 2, step) if delta1 is None else np.asarray(delta1, dtype=float)
    grid2 = np.arange(step, np.pi / 2, step) if delta2 is None else np.asarray(delta2, dtype=float)

    def gap(d1: float, d2: float) -> float:
        return determinant_gap(angles_from_differences(d1, d2))

    checked = 0
    violations = []
    for d1 in grid1:
        for d2 in grid2:
            if not is_admissible(d1, d2):
                continue
            checked += 1
            by_delta1 = (gap(d1 + h, d2) - gap(d1 - h, d2)) / (2 * h)
            by_delta2 = (gap(d1, d2 + h) - gap(d1, d2 - h)) / (2 * h)
            if by_delta1 <= 0:
                violations.append((float(d1), float(d2), "delta1", float(by_delta1)))
            if by_delta2 <= 0:
                violations.append((float(d1), float(d2), "delta2", float(by_delta2)))
    if checked == 0:
        raise PreconditionError("No grid point lies in the admissible region")
    for violation in violations[:5]:
        logger.warning("Gap not increasing at Δ1=%.4f Δ2=%.4f along %s (%.3e)", *violation)
    return MonotonicityReport(checked=checked, violations=tuple(violations))


def scene_from_formation(
    z: Realization,
    target: Optional[Sequence[float]] = None,
    sigma: float = 1.0,
) -> SensorScene:
    """Sensors at the agents; the target is the circumcenter unless given."""
    z = as_realization(z, 3)
    if target is None:
        return SensorScene.create(points(z), circumcenter(z), sigma=sigma, strict=False)
    return SensorScene.create(points(z), target, sigma=sigma, strict=False)


@dataclass(eq=False)
class LocalizationSeries:
    mode: str
    times: np.ndarray
    delta_inverse: np.ndarray
    dos_inverse: np.ndarray
    fisher: np.ndarray
    trajectory: Trajectory

    def write_csv(self, out: IO) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["t", "deltaInv", "dosInv", "fisherDet"])
        for row in zip(self.times, self.delta_inverse, self.dos_inverse, self.fisher):
            writer.writerow([format_number(value) for value in row])


def localization_metrics(
    traj: Trajectory,
    target: Optional[Sequence[float]] = None,
    nominal_range: Optional[float] = 1.0,
    sigma: float = 1.0,
) -> LocalizationSeries:
    """δ⁻¹, dos⁻¹ and det(I) at every sample of a three-agent trajectory.

    With `nominal_range` set, det(I) is evaluated at that common range so the
    series reflects the sensor angles only; otherwise the full information matrix
    is built with each sensor at its own range.
    """
    deltas, fishers = [], []
    for state in traj.states:
        scene = scene_from_formation(state, target, sigma)
        angles = subtended_angles(scene)
        deltas.append(delta_inverse(angles))
        if nominal_range is None:
            fishers.append(float(np.linalg.det(fisher_information(scene))))
        else:
            fishers.append(fisher_determinant(angles, nominal_range, sigma))
    return LocalizationSeries(
        mode=traj.mode,
        times=traj.times.copy(),
        delta_inverse=np.array(deltas),
        dos_inverse=traj.integrands.copy(),
        fisher=np.array(fishers),
        trajectory=traj,
    )


def localization_experiment(
    z0: Realization,
    shape: ShapeVector,
    mode: str = "varying",
    config: Optional[SimConfig] = None,
    s_c: Optional[float] = None,
    target: Optional[Sequence[float]] = None,
    nominal_range: Optional[float] = 1.0,
) -> LocalizationSeries:
    config = config or SimConfig()
    z0 = as_realization(z0, 3)
    if is_collinear(z0):
        raise PreconditionError("Initial realization is collinear")
    artifacts = build_artifacts(TRIANGLE, shape, config.dhat)
    if mode == "constant":
        if s_c is None:
            s_c = optimal_constant_scale(edge_vector(z0, artifacts.incidence), shape)
        controller = ConstantScaleController(artifacts, s_c)
    elif mode == "varying":
        controller = VaryingScaleController(artifacts, scale_bounds=config.scale_bounds)
    else:
        raise ValueError(f"Invalid mode: {mode}")
    traj = integrate(z0, controller, config)
    return localization_metrics(traj, target, nominal_range)


@dataclass(frozen=True, eq=False)
class Dominance:
    times: np.ndarray
    leader: np.ndarray
    follower: np.ndarray

    @property
    def holds(self) -> bool:
        return bool(np.all(self.leader >= self.follower - 1e-9))

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.leader - self.follower))


def dominance(
    leader: LocalizationSeries, follower: LocalizationSeries, skip: float = 0.05
) -> Dominance:
    """Compare det(I) on the merged sample times after the first `skip` of the horizon.

    A run that converged early holds its final value afterwards.
    """
    horizon = max(leader.times[-1], follower.times[-1])
    times = np.union1d(leader.times, follower.times)
    times = times[times >= skip * horizon]
    return Dominance(
        times=times,
        leader=np.interp(times, leader.times, leader.fisher),
        follower=np.interp(times, follower.times, follower.fisher),
    )


def rank_association(samples: Sequence[Realization], shape: ShapeVector) -> float:
    """Spearman correlation between δ⁻¹ and dos⁻¹ at the best-fitting scale."""
    artifacts = build_artifacts(TRIANGLE, shape)
    deltas, inverses = [], []
    for z in samples:
        z = as_realization(z, 3)
        e = edge_vector(z, artifacts.incidence)
        theta = variational_scale(e, shape, artifacts.incidence)
        deltas.append(delta_inverse(subtended_angles(scene_from_formation(z))))
        inverses.append(cost_integrand(e, shape, theta, artifacts.incidence))
    correlation, _ = spearmanr(deltas, inverses)
    return float(correlation)
