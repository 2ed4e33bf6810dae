"""Positive per-coordinate gains that steer the final scale to a prescribed value.

With ż = Π u the agents still descend the same Lyapunov function, but each
coordinate moves at its own rate, so the formation settles at a different
point of the invariant set. The linear model asks for gains a with
z0 + Δz∘a equal to the target up to a planar translation, where Δz is the
displacement of the unmodified system.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, linprog

from .errors import InfeasibleGainsError, PreconditionError
from .geometry import Realization, as_realization, centroid, rigidity_function, rotate
from .scale import ControllerArtifacts
from .simulation import (
    SimConfig,
    Trajectory,
    VaryingScaleController,
    integrate,
)

logger = logging.getLogger(__name__)

SCALE_MATCH_TOL = 1e-6
ANCHOR_GAIN = 1.0 / 50.0


@dataclass(frozen=True, eq=False)
class ControllabilityGains:
    gains: np.ndarray
    offset: np.ndarray
    rotation: float
    residual: float

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.gains)


def target_scale(z: Realization, artifacts: ControllerArtifacts) -> np.ndarray:
    """Per-edge scale r_k / s̄_k of a realization."""
    return rigidity_function(artifacts.edges(z)) / artifacts.shape.squared


def natural_target(zf: Realization, lam: float, s_f: float) -> Realization:
    """Dilate zf about its centroid so that its scale moves from s_f to lam."""
    if lam <= 0 or s_f <= 0:
        raise PreconditionError("Scales must be positive")
    p = np.asarray(zf, dtype=float).reshape(-1, 2)
    middle = p.mean(axis=0)
    return ((p - middle) * np.sqrt(lam / s_f) + middle).reshape(-1)


def _solve_linear_program(
    z0: np.ndarray, displacement: np.ndarray, target: np.ndarray, gain_floor: float
) -> tuple[np.ndarray, np.ndarray, float]:
    # variables: a (2n), translation c (2), slack t (2n); minimize Σ t with t ≥ |a − 1|
    size = z0.size
    n_vars = 2 * size + 2
    objective = np.concatenate([np.zeros(size + 2), np.ones(size)])
    A_eq = np.zeros((size, n_vars))
    A_eq[np.arange(size), np.arange(size)] = displacement
    A_eq[np.arange(size), size + np.arange(size) % 2] = -1.0
    b_eq = target - z0
    A_ub = np.zeros((2 * size, n_vars))
    A_ub[np.arange(size), np.arange(size)] = 1.0
    A_ub[np.arange(size), size + 2 + np.arange(size)] = -1.0
    A_ub[size + np.arange(size), np.arange(size)] = -1.0
    A_ub[size + np.arange(size), size + 2 + np.arange(size)] = -1.0
    b_ub = np.concatenate([np.ones(size), -np.ones(size)])
    bounds = [(gain_floor, None)] * size + [(None, None)] * 2 + [(0, None)] * size
    result = linprog(
        objective,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10},
    )
    if result.status != 0:
        raise InfeasibleGainsError(f"No positive gains solve the linear system: {result.message}")
    a = result.x[:size].copy()
    offset = result.x[size:size + 2].copy()
    # polish coordinates that actually move so the equality holds to rounding
    moving = np.abs(displacement) > 1e-12
    shift = np.tile(offset, size // 2)
    a[moving] = (target - z0 + shift)[moving] / displacement[moving]
    return a, offset, float(result.fun)


def solve_controllability_gains(
    z0: Realization,
    zf_target: Realization,
    lam: float,
    artifacts: ControllerArtifacts,
    natural: Realization,
    gain_floor: float = 1e-3,
    rotations: Sequence[float] = (0.0,),
) -> ControllabilityGains:
    """Gains a > 0 with Ĥ(Δz∘a) = Ĥ R(θ) zf_target − Ĥ z0, Δz = natural − z0."""
    n = artifacts.n
    z0 = as_realization(z0, n)
    zf_target = as_realization(zf_target, n)
    natural = as_realization(natural, n)
    scales = target_scale(zf_target, artifacts)
    if np.max(np.abs(scales - lam)) > SCALE_MATCH_TOL * max(1.0, lam):
        raise PreconditionError(f"Target is not similar to the shape at scale {lam}")
    displacement = natural - z0
    H = artifacts.incidence.expanded
    best: Optional[ControllabilityGains] = None
    best_cost = np.inf
    failures = []
    for theta in rotations:
        target = rotate(zf_target, theta, centroid(zf_target))
        try:
            a, offset, cost = _solve_linear_program(z0, displacement, target, gain_floor)
        except InfeasibleGainsError as error:
            failures.append(str(error))
            continue
        residual = float(np.linalg.norm(H @ (displacement * a) - (H @ target - H @ z0)))
        logger.debug("Rotation %.4f: cost %.6f residual %.3e", theta, cost, residual)
        if cost < best_cost:
            best_cost = cost
            best = ControllabilityGains(gains=a, offset=offset, rotation=float(theta), residual=residual)
    if best is None:
        raise InfeasibleGainsError(failures[0] if failures else "No rotation candidates given")
    if np.any(best.gains <= 0):
        raise InfeasibleGainsError("Gains are not strictly positive")
    tolerance = 1e-8 * max(1.0, float(np.linalg.norm(H @ zf_target)))
    if best.residual > tolerance:
        raise InfeasibleGainsError(f"Linear system residual {best.residual:.3e} exceeds {tolerance:.3e}")
    return best


@dataclass(eq=False)
class TuningResult:
    gains: np.ndarray
    target_scale: float
    achieved_scale: float
    natural_scale: float
    trajectory: Trajectory
    evaluations: int
    direction: str

    @property
    def relative_error(self) -> float:
        return abs(self.achieved_scale - self.target_scale) / self.target_scale


def _anchor_directions(
    z0: np.ndarray, artifacts: ControllerArtifacts, lam: float, natural_scale: float
) -> list[tuple[str, np.ndarray]]:
    # slowing both endpoints of an edge keeps that edge near its initial length
    p = z0.reshape(-1, 2)
    above = lam > natural_scale
    candidates = []
    for k, (u, v) in enumerate(artifacts.graph.edges):
        anchored = 0.5 * float(np.sum((p[u - 1] - p[v - 1]) ** 2)) / artifacts.shape.squared[k]
        if (anchored > lam) if above else (anchored < lam):
            direction = np.zeros(z0.size)
            direction[[2 * u - 2, 2 * u - 1, 2 * v - 2, 2 * v - 1]] = np.log(ANCHOR_GAIN)
            candidates.append((abs(anchored - lam), f"anchor {u}-{v}", direction))
    candidates.sort(key=lambda item: item[0])
    return [(name, direction) for _, name, direction in candidates]


def tune_controllability_gains(
    z0: Realization,
    lam: float,
    artifacts: ControllerArtifacts,
    config: Optional[SimConfig] = None,
    gain_floor: float = 1e-3,
    max_expansions: int = 6,
    xtol: float = 1e-8,
) -> TuningResult:
    """Gains Π(α) = exp(α d) whose closed loop settles at scale lam.

    The direction d comes from the linear model when it brackets lam, otherwise
    from anchoring the endpoints of a single edge. α is found with Brent's method.
    """
    config = config or SimConfig()
    z0 = as_realization(z0, artifacts.n)
    reference = integrate(z0, VaryingScaleController(artifacts), config)
    natural_scale = reference.final_scale
    evaluations = 1
    cache: dict[tuple[str, float], float] = {}

    def run(gains: np.ndarray) -> Trajectory:
        nonlocal evaluations
        evaluations += 1
        return integrate(z0, VaryingScaleController(artifacts, gains=gains), config)

    def error(alpha: float, name: str, direction: np.ndarray) -> float:
        key = (name, float(alpha))
        if key not in cache:
            cache[key] = run(np.exp(alpha * direction)).final_scale - lam
        return cache[key]

    start = natural_scale - lam
    if abs(start) <= xtol * lam:
        return TuningResult(
            gains=np.ones(2 * artifacts.n),
            target_scale=lam,
            achieved_scale=natural_scale,
            natural_scale=natural_scale,
            trajectory=reference,
            evaluations=evaluations,
            direction="identity",
        )

    directions = []
    try:
        target = natural_target(reference.final_state, lam, natural_scale)
        linear = solve_controllability_gains(
            z0, target, lam, artifacts, reference.final_state, gain_floor=gain_floor
        )
        directions.append(("linear", np.log(linear.gains)))
    except (InfeasibleGainsError, PreconditionError) as exc:
        logger.info("Linear gains unavailable: %s", exc)
    directions.extend(_anchor_directions(z0, artifacts, lam, natural_scale))

    for name, direction in directions:
        if not np.any(direction):
            continue
        low, high = 0.0, 1.0
        value = error(high, name, direction)
        expansions = 0
        while np.sign(value) == np.sign(start) and expansions < max_expansions:
            low, high = high, 2.0 * high
            value = error(high, name, direction)
            expansions += 1
        if np.sign(value) == np.sign(start):
            logger.info("Direction %s does not bracket scale %.6f", name, lam)
            continue
        alpha = brentq(error, low, high, args=(name, direction), xtol=xtol)
        gains = np.exp(alpha * direction)
        trajectory = run(gains)
        logger.info(
            "Tuned gains along %s: alpha=%.6f scale=%.6f target=%.6f",
            name,
            alpha,
            trajectory.final_scale,
            lam,
        )
        return TuningResult(
            gains=gains,
            target_scale=lam,
            achieved_scale=trajectory.final_scale,
            natural_scale=natural_scale,
            trajectory=trajectory,
            evaluations=evaluations,
            direction=name,
        )
    raise InfeasibleGainsError(f"No gain family reaches scale {lam}")
