import csv
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Callable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.integrate import trapezoid
from scipy.stats import linregress

from .errors import DivergenceError, PreconditionError, StabilityViolationError
from .geometry import (
    Realization,
    as_realization,
    centroid,
    cost_integrand,
    diameter,
    is_collinear,
    is_similar,
    points,
    rigidity_function,
)
from .scale import (
    ControllerArtifacts,
    DhatConvention,
    control_constant,
    control_varying,
    lyapunov_constant,
    lyapunov_varying,
    scale_function,
)

logger = logging.getLogger(__name__)


class SimConfig(BaseModel, populate_by_name=True, frozen=True):
    dt: float = Field(default=1e-3, gt=0)
    t_max: float = Field(alias="tMax", default=50.0, gt=0)
    convergence_tol: float = Field(alias="convergenceTol", default=1e-6, gt=0)
    record_stride: int = Field(alias="recordStride", default=10, ge=1)
    divergence_factor: float = Field(alias="divergenceFactor", default=1e6, gt=1)
    stability_slack: float = Field(alias="stabilitySlack", default=1e-6, ge=0)
    check_stability: bool = Field(alias="checkStability", default=True)
    similarity_tol: float = Field(alias="similarityTol", default=1e-4, gt=0)
    scale_bounds: Optional[tuple[float, float]] = Field(alias="scaleBounds", default=None)
    dhat: DhatConvention = DhatConvention.PUBLISHED

    @model_validator(mode="after")
    def _check_horizon(self) -> "SimConfig":
        if self.t_max < self.dt:
            raise ValueError("tMax must be at least dt")
        if self.scale_bounds is not None:
            low, high = self.scale_bounds
            if not 0 < low < high:
                raise ValueError("scaleBounds must satisfy 0 < low < high")
        return self

    @property
    def steps(self) -> int:
        return int(round(self.t_max / self.dt))


class Termination(str, Enum):
    CONVERGED = "converged"
    MAX_TIME = "max_time"
    WRONG_EQUILIBRIUM = "wrong_equilibrium"


@dataclass(frozen=True)
class ControlSample:
    scale: float
    residual: float
    lyapunov: float
    integrand: float
    law: str


class Controller(ABC):
    """Closed-loop velocity field ż = Π u(z) for one scale regime."""

    mode: str = ""

    def __init__(
        self, artifacts: ControllerArtifacts, gains: Optional[Sequence[float]] = None
    ) -> None:
        self.artifacts = artifacts
        if gains is None:
            self.gains = np.ones(2 * artifacts.n)
        else:
            self.gains = np.asarray(gains, dtype=float).reshape(-1)
            if self.gains.size != 2 * artifacts.n:
                raise PreconditionError(f"Expected {2 * artifacts.n} gains, got {self.gains.size}")
            if np.any(self.gains <= 0):
                raise PreconditionError("Gains must be positive")

    @abstractmethod
    def velocity(self, z: Realization) -> np.ndarray: ...

    @abstractmethod
    def evaluate(self, z: Realization) -> ControlSample: ...

    def scale(self, z: Realization) -> float:
        return self.evaluate(z).scale

    def residual(self, z: Realization) -> float:
        return self.evaluate(z).residual

    def lyapunov(self, z: Realization) -> float:
        return self.evaluate(z).lyapunov

    def integrand(self, z: Realization) -> float:
        return self.evaluate(z).integrand

    def _sample(self, z: Realization, theta: float, lyapunov: float, law: str) -> ControlSample:
        e = self.artifacts.edges(z)
        shape = self.artifacts.shape
        residual = rigidity_function(e) - theta * shape.squared
        return ControlSample(
            scale=theta,
            residual=float(np.max(np.abs(residual))),
            lyapunov=lyapunov,
            integrand=cost_integrand(e, shape, theta, self.artifacts.incidence),
            law=law,
        )


class ConstantScaleController(Controller):
    mode = "constant"

    def __init__(
        self,
        artifacts: ControllerArtifacts,
        s_c: float,
        gains: Optional[Sequence[float]] = None,
    ) -> None:
        super().__init__(artifacts, gains)
        if s_c <= 0:
            raise PreconditionError("Constant scale must be positive")
        self.s_c = float(s_c)

    def velocity(self, z: Realization) -> np.ndarray:
        e = self.artifacts.edges(z)
        return self.gains * control_constant(
            e, self.artifacts.shape, self.s_c, self.artifacts.incidence
        )

    def evaluate(self, z: Realization) -> ControlSample:
        e = self.artifacts.edges(z)
        V = lyapunov_constant(e, self.artifacts.shape, self.s_c)
        return self._sample(z, self.s_c, V, "constant")


class VaryingScaleController(Controller):
    """Varying-scale law; with explicit per-coordinate gains it runs gain-scheduled."""

    def __init__(
        self,
        artifacts: ControllerArtifacts,
        gains: Optional[Sequence[float]] = None,
        scale_bounds: Optional[tuple[float, float]] = None,
    ) -> None:
        super().__init__(artifacts, gains)
        self.mode = "varying" if gains is None else "controllable"
        self.scale_bounds = scale_bounds

    def _clamped(self, s_star: float) -> Optional[float]:
        if self.scale_bounds is None:
            return None
        low, high = self.scale_bounds
        if low <= s_star <= high:
            return None
        return min(max(s_star, low), high)

    def velocity(self, z: Realization) -> np.ndarray:
        state = scale_function(z, self.artifacts, variational=False)
        clamp = self._clamped(state.s_star)
        if clamp is not None:
            e = self.artifacts.edges(z)
            u = control_constant(e, self.artifacts.shape, clamp, self.artifacts.incidence)
        else:
            u = control_varying(z, self.artifacts, state)
        return self.gains * u

    def evaluate(self, z: Realization) -> ControlSample:
        state = scale_function(z, self.artifacts, variational=False)
        clamp = self._clamped(state.s_star)
        if clamp is not None:
            e = self.artifacts.edges(z)
            V = lyapunov_constant(e, self.artifacts.shape, clamp)
            return self._sample(z, clamp, V, "clamped")
        r = state.r_hat[: self.artifacts.m]
        V = lyapunov_varying(r, self.artifacts.shape, state.s_star)
        return self._sample(z, state.s_star, V, "varying")


def rk4_step(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(eq=False)
class Trajectory:
    """Samples of a closed-loop run; `cost` and `arc_lengths` are accumulated every step."""

    times: np.ndarray
    states: np.ndarray
    scales: np.ndarray
    integrands: np.ndarray
    cost: np.ndarray
    residuals: np.ndarray
    lyapunov: np.ndarray
    arc_lengths: np.ndarray
    termination: Termination
    mode: str = ""
    steps: int = 0
    dt: float = 0.0
    laws: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n(self) -> int:
        return self.states.shape[1] // 2

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_scale(self) -> float:
        return float(self.scales[-1])

    @property
    def J(self) -> float:
        return float(self.cost[-1])

    @property
    def converged(self) -> bool:
        return self.termination is not Termination.MAX_TIME

    @property
    def truncated(self) -> bool:
        return self.termination is Termination.MAX_TIME

    def header(self) -> list[str]:
        columns = ["t"]
        for k in range(1, self.n + 1):
            columns.extend([f"z{k}x", f"z{k}y"])
        columns.extend(["scale", "integrand", "cumJ"])
        return columns

    def rows(self) -> list[list[str]]:
        out = []
        for k in range(len(self)):
            values = [self.times[k], *self.states[k], self.scales[k], self.integrands[k], self.cost[k]]
            out.append([format_number(v) for v in values])
        return out

    def write_csv(self, out: IO) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.header())
        writer.writerows(self.rows())

    def write_metrics_csv(self, out: IO) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["t", "scale", "residual", "lyapunov", "integrand", "cumJ"])
        for row in zip(
            self.times, self.scales, self.residuals, self.lyapunov, self.integrands, self.cost
        ):
            writer.writerow([format_number(value) for value in row])


def format_number(value: float) -> str:
    return f"{float(value):.12g}"


class _Recorder:
    def __init__(self, n: int) -> None:
        self.n = n
        self.times: list[float] = []
        self.states: list[np.ndarray] = []
        self.samples: list[ControlSample] = []
        self.cost: list[float] = []
        self.arcs: list[np.ndarray] = []

    def add(self, t: float, z: np.ndarray, sample: ControlSample, J: float, arcs: np.ndarray) -> None:
        self.times.append(t)
        self.states.append(z.copy())
        self.samples.append(sample)
        self.cost.append(J)
        self.arcs.append(arcs.copy())

    def build(self, termination: Termination, mode: str, steps: int, dt: float) -> Trajectory:
        return Trajectory(
            times=np.array(self.times),
            states=np.array(self.states),
            scales=np.array([s.scale for s in self.samples]),
            integrands=np.array([s.integrand for s in self.samples]),
            cost=np.array(self.cost),
            residuals=np.array([s.residual for s in self.samples]),
            lyapunov=np.array([s.lyapunov for s in self.samples]),
            arc_lengths=np.array(self.arcs),
            termination=termination,
            mode=mode,
            steps=steps,
            dt=dt,
            laws=[s.law for s in self.samples],
        )


def integrate(
    z0: Realization,
    controller: Controller,
    config: Optional[SimConfig] = None,
    reference: Optional[Realization] = None,
) -> Trajectory:
    """Fixed-step RK4 integration of ż = Π u(z) until convergence or the horizon."""
    config = config or SimConfig()
    n = controller.artifacts.n
    z = as_realization(z0, n).copy()
    if is_collinear(z):
        raise PreconditionError("Initial realization is collinear")
    origin = centroid(z)
    limit = config.divergence_factor * diameter(z)

    recorder = _Recorder(n)
    previous = controller.evaluate(z)
    J = 0.0
    arcs = np.zeros(n)
    recorder.add(0.0, z, previous, J, arcs)
    termination = Termination.MAX_TIME
    step = 0
    if previous.residual < config.convergence_tol:
        termination = Termination.CONVERGED
    else:
        for step in range(1, config.steps + 1):
            t = step * config.dt
            z_next = rk4_step(controller.velocity, z, config.dt)
            if not np.all(np.isfinite(z_next)):
                raise DivergenceError(f"State became non-finite at t={t:.6g}")
            if np.max(np.linalg.norm(points(z_next) - origin, axis=1)) > limit:
                raise DivergenceError(f"State left the divergence bound at t={t:.6g}")
            current = controller.evaluate(z_next)
            if (
                config.check_stability
                and current.law == previous.law
                and current.lyapunov > previous.lyapunov + config.dt * config.stability_slack
            ):
                raise StabilityViolationError(
                    f"Lyapunov value increased at t={t:.6g}",
                    time=t,
                    before=previous.lyapunov,
                    after=current.lyapunov,
                )
            J += 0.5 * config.dt * (previous.integrand + current.integrand)
            arcs += np.linalg.norm(points(z_next) - points(z), axis=1)
            z, previous = z_next, current
            done = current.residual < config.convergence_tol
            if done or step % config.record_stride == 0 or step == config.steps:
                recorder.add(t, z, current, J, arcs)
            if done:
                termination = Termination.CONVERGED
                break
            if step % 10000 == 0:
                logger.debug("t=%.3f residual=%.3e J=%.6f", t, current.residual, J)

    if termination is Termination.CONVERGED and reference is not None:
        if not is_similar(z, reference, config.similarity_tol):
            termination = Termination.WRONG_EQUILIBRIUM
    trajectory = recorder.build(termination, controller.mode, step, config.dt)
    logger.info(
        "%s run finished: %s after %d steps, scale=%.6f J=%.6f",
        controller.mode,
        termination.value,
        step,
        trajectory.final_scale,
        trajectory.J,
    )
    return trajectory


@dataclass(frozen=True)
class CostEstimate:
    value: float
    truncated: bool


def accumulate_cost(traj: Trajectory, resolution: str = "step") -> CostEstimate:
    """J by the trapezoidal rule, over every integration step or over the recorded samples."""
    if resolution == "step":
        value = float(traj.cost[-1])
    elif resolution == "sample":
        value = float(trapezoid(traj.integrands, traj.times)) if len(traj) > 1 else 0.0
    else:
        raise ValueError(f"Invalid resolution: {resolution}")
    return CostEstimate(value=value, truncated=traj.truncated)


@dataclass(frozen=True, eq=False)
class PathReport:
    per_agent: np.ndarray
    total: float
    max_agent: int


def path_lengths(traj: Trajectory, resolution: str = "step") -> PathReport:
    """Route length per agent; `max_agent` is 1-based, ties go to the lowest label."""
    if resolution == "step":
        per_agent = np.asarray(traj.arc_lengths[-1], dtype=float)
    elif resolution == "sample":
        if len(traj) < 2:
            per_agent = np.zeros(traj.n)
        else:
            moves = np.diff(traj.states.reshape(len(traj), -1, 2), axis=0)
            per_agent = np.linalg.norm(moves, axis=2).sum(axis=0)
    else:
        raise ValueError(f"Invalid resolution: {resolution}")
    return PathReport(
        per_agent=per_agent,
        total=float(per_agent.sum()),
        max_agent=int(np.argmax(per_agent)) + 1,
    )


@dataclass(frozen=True)
class ConvergenceReport:
    final_scale: float
    residual: float
    rate: float
    r_squared: float
    flags: tuple[str, ...] = ()

    @property
    def exponential(self) -> bool:
        return not self.flags


def convergence_report(traj: Trajectory, min_r_squared: float = 0.95) -> ConvergenceReport:
    """Log-linear fit of the residual over the middle 80% of the samples."""
    flags = []
    if traj.truncated:
        flags.append("not_converged")
    k = len(traj)
    skip = int(0.1 * k)
    window = slice(skip, k - skip)
    times, residuals = traj.times[window], traj.residuals[window]
    positive = residuals > 0
    rate, r_squared = float("nan"), float("nan")
    if np.count_nonzero(positive) < 3:
        flags.append("rate_undefined")
    else:
        fit = linregress(times[positive], np.log(residuals[positive]))
        rate, r_squared = float(fit.slope), float(fit.rvalue ** 2)
        if rate >= 0 or r_squared < min_r_squared:
            flags.append("non_exponential")
    return ConvergenceReport(
        final_scale=traj.final_scale,
        residual=float(traj.residuals[-1]),
        rate=rate,
        r_squared=r_squared,
        flags=tuple(flags),
    )


@dataclass(frozen=True)
class RefinementReport:
    coarse: float
    fine: float

    @property
    def relative_difference(self) -> float:
        return abs(self.coarse - self.fine) / max(abs(self.fine), np.finfo(float).tiny)


def refinement_study(
    z0: Realization, controller: Controller, config: Optional[SimConfig] = None
) -> RefinementReport:
    """J at dt and at dt/2 with the same horizon and sampling times."""
    config = config or SimConfig()
    fine_config = config.model_copy(
        update={"dt": config.dt / 2, "record_stride": config.record_stride * 2}
    )
    coarse = integrate(z0, controller, config)
    fine = integrate(z0, controller, fine_config)
    return RefinementReport(coarse=coarse.J, fine=fine.J)


def build_controller(
    artifacts: ControllerArtifacts,
    mode: str,
    s_c: Optional[float] = None,
    gains: Union[Sequence[float], np.ndarray, None] = None,
    scale_bounds: Optional[tuple[float, float]] = None,
) -> Controller:
    if mode == "constant":
        if s_c is None:
            raise PreconditionError("Constant mode needs a scale")
        return ConstantScaleController(artifacts, s_c, gains=gains)
    if mode == "varying":
        return VaryingScaleController(artifacts, gains=gains, scale_bounds=scale_bounds)
    if mode == "controllable":
        if gains is None:
            raise PreconditionError("Controllable mode needs gains")
        return VaryingScaleController(artifacts, gains=gains, scale_bounds=scale_bounds)
    raise ValueError(f"Invalid mode: {mode}")
