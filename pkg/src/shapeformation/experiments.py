"""Experiment runners and the built-in setups of the desk-scale experiments."""

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Callable, Optional, Sequence, Union

import numpy as np

from .controllability import tune_controllability_gains
from .errors import (
    DegenerateConfigurationError,
    DivergenceError,
    FormationError,
    InfeasibleGainsError,
    PreconditionError,
    StabilityViolationError,
    TopologyError,
)
from .geometry import ShapeVector, as_realization, is_similar
from .graph import Graph, triangular_complement
from .localization import (
    OPTIMAL_DETERMINANT,
    TRIANGLE,
    dominance,
    fisher_determinant,
    localization_metrics,
    monotonicity_check,
    optimal_angles,
    rank_association,
)
from .models import (
    Check,
    ConstantMode,
    ControllableMode,
    ExperimentConfig,
    PaperComparison,
    RunSummary,
    ScanMode,
    SuiteSummary,
)
from .scale import build_artifacts, constant_cost_closed_form, optimal_constant_scale
from .simulation import (
    SimConfig,
    Termination,
    Trajectory,
    VaryingScaleController,
    accumulate_cost,
    build_controller,
    convergence_report,
    format_number,
    integrate,
    path_lengths,
)

logger = logging.getLogger(__name__)

TABLES = ("table1", "table2", "table3", "localization")

ERROR_REASONS = {
    DivergenceError: "diverged",
    StabilityViolationError: "stability_violation",
    DegenerateConfigurationError: "degenerate",
    InfeasibleGainsError: "infeasible",
    TopologyError: "invalid_topology",
    PreconditionError: "precondition",
}

SQRT3 = np.sqrt(3.0)

FOUR_AGENT_START = [0.0, 0.0, 1.0, 0.0, 1.0, 2.0, 0.0, 2.0]
FOUR_AGENT_REFERENCE = [1 / SQRT3, np.sqrt(5.0 / 3.0), SQRT3, 0.0, SQRT3 / 2, -1.5, 0.0, 0.0]
# label: (graph, squared shape, triangular complement size)
FOUR_AGENT_GRAPHS = {
    "Ga": (
        Graph(n=4, edges=[(3, 4), (2, 3), (1, 2), (1, 4), (2, 4)]),
        [3.0, 3.0, 3.0, 2.0, 3.0],
        1,
    ),
    "Gb": (
        Graph(n=4, edges=[(3, 4), (2, 3), (1, 4), (1, 3), (1, 2)]),
        [3.0, 3.0, 2.0, 4.0 + np.sqrt(15.0), 3.0],
        1,
    ),
}

SIX_AGENT_STARTS = {
    "z0": [0.1, 0.6, 2.0, 1.0, 2.0, 0.0, 0.0, -1.0, 0.5, 0.4, 1.5, 0.8],
    "z0p": [0.1, 0.6, 2.0, 1.0, 2.0, 0.0, -1.0, 0.0, 0.5, 0.4, 1.5, 0.8],
}
SIX_AGENT_GRAPHS = {
    "Ga": (
        Graph(n=6, edges=[(2, 4), (2, 3), (1, 4), (4, 5), (1, 5), (2, 5), (3, 5), (2, 6), (3, 6)]),
        [3.6, 1.0, 1.01, 0.52, 0.41, 2.61, 2.41, 0.29, 0.89],
        5,
    ),
    "Gb": (
        Graph(n=6, edges=[(2, 4), (2, 3), (1, 3), (1, 4), (4, 5), (1, 5), (2, 6), (3, 6), (5, 6)]),
        [3.6, 1.0, 4.0, 1.01, 0.52, 0.41, 0.29, 0.89, 1.16],
        6,
    ),
    "Gc": (
        Graph(n=6, edges=[(2, 4), (2, 3), (1, 3), (1, 4), (4, 5), (5, 6), (2, 5), (1, 6), (3, 6)]),
        [3.6, 1.0, 4.0, 1.01, 0.52, 1.16, 2.61, 2.89, 0.89],
        6,
    ),
    "Gd": (
        Graph(n=6, edges=[(2, 4), (2, 3), (1, 3), (1, 4), (1, 5), (4, 6), (3, 4), (4, 5), (5, 6)]),
        [3.6, 1.0, 4.0, 1.01, 0.41, 2.0, 4.6, 0.52, 1.16],
        6,
    ),
}

LOCALIZATION_START = [0.0, 0.0, 3.0, 1.5, 4.0, 0.0]

TABLE1_GRID = [round(0.1 * k, 1) for k in range(1, 10)]
# s_c: (J, total path, per-agent paths)
TABLE1_CONSTANT = {
    0.1: (5.5227, 2.6002, [0.5167, 0.7831, 0.4686, 0.8318]),
    0.3: (2.8944, 1.9837, [0.4306, 0.5534, 0.3297, 0.6700]),
    0.5: (2.1249, 2.1319, [0.5775, 0.4608, 0.4933, 0.6003]),
    0.9: (5.1248, 3.1347, [0.9559, 0.6111, 0.9346, 0.6331]),
}
TABLE1_GATED = {0.1: 0.02, 0.5: 0.05}
# graph: relative tolerances for (final scale, J, total path); None only reports
VARYING_GATED = {"Ga": (0.02, 0.05, 0.05), "Gb": (None, None, None)}
# graph: (final scale, J, per-agent paths, total path)
VARYING_FOUR_AGENT = {
    "Ga": (0.3159, 1.7402, [0.3898, 0.5190, 0.2814, 0.6519], 1.8422),
    "Gb": (0.3563, 4.2120, [0.3711, 0.5013, 0.3705, 0.6338], 1.8766),
}
# six-agent runs settle slowly; Gb needs about 170 time units from z0p
TABLE3_HORIZON = 200.0
# (graph, start): (final scale, J, total path, longest route)
VARYING_SIX_AGENT = {
    ("Ga", "z0"): (0.5873, 0.6918, 1.8388, 0.5202),
    ("Gb", "z0"): (0.5652, 0.7724, 1.7351, 0.5289),
    ("Gc", "z0"): (0.5369, 0.9152, 1.9946, 0.5628),
    ("Gd", "z0"): (0.5589, 0.9169, 1.6154, 0.5305),
    ("Ga", "z0p"): (0.6105, 1.0284, 2.2507, 0.7621),
    ("Gb", "z0p"): (0.5838, 1.5533, 3.2086, 0.7953),
    ("Gc", "z0p"): (0.5421, 1.7603, 3.1918, 0.8065),
    ("Gd", "z0p"): (0.5570, 2.4951, 2.8788, 0.8142),
}

# unit-size target: constant baseline and near-equilateral ranking floor
LOCALIZATION_SCALE = 0.5
RANK_ASSOCIATION_MIN = 0.9


@dataclass(frozen=True, eq=False)
class RunSpec:
    name: str
    graph: Graph
    shape: ShapeVector
    z0: np.ndarray
    mode: str
    simulation: SimConfig = field(default_factory=SimConfig)
    s_c: Optional[float] = None
    target_scale: Optional[float] = None
    relative_target: Optional[float] = None
    gain_floor: float = 1e-3
    reference: Optional[np.ndarray] = None


@dataclass(eq=False)
class RunResult:
    spec: RunSpec
    summary: RunSummary
    trajectory: Optional[Trajectory] = None


@dataclass(eq=False)
class Reproduction:
    summary: SuiteSummary
    results: list[RunResult] = field(default_factory=list)
    extra_outputs: dict[str, Callable[[IO], None]] = field(default_factory=dict)


def checked_graph(graph: Graph, complement_edges: int) -> Graph:
    """Guard that an encoded topology has the expected triangular complement size."""
    found = triangular_complement(graph).m
    if found != complement_edges:
        raise TopologyError(
            f"Graph {list(graph.edges)} has {found} complement edges, expected {complement_edges}"
        )
    return graph


def summarize(
    spec: RunSpec,
    traj: Trajectory,
    closed_form: Optional[float] = None,
    gains: Optional[np.ndarray] = None,
) -> RunSummary:
    cost = accumulate_cost(traj)
    paths = path_lengths(traj)
    report = convergence_report(traj)
    return RunSummary(
        name=spec.name,
        mode=traj.mode,
        s_c=spec.s_c,
        final_scale=traj.final_scale,
        J=cost.value,
        closed_form_j=closed_form,
        path_lengths=[float(x) for x in paths.per_agent],
        total_path=paths.total,
        max_agent=paths.max_agent,
        rate=report.rate,
        r_squared=report.r_squared,
        flags=list(report.flags),
        truncated=cost.truncated,
        termination_reason=traj.termination.value,
        gains=None if gains is None else [float(x) for x in gains],
    )


def execute(spec: RunSpec) -> RunResult:
    """One closed-loop run; formation errors end up in the summary."""
    sim = spec.simulation
    try:
        artifacts = build_artifacts(spec.graph, spec.shape, sim.dhat)
        closed_form, gains = None, None
        if spec.mode == "controllable":
            target = spec.target_scale
            if target is None:
                natural = integrate(spec.z0, VaryingScaleController(artifacts), sim)
                target = spec.relative_target * natural.final_scale
            tuning = tune_controllability_gains(
                spec.z0, target, artifacts, sim, gain_floor=spec.gain_floor
            )
            traj, gains = tuning.trajectory, tuning.gains
            if (
                spec.reference is not None
                and traj.termination is Termination.CONVERGED
                and not is_similar(traj.final_state, spec.reference, sim.similarity_tol)
            ):
                traj.termination = Termination.WRONG_EQUILIBRIUM
        else:
            if spec.mode == "constant":
                closed_form = constant_cost_closed_form(
                    artifacts.edges(spec.z0), spec.shape, spec.s_c
                )
            controller = build_controller(
                artifacts, spec.mode, s_c=spec.s_c, scale_bounds=sim.scale_bounds
            )
            traj = integrate(spec.z0, controller, sim, reference=spec.reference)
    except FormationError as error:
        reason = next(
            (name for kind, name in ERROR_REASONS.items() if isinstance(error, kind)), "error"
        )
        logger.error("Run %s failed: %s", spec.name, error)
        summary = RunSummary(
            name=spec.name, mode=spec.mode, s_c=spec.s_c, termination_reason=reason, error=str(error)
        )
        return RunResult(spec=spec, summary=summary)
    return RunResult(spec=spec, summary=summarize(spec, traj, closed_form, gains), trajectory=traj)


def run_specs(specs: Sequence[RunSpec], workers: int = 1) -> list[RunResult]:
    """Execute runs, in worker processes when asked; results keep the input order."""
    if workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(execute, specs))
    return [execute(spec) for spec in specs]


def with_overrides(sim: SimConfig, **overrides) -> SimConfig:
    updates = {key: value for key, value in overrides.items() if value is not None}
    if not updates:
        return sim
    return SimConfig(**{**sim.model_dump(exclude_unset=True), **updates})


def specs_from_config(config: ExperimentConfig, sim: Optional[SimConfig] = None) -> list[RunSpec]:
    sim = sim or config.simulation
    graph = config.graph
    shape = config.shape.to_shape()
    z0 = as_realization(config.z0, graph.n)
    reference = None if config.reference is None else as_realization(config.reference, graph.n)
    base = dict(graph=graph, shape=shape, z0=z0, simulation=sim, reference=reference)
    scale = config.scale
    if isinstance(scale, ConstantMode):
        return [RunSpec(name=config.name, mode="constant", s_c=scale.s_c, **base)]
    if isinstance(scale, ScanMode):
        specs = [
            RunSpec(name=f"{config.name}-sc{s_c:g}", mode="constant", s_c=s_c, **base)
            for s_c in scale.grid
        ]
        if scale.include_optimum:
            artifacts = build_artifacts(graph, shape, sim.dhat)
            optimum = optimal_constant_scale(artifacts.edges(z0), shape)
            specs.append(
                RunSpec(name=f"{config.name}-optimum", mode="constant", s_c=optimum, **base)
            )
        return specs
    if isinstance(scale, ControllableMode):
        return [
            RunSpec(
                name=config.name,
                mode="controllable",
                target_scale=scale.target_scale,
                relative_target=scale.relative_target,
                gain_floor=scale.gain_floor,
                **base,
            )
        ]
    return [RunSpec(name=config.name, mode="varying", **base)]


def write_atomic(path: str, write: Callable[[IO], None]) -> None:
    temporary = f"{path}.tmp"
    with open(temporary, "w", encoding="utf-8", newline="") as file:
        write(file)
    os.replace(temporary, path)


def write_run_outputs(directory: str, result: RunResult) -> None:
    if result.trajectory is None:
        return
    stem = os.path.join(directory, result.spec.name)
    write_atomic(f"{stem}.csv", result.trajectory.write_csv)
    write_atomic(f"{stem}-metrics.csv", result.trajectory.write_metrics_csv)


def write_summary(
    directory: str, summary: Union[RunSummary, SuiteSummary], filename: str = "summary.json"
) -> None:
    text = summary.model_dump_json(by_alias=True, indent=2)
    write_atomic(os.path.join(directory, filename), lambda file: file.write(text + "\n"))


def _optional(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    return format_number(value)


def write_comparison_rows(file: IO, comparisons: Sequence[PaperComparison]) -> None:
    writer = csv.writer(file, lineterminator="\n")
    writer.writerow(["table", "row", "quantity", "paper", "computed", "relError", "withinTolerance"])
    for c in comparisons:
        writer.writerow(
            [
                c.table,
                c.row,
                c.quantity,
                format_number(c.paper),
                _optional(c.computed),
                _optional(c.rel_error),
                _optional(c.within_tolerance),
            ]
        )


def write_scan_rows(file: IO, results: Sequence[RunResult]) -> None:
    writer = csv.writer(file, lineterminator="\n")
    writer.writerow(["sC", "J", "closedFormJ", "totalPath", "terminationReason"])
    for result in sorted(results, key=lambda r: r.spec.s_c):
        summary = result.summary
        writer.writerow(
            [
                format_number(result.spec.s_c),
                _optional(summary.J),
                _optional(summary.closed_form_j),
                _optional(summary.total_path),
                summary.termination_reason,
            ]
        )


def scan_minimum(results: Sequence[RunResult]) -> Optional[RunResult]:
    finished = [r for r in results if r.summary.J is not None]
    if not finished:
        return None
    return min(finished, key=lambda r: r.summary.J)


def run_config(
    config: ExperimentConfig, out: str, sim: Optional[SimConfig] = None, workers: int = 1
) -> SuiteSummary:
    """Run every run a config describes and write its outputs under out."""
    specs = specs_from_config(config, sim)
    results = run_specs(specs, workers)
    summary = SuiteSummary(name=config.name, seed=config.seed, runs=[r.summary for r in results])
    os.makedirs(out, exist_ok=True)
    for result in results:
        write_run_outputs(out, result)
    if isinstance(config.scale, ScanMode):
        write_atomic(os.path.join(out, "scan.csv"), lambda file: write_scan_rows(file, results))
    write_summary(out, summary)
    return summary


def scan_scale(
    config: ExperimentConfig, out: str, sim: Optional[SimConfig] = None, workers: int = 1
) -> SuiteSummary:
    """Constant-scale runs over a grid; non-scan configs scan the tenths from 0.1 to 0.9."""
    scale = config.scale
    if not isinstance(scale, ScanMode):
        scale = ScanMode(grid=TABLE1_GRID)
    summary = run_config(config.model_copy(update={"scale": scale}), out, sim, workers)
    finished = [run for run in summary.runs if run.J is not None]
    if finished:
        best = min(finished, key=lambda run: run.J)
        logger.info("Smallest cost %.6f at constant scale %.6g", best.J, best.s_c)
    return summary


def _finite(value: Optional[float]) -> bool:
    return value is not None and bool(np.isfinite(value))


def _four_agent_spec(
    name: str, key: str, mode: str, sim: SimConfig, s_c: Optional[float] = None
) -> RunSpec:
    graph, squared, complement = FOUR_AGENT_GRAPHS[key]
    return RunSpec(
        name=name,
        graph=checked_graph(graph, complement),
        shape=ShapeVector.from_squared(squared),
        z0=np.array(FOUR_AGENT_START),
        mode=mode,
        simulation=sim,
        s_c=s_c,
        reference=np.array(FOUR_AGENT_REFERENCE),
    )


def _route_comparisons(
    table: str, row: str, paper: Sequence[float], summary: RunSummary
) -> list[PaperComparison]:
    rows = []
    for agent, value in enumerate(paper, start=1):
        computed = summary.path_lengths[agent - 1] if summary.path_lengths else None
        rows.append(PaperComparison.compare(table, row, f"path{agent}", value, computed))
    return rows


def _varying_comparisons(table: str, key: str, summary: RunSummary) -> list[PaperComparison]:
    scale, J, paths, total = VARYING_FOUR_AGENT[key]
    scale_tol, J_tol, total_tol = VARYING_GATED[key]
    rows = [
        PaperComparison.compare(table, key, "finalScale", scale, summary.final_scale, scale_tol),
        PaperComparison.compare(table, key, "J", J, summary.J, J_tol),
        PaperComparison.compare(table, key, "totalPath", total, summary.total_path, total_tol),
        PaperComparison.compare(table, key, "maxAgent", 4, summary.max_agent, 0.0),
    ]
    return rows + _route_comparisons(table, key, paths, summary)


def reproduce_table1(sim: SimConfig, workers: int = 1) -> Reproduction:
    graph, squared, _ = FOUR_AGENT_GRAPHS["Ga"]
    shape = ShapeVector.from_squared(squared)
    optimum = optimal_constant_scale(build_artifacts(graph, shape).edges(FOUR_AGENT_START), shape)
    specs = [
        _four_agent_spec(f"table1-sc{s_c:g}", "Ga", "constant", sim, s_c) for s_c in TABLE1_GRID
    ]
    specs.append(_four_agent_spec("table1-optimum", "Ga", "constant", sim, optimum))
    specs.append(_four_agent_spec("table1-varying", "Ga", "varying", sim))
    results = run_specs(specs, workers)
    grid_results = results[: len(TABLE1_GRID)]
    by_scale = {r.spec.s_c: r.summary for r in grid_results}

    comparisons = []
    for s_c, (J, total, paths) in TABLE1_CONSTANT.items():
        summary = by_scale[s_c]
        row = f"sc={s_c:g}"
        comparisons.extend(
            [
                PaperComparison.compare("table1", row, "J", J, summary.J, TABLE1_GATED.get(s_c)),
                PaperComparison.compare("table1", row, "closedFormJ", J, summary.closed_form_j),
                PaperComparison.compare("table1", row, "totalPath", total, summary.total_path),
            ]
        )
        comparisons.extend(_route_comparisons("table1", row, paths, summary))
    comparisons.extend(_varying_comparisons("table1", "Ga", results[-1].summary))

    best = scan_minimum(grid_results)
    checks = [
        Check(
            name="optimalConstantScale",
            value=optimum,
            threshold=41 / 80,
            passed=bool(abs(optimum - 41 / 80) < 1e-12),
        ),
        Check(
            name="gridArgmin",
            value=None if best is None else best.spec.s_c,
            threshold=0.5,
            passed=best is not None and best.spec.s_c == 0.5,
        ),
    ]
    summary = SuiteSummary(
        name="table1",
        runs=[r.summary for r in results],
        paper_comparisons=comparisons,
        checks=checks,
    )
    scan = results[:-1]
    return Reproduction(
        summary=summary,
        results=results,
        extra_outputs={"scan.csv": lambda file: write_scan_rows(file, scan)},
    )


def reproduce_table2(sim: SimConfig, workers: int = 1) -> Reproduction:
    specs = [_four_agent_spec(f"table2-{key}", key, "varying", sim) for key in FOUR_AGENT_GRAPHS]
    results = run_specs(specs, workers)
    comparisons = []
    for key, result in zip(FOUR_AGENT_GRAPHS, results):
        comparisons.extend(_varying_comparisons("table2", key, result.summary))
    ga, gb = (result.summary for result in results)
    checks = []
    for name, a, b in (("J", ga.J, gb.J), ("totalPath", ga.total_path, gb.total_path)):
        passed = _finite(a) and _finite(b) and a < b
        checks.append(Check(name=f"cheaperGa-{name}", value=a, threshold=b, passed=passed))
    summary = SuiteSummary(
        name="table2",
        runs=[r.summary for r in results],
        paper_comparisons=comparisons,
        checks=checks,
    )
    return Reproduction(summary=summary, results=results)


def reproduce_table3(sim: SimConfig, workers: int = 1) -> Reproduction:
    if "t_max" not in sim.model_fields_set:
        sim = sim.model_copy(update={"t_max": TABLE3_HORIZON})
    keys = [(key, start) for start in SIX_AGENT_STARTS for key in SIX_AGENT_GRAPHS]
    specs = []
    for key, start in keys:
        graph, squared, complement = SIX_AGENT_GRAPHS[key]
        specs.append(
            RunSpec(
                name=f"table3-{key}-{start}",
                graph=checked_graph(graph, complement),
                shape=ShapeVector.from_squared(squared),
                z0=np.array(SIX_AGENT_STARTS[start]),
                mode="varying",
                simulation=sim,
            )
        )
    results = run_specs(specs, workers)
    by_key = dict(zip(keys, (r.summary for r in results)))

    comparisons = []
    for (key, start), summary in by_key.items():
        scale, J, total, longest = VARYING_SIX_AGENT[(key, start)]
        row = f"{key} {start}"
        computed_longest = max(summary.path_lengths) if summary.path_lengths else None
        comparisons.extend(
            [
                PaperComparison.compare("table3", row, "finalScale", scale, summary.final_scale),
                PaperComparison.compare("table3", row, "J", J, summary.J),
                PaperComparison.compare("table3", row, "totalPath", total, summary.total_path),
                PaperComparison.compare("table3", row, "maxPath", longest, computed_longest),
            ]
        )

    checks = []
    for start in SIX_AGENT_STARTS:
        costs = {key: by_key[(key, start)].J for key in SIX_AGENT_GRAPHS}
        finite = {key: J for key, J in costs.items() if _finite(J)}
        winner = min(finite, key=finite.get) if finite else None
        # only the z0 ordering survives the longer horizon
        passed = winner == "Ga" if start == "z0" else None
        checks.append(
            Check(
                name=f"smallestJ-{start}",
                value=None if winner is None else finite[winner],
                passed=passed,
            )
        )
    summary = SuiteSummary(
        name="table3",
        runs=[r.summary for r in results],
        paper_comparisons=comparisons,
        checks=checks,
    )
    return Reproduction(summary=summary, results=results)


def near_equilateral_samples(rng: np.random.Generator, count: int = 50) -> list[np.ndarray]:
    """Unit-size triangles scattered around the equilateral one."""
    base = np.array([0.0, 0.0, 1.0, 0.0, 0.5, SQRT3 / 2])
    samples = []
    for _ in range(count):
        direction = rng.normal(size=6)
        z = base + rng.uniform(0.01, 0.2) * direction / np.linalg.norm(direction)
        p = z.reshape(3, 2)
        p = p - p.mean(axis=0)
        samples.append((p / np.linalg.norm(p)).reshape(-1))
    return samples


def reproduce_localization(sim: SimConfig, workers: int = 1, seed: int = 0) -> Reproduction:
    shape = ShapeVector.from_lengths([1.0, 1.0, 1.0])
    z0 = np.array(LOCALIZATION_START)
    base = dict(graph=TRIANGLE, shape=shape, z0=z0, simulation=sim)
    specs = [
        RunSpec(name="localization-constant", mode="constant", s_c=LOCALIZATION_SCALE, **base),
        RunSpec(name="localization-varying", mode="varying", **base),
    ]
    results = run_specs(specs, workers)
    series, extra = {}, {}
    for result in results:
        if result.trajectory is None:
            continue
        metrics = localization_metrics(result.trajectory)
        series[result.spec.mode] = metrics
        extra[f"{result.spec.name}-localization.csv"] = metrics.write_csv

    optimal = fisher_determinant(optimal_angles())
    monotone = monotonicity_check()
    association = rank_association(near_equilateral_samples(np.random.default_rng(seed)), shape)
    checks = [
        Check(
            name="optimalDeterminant",
            value=optimal,
            threshold=OPTIMAL_DETERMINANT,
            passed=bool(abs(optimal - OPTIMAL_DETERMINANT) < 1e-12),
        ),
        Check(name="monotonicity", value=float(monotone.checked), passed=monotone.passed),
        Check(
            name="rankAssociation",
            value=association,
            threshold=RANK_ASSOCIATION_MIN,
            passed=bool(association > RANK_ASSOCIATION_MIN),
        ),
    ]
    if "constant" in series and "varying" in series:
        relation = dominance(series["varying"], series["constant"])
        checks.append(
            Check(name="determinantDominance", value=relation.worst_margin, passed=relation.holds)
        )
        checks.append(
            Check(
                name="finalDeltaInverse",
                value=float(series["varying"].delta_inverse[-1]),
                threshold=0.0,
            )
        )
    summary = SuiteSummary(
        name="localization", seed=seed, runs=[r.summary for r in results], checks=checks
    )
    return Reproduction(summary=summary, results=results, extra_outputs=extra)


def reproduce(
    table: str, out: str, sim: Optional[SimConfig] = None, workers: int = 1, seed: int = 0
) -> SuiteSummary:
    """Run a built-in setup and write its runs, comparison.csv and summary.json under out."""
    if table not in TABLES:
        raise ValueError(f"Invalid table: {table}")
    sim = sim or SimConfig()
    if table == "table1":
        reproduction = reproduce_table1(sim, workers)
    elif table == "table2":
        reproduction = reproduce_table2(sim, workers)
    elif table == "table3":
        reproduction = reproduce_table3(sim, workers)
    else:
        reproduction = reproduce_localization(sim, workers, seed)
    os.makedirs(out, exist_ok=True)
    for result in reproduction.results:
        write_run_outputs(out, result)
    for filename, write in reproduction.extra_outputs.items():
        write_atomic(os.path.join(out, filename), write)
    comparisons = reproduction.summary.paper_comparisons
    write_atomic(
        os.path.join(out, "comparison.csv"), lambda file: write_comparison_rows(file, comparisons)
    )
    write_summary(out, reproduction.summary)
    logger.info("Reproduced %s into %s", table, out)
    return reproduction.summary
