import csv
import json
from io import StringIO
from pathlib import Path

import numpy as np
import pytest

from shapeformation.errors import TopologyError
from shapeformation.experiments import (
    FOUR_AGENT_GRAPHS,
    FOUR_AGENT_REFERENCE,
    FOUR_AGENT_START,
    SIX_AGENT_GRAPHS,
    VARYING_FOUR_AGENT,
    RunSpec,
    checked_graph,
    execute,
    reproduce,
    reproduce_table3,
    run_config,
    run_specs,
    scan_scale,
    specs_from_config,
    with_overrides,
    write_comparison_rows,
)
from shapeformation.geometry import ShapeVector
from shapeformation.graph import Graph
from shapeformation.models import PaperComparison, load_config, parse_config
from shapeformation.simulation import SimConfig

FIXTURE_PATH = Path(__file__).parent.joinpath("support", "fixtures")
TRIANGLE = Graph(n=3, edges=[(1, 2), (2, 3), (1, 3)])
UNIT = ShapeVector.from_lengths([1.0, 1.0, 1.0])
EQUILATERAL = np.array([0.0, 0.0, 1.0, 0.0, 0.5, np.sqrt(3.0) / 2])
START = np.array([0.0, 0.0, 1.2, 0.1, 0.4, 0.9])
QUICK = SimConfig(dt=0.01, t_max=30.0)


def read_rows(path: Path) -> list[list[str]]:
    with open(path, newline="") as file:
        return list(csv.reader(file))


class TestTopologies:
    @pytest.mark.parametrize(
        ("graph", "count"),
        [
            *(pytest.param(g, c, id=f"four-{key}") for key, (g, _, c) in FOUR_AGENT_GRAPHS.items()),
            *(pytest.param(g, c, id=f"six-{key}") for key, (g, _, c) in SIX_AGENT_GRAPHS.items()),
        ],
    )
    def test_complement_sizes(self, graph: Graph, count: int):
        assert checked_graph(graph, count) is graph

    def test_complement_counts(self):
        counts = [c for _, _, c in FOUR_AGENT_GRAPHS.values()] + [c for _, _, c in SIX_AGENT_GRAPHS.values()]
        assert counts == [1, 1, 5, 6, 6, 6]

    def test_mismatch(self):
        graph, _, _ = FOUR_AGENT_GRAPHS["Ga"]
        with pytest.raises(TopologyError, match="expected 2"):
            checked_graph(graph, 2)

    def test_shapes_match_graphs(self):
        for graph, squared, _ in [*FOUR_AGENT_GRAPHS.values(), *SIX_AGENT_GRAPHS.values()]:
            assert len(squared) == graph.m == 2 * graph.n - 3


class TestSpecs:
    def test_constant(self):
        (subject,) = specs_from_config(load_config(FIXTURE_PATH.joinpath("triangle-constant.json")))
        assert subject.mode == "constant"
        assert subject.s_c == 0.5
        assert subject.simulation.dt == 0.01
        np.testing.assert_array_equal(subject.z0, START)

    def test_scan_adds_optimum(self):
        subject = specs_from_config(load_config(FIXTURE_PATH.joinpath("triangle-scan.json")))
        assert [spec.name for spec in subject] == [
            "triangle-scan-sc0.2",
            "triangle-scan-sc0.4",
            "triangle-scan-sc0.6",
            "triangle-scan-optimum",
        ]
        # mean of the squared initial lengths over 2
        assert subject[-1].s_c == pytest.approx((1.45 + 1.28 + 0.97) / 6)

    def test_varying_keeps_reference(self):
        (subject,) = specs_from_config(load_config(FIXTURE_PATH.joinpath("square-varying.json")))
        assert subject.mode == "varying"
        assert subject.reference is not None and subject.reference.shape == (8,)

    def test_controllable(self):
        config = parse_config(
            json.dumps(
                {
                    "graph": {"n": 3, "edges": [[1, 2], [2, 3], [1, 3]]},
                    "z0": START.tolist(),
                    "shape": {"values": [1, 1, 1]},
                    "scale": {"mode": "controllable", "lambda": 0.7, "gainFloor": 0.01},
                }
            )
        )
        (subject,) = specs_from_config(config)
        assert (subject.mode, subject.target_scale, subject.relative_target, subject.gain_floor) == (
            "controllable",
            0.7,
            None,
            0.01,
        )

    def test_with_overrides(self):
        assert with_overrides(QUICK) is QUICK
        assert with_overrides(QUICK, dt=None) is QUICK
        subject = with_overrides(QUICK, dt=0.005, t_max=2.0)
        assert (subject.dt, subject.t_max, subject.record_stride) == (0.005, 2.0, QUICK.record_stride)


class TestExecute:
    def test_constant_cost_matches_closed_form(self):
        subject = execute(RunSpec(name="run", graph=TRIANGLE, shape=UNIT, z0=START, mode="constant", simulation=QUICK, s_c=0.5))
        summary = subject.summary
        assert summary.ok
        assert summary.termination_reason == "converged"
        assert summary.J == pytest.approx(summary.closed_form_j, rel=2e-3)
        assert summary.total_path == pytest.approx(sum(summary.path_lengths))
        assert subject.trajectory is not None

    def test_errors_become_termination_reasons(self):
        collinear = np.array([0.0, 0.0, 1.0, 0.0, 2.0, 0.0])
        subject = execute(RunSpec(name="line", graph=TRIANGLE, shape=UNIT, z0=collinear, mode="varying", simulation=QUICK))
        assert subject.trajectory is None
        assert subject.summary.termination_reason == "precondition"
        assert "collinear" in subject.summary.error
        assert not subject.summary.ok

    def test_wrong_equilibrium(self):
        right = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 1.0])
        spec = RunSpec(
            name="run", graph=TRIANGLE, shape=UNIT, z0=EQUILATERAL, mode="varying", simulation=QUICK, reference=right
        )
        assert execute(spec).summary.termination_reason == "wrong_equilibrium"

    def test_controllable_at_natural_scale(self):
        spec = RunSpec(
            name="run", graph=TRIANGLE, shape=UNIT, z0=START, mode="controllable", simulation=QUICK, relative_target=1.0
        )
        subject = execute(spec).summary
        assert subject.termination_reason == "converged"
        assert subject.gains == [1.0] * 6

    def test_run_specs_keeps_order(self):
        specs = [
            RunSpec(name=f"run{k}", graph=TRIANGLE, shape=UNIT, z0=EQUILATERAL * (k + 1), mode="varying", simulation=QUICK)
            for k in range(3)
        ]
        subject = run_specs(specs, workers=2)
        assert [r.summary.name for r in subject] == ["run0", "run1", "run2"]
        assert [r.summary.final_scale for r in subject] == pytest.approx([0.5, 2.0, 4.5])


class TestRunConfig:
    def test_writes_outputs(self, tmp_path: Path):
        config = load_config(FIXTURE_PATH.joinpath("triangle-constant.json"))
        subject = run_config(config, str(tmp_path))
        assert subject.ok
        assert sorted(p.name for p in tmp_path.iterdir()) == [
            "summary.json",
            "triangle-constant-metrics.csv",
            "triangle-constant.csv",
        ]
        summary = json.loads(tmp_path.joinpath("summary.json").read_text())
        assert summary["name"] == "triangle-constant"
        assert summary["runs"][0]["terminationReason"] == "converged"
        assert read_rows(tmp_path.joinpath("triangle-constant.csv"))[0][-3:] == ["scale", "integrand", "cumJ"]

    def test_is_deterministic(self, tmp_path: Path):
        config = load_config(FIXTURE_PATH.joinpath("triangle-constant.json"))
        run_config(config, str(tmp_path.joinpath("first")))
        run_config(config, str(tmp_path.joinpath("second")))
        for name in ("triangle-constant.csv", "summary.json"):
            first = tmp_path.joinpath("first", name).read_text()
            assert first == tmp_path.joinpath("second", name).read_text()

    def test_scan(self, tmp_path: Path):
        config = load_config(FIXTURE_PATH.joinpath("triangle-scan.json"))
        subject = scan_scale(config, str(tmp_path))
        assert len(subject.runs) == 4
        rows = read_rows(tmp_path.joinpath("scan.csv"))
        assert rows[0] == ["sC", "J", "closedFormJ", "totalPath", "terminationReason"]
        assert [row[0] for row in rows[1:4]] == ["0.2", "0.4", "0.6"]
        costs = [float(row[1]) for row in rows[1:]]
        optimum = min(subject.runs, key=lambda run: run.J)
        assert optimum.name == "triangle-scan-optimum"
        assert min(costs) == pytest.approx(optimum.J)


class TestComparisons:
    def test_rows(self):
        out = StringIO()
        write_comparison_rows(
            out,
            [
                PaperComparison.compare("table1", "sc=0.5", "J", 2.0, 2.04, 0.05),
                PaperComparison.compare("table1", "sc=0.5", "path1", 0.5, None),
            ],
        )
        rows = list(csv.reader(StringIO(out.getvalue())))
        assert rows[0] == ["table", "row", "quantity", "paper", "computed", "relError", "withinTolerance"]
        assert rows[1][:5] == ["table1", "sc=0.5", "J", "2", "2.04"]
        assert float(rows[1][5]) == pytest.approx(0.02)
        assert rows[1][6] == "true"
        assert rows[2][4:] == ["", "", ""]

    def test_invalid_table(self, tmp_path: Path):
        with pytest.raises(ValueError, match="Invalid table: table9"):
            reproduce("table9", str(tmp_path))
        assert not any(tmp_path.iterdir())


class TestFourAgent:
    def test_varying_defaults_match_published_run(self):
        graph, squared, _ = FOUR_AGENT_GRAPHS["Ga"]
        spec = RunSpec(
            name="Ga",
            graph=graph,
            shape=ShapeVector.from_squared(squared),
            z0=np.array(FOUR_AGENT_START),
            mode="varying",
            reference=np.array(FOUR_AGENT_REFERENCE),
        )
        subject = execute(spec).summary
        scale, J, paths, total = VARYING_FOUR_AGENT["Ga"]
        assert subject.termination_reason == "converged"
        assert subject.final_scale == pytest.approx(scale, rel=0.02)
        assert subject.J == pytest.approx(J, rel=0.05)
        assert subject.total_path == pytest.approx(total, rel=0.05)
        assert subject.path_lengths == pytest.approx(paths, rel=0.01)
        assert subject.max_agent == 4

    def test_reference_realizes_ga_shape(self):
        reference = np.array(FOUR_AGENT_REFERENCE).reshape(4, 2)
        graph, squared, _ = FOUR_AGENT_GRAPHS["Ga"]
        lengths = [np.sum((reference[u - 1] - reference[v - 1]) ** 2) for u, v in graph.edges]
        assert lengths == pytest.approx(squared)


@pytest.mark.slow
class TestReproduce:
    def test_table1(self, tmp_path: Path):
        subject = reproduce("table1", str(tmp_path))
        checks = {check.name: check for check in subject.checks}
        assert checks["optimalConstantScale"].passed
        assert checks["gridArgmin"].passed
        assert_reproduced(subject)
        max_agents = {run.name: run.max_agent for run in subject.runs}
        assert max_agents["table1-sc0.5"] == max_agents["table1-varying"] == 4
        assert tmp_path.joinpath("scan.csv").exists()
        assert tmp_path.joinpath("comparison.csv").exists()

    def test_table2(self, tmp_path: Path):
        subject = reproduce("table2", str(tmp_path), sim=SimConfig(), workers=2)
        assert [run.name for run in subject.runs] == ["table2-Ga", "table2-Gb"]
        assert all(run.termination_reason == "converged" for run in subject.runs)
        assert_reproduced(subject)
        assert {check.name for check in subject.checks} == {"cheaperGa-J", "cheaperGa-totalPath"}
        assert [run.max_agent for run in subject.runs] == [4, 4]
        rows = read_rows(tmp_path.joinpath("comparison.csv"))
        assert {row[1] for row in rows[1:]} == {"Ga", "Gb"}

    def test_table3(self, tmp_path: Path):
        subject = reproduce("table3", str(tmp_path), workers=2)
        assert len(subject.runs) == 8
        assert_reproduced(subject)
        checks = {check.name: check for check in subject.checks}
        assert checks["smallestJ-z0"].passed
        assert checks["smallestJ-z0p"].passed is None
        runs = {run.name: run for run in subject.runs}
        assert runs["table3-Ga-z0"].termination_reason == "converged"
        assert runs["table3-Gb-z0p"].termination_reason == "converged"

    def test_table3_keeps_a_shorter_horizon(self):
        subject = reproduce_table3(SimConfig(t_max=0.5, dt=0.01))
        assert {result.spec.simulation.t_max for result in subject.results} == {0.5}

    def test_localization(self, tmp_path: Path):
        subject = reproduce("localization", str(tmp_path), seed=3)
        assert subject.seed == 3
        checks = {check.name: check for check in subject.checks}
        assert checks["optimalDeterminant"].passed
        assert checks["monotonicity"].passed
        assert checks["rankAssociation"].threshold == 0.9
        assert checks["determinantDominance"].passed
        assert checks["determinantDominance"].value >= -1e-9
        assert_reproduced(subject)
        assert tmp_path.joinpath("localization-varying-localization.csv").exists()

    def test_is_byte_deterministic(self, tmp_path: Path):
        reproduce("table2", str(tmp_path.joinpath("first")), workers=2)
        reproduce("table2", str(tmp_path.joinpath("second")))
        first = sorted(p.name for p in tmp_path.joinpath("first").iterdir())
        assert first == sorted(p.name for p in tmp_path.joinpath("second").iterdir())
        assert "comparison.csv" in first
        for name in first:
            assert tmp_path.joinpath("first", name).read_bytes() == tmp_path.joinpath("second", name).read_bytes()


def assert_reproduced(summary):
    failed = [(row.row, row.quantity) for row in summary.paper_comparisons if row.within_tolerance is False]
    assert failed == []
    assert [check.name for check in summary.checks if check.passed is False] == []
