"""Report files: metrics tables, run log, manifest, and plot specs."""

from __future__ import annotations

import csv
import json

import pytest

from arena2x2.agents import AgentSpec
from arena2x2.games import default_prisoners_dilemma
from arena2x2.match import MatchConfig, play_match
from arena2x2.prompting import PredictionMode
from arena2x2.tournament import GameSelection, GridSpec, aggregate, run_grid
from arena2x2.reporting import (
    family_performance_spec,
    pairwise_heatmap_spec,
    trajectories_spec,
    write_manifest,
    write_metrics_csv,
    write_metrics_json,
    write_reports,
    write_run_log,
)

from conftest import build_mock_registry


@pytest.fixture(scope="module")
def pd_grid(tmp_path_factory):
    spec = GridSpec(
        agents=(AgentSpec.llm("engine-a"), AgentSpec.llm("engine-b")),
        games=GameSelection(kind="explicit", explicit=(default_prisoners_dilemma(),)),
        prediction_modes=(PredictionMode.PREDICT_THEN_ACT,),
    )
    run_dir = tmp_path_factory.mktemp("runs") / "pd"
    return run_grid(spec, run_dir, registry=build_mock_registry(), offline=True)


def scripted_transcripts():
    game = default_prisoners_dilemma()
    configs = [
        MatchConfig(game=game, agent_p1=AgentSpec.constant(0),
                    agent_p2=AgentSpec.defect_then_cooperate(), rounds=10),
        MatchConfig(game=game, agent_p1=AgentSpec.defect_then_cooperate(),
                    agent_p2=AgentSpec.constant(0), rounds=10),
    ]
    return [play_match(c) for c in configs]


class TestMetricsTables:
    def test_csv_layout_and_null_rendering(self, tmp_path):
        transcripts = scripted_transcripts()
        rows = aggregate(transcripts, ("agent",))
        path = tmp_path / "metrics.csv"
        write_metrics_csv(rows, ("agent",), path)
        with open(path, newline="") as fh:
            parsed = list(csv.reader(fh))
        assert parsed[0] == [
            "agent", "n", "mean_normalized_score", "ci95_normalized_score",
            "mean_defection_rate", "mean_coordination_rate",
            "mean_preferred_option_rate", "mean_prediction_lock_round", "low_n",
        ]
        assert len(parsed) == 3
        first = dict(zip(parsed[0], parsed[1]))
        assert first["agent"] == "constant-0"
        assert first["n"] == "2"
        # No predictions were made, so the lock column is empty, not "None".
        assert first["mean_prediction_lock_round"] == ""

    def test_csv_and_json_are_deterministic(self, tmp_path):
        transcripts = scripted_transcripts()
        rows = aggregate(transcripts, ("agent", "seat"))
        for suffix, writer in (("csv", write_metrics_csv), ("json", write_metrics_json)):
            a, b = tmp_path / f"a.{suffix}", tmp_path / f"b.{suffix}"
            writer(rows, ("agent", "seat"), a)
            writer(rows, ("agent", "seat"), b)
            assert a.read_bytes() == b.read_bytes()

    def test_json_document_shape(self, tmp_path):
        rows = aggregate(scripted_transcripts(), ("agent",))
        path = tmp_path / "metrics.json"
        write_metrics_json(rows, ("agent",), path)
        doc = json.loads(path.read_text())
        assert doc["group_by"] == ["agent"]
        assert len(doc["rows"]) == 2
        assert doc["rows"][0]["agent"] == "constant-0"
        assert doc["rows"][0]["n"] == 2


class TestRunLog:
    def test_every_record_appears_exactly_once(self, pd_grid):
        path = pd_grid.run_dir / "log.jsonl"
        write_run_log(pd_grid.transcripts, path)
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        expected = sum(len(t.records) for t in pd_grid.transcripts)
        assert len(lines) == expected
        seen = {(doc["config_key"], doc["record_id"]) for doc in lines}
        assert len(seen) == expected
        assert all(doc["provider_id"] in {"engine-a", "engine-b"} for doc in lines)

    def test_empty_log_is_an_empty_file(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_run_log(scripted_transcripts(), path)
        assert path.read_text() == ""


class TestManifest:
    def test_counts(self, pd_grid, tmp_path):
        path = tmp_path / "manifest.json"
        write_manifest(pd_grid, path)
        doc = json.loads(path.read_text())
        assert doc == {
            "configs": 4,
            "transcripts": 4,
            "valid": 4,
            "invalid": 0,
            "executed": 4,
            "resumed": 0,
            "failures": [],
        }


class TestPlotSpecs:
    def test_family_performance_orders_families_by_mean(self):
        transcripts = scripted_transcripts()
        spec = family_performance_spec(transcripts)
        assert spec["chart"] == "grouped_bar"
        assert spec["x"] == ["PrisonersDilemma"]
        agents = [series["agent"] for series in spec["series"]]
        assert agents == ["constant-0", "defect-then-cooperate"]
        hawk = spec["series"][0]
        assert hawk["mean"] == [pytest.approx(0.95)]
        assert hawk["n"] == [2]

    def test_heatmap_axes_and_cells(self):
        transcripts = scripted_transcripts()
        spec = pairwise_heatmap_spec(transcripts, "normalized_score")
        assert spec["rows"] == spec["cols"] == ["constant-0", "defect-then-cooperate"]
        # Seat-1 values: constant-0 vs dtc earned 0.95; dtc vs constant-0 earned 0.05.
        assert spec["values"][0][1] == pytest.approx(0.95)
        assert spec["values"][1][0] == pytest.approx(0.05)
        # No self-play in this sample, so the diagonal is empty.
        assert spec["values"][0][0] is None
        assert spec["n"][0][0] == 0

    def test_heatmap_rejects_unknown_metrics(self):
        with pytest.raises(ValueError):
            pairwise_heatmap_spec([], "happiness")

    def test_coordination_heatmap_is_shared_between_seats(self):
        spec = pairwise_heatmap_spec(scripted_transcripts(), "coordination_rate")
        assert spec["values"][0][1] == pytest.approx(0.1)

    def test_trajectories_show_labeled_actions_and_predictions(self, pd_grid):
        spec = trajectories_spec(pd_grid.transcripts)
        assert len(spec["matches"]) == 4
        assert spec["truncated"] is False
        match = spec["matches"][0]
        assert match["valid"] is True
        rounds = match["rounds"]
        assert len(rounds) == 10
        assert rounds[0]["action_p1"] in {"F", "J"}
        assert rounds[0]["prediction_p1"] in {"F", "J"}

    def test_trajectories_cap(self):
        transcripts = scripted_transcripts()
        spec = trajectories_spec(transcripts, cap=1)
        assert len(spec["matches"]) == 1
        assert spec["truncated"] is True


class TestWriteReports:
    def test_full_report_set(self, pd_grid):
        write_reports(pd_grid, group_by=("agent", "game"))
        run_dir = pd_grid.run_dir
        for name in (
            "metrics.csv", "metrics.json", "metrics_by_agent.csv",
            "metrics_by_agent.json", "completions.jsonl", "manifest.json",
        ):
            assert (run_dir / name).exists(), name
        plots = sorted(p.name for p in (run_dir / "plots").glob("*.json"))
        assert plots == [
            "family_performance.json",
            "heatmap_coordination_rate.json",
            "heatmap_defection_rate.json",
            "heatmap_normalized_score.json",
            "heatmap_preferred_option_rate.json",
            "trajectories.json",
        ]
        doc = json.loads((run_dir / "metrics.json").read_text())
        assert doc["group_by"] == ["agent", "game"]

    def test_rewriting_reports_is_idempotent(self, pd_grid):
        run_dir = pd_grid.run_dir
        write_reports(pd_grid, group_by=("agent",))
        before = {p.name: p.read_bytes() for p in run_dir.glob("*.json")}
        write_reports(pd_grid, group_by=("agent",))
        after = {p.name: p.read_bytes() for p in run_dir.glob("*.json")}
        assert before == after
