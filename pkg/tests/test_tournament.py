"""Grid expansion, execution with resume, and aggregation."""

from __future__ import annotations

import json

import pytest

from arena2x2.agents import AgentKind, AgentSpec
from arena2x2.errors import ConfigurationError, GridError
from arena2x2.games import default_battle_of_sexes, default_prisoners_dilemma
from arena2x2.prompting import (
    BASE_VARIANT,
    Intervention,
    PredictionMode,
    PromptVariant,
)
from arena2x2.providers import MockProvider, ProviderParams, ProviderRegistry
from arena2x2.taxonomy import GameFamily
from arena2x2.tournament import (
    GameSelection,
    GridSpec,
    aggregate,
    expand_grid,
    mean_and_ci95,
    run_grid,
)
from arena2x2.match import play_match, MatchConfig

from conftest import build_mock_registry

PD_GAMES = GameSelection(kind="explicit", explicit=(default_prisoners_dilemma(),))


class TestGameSelection:
    def test_unknown_kind_rejected(self):
        with pytest.raises(GridError):
            GameSelection(kind="random")

    def test_explicit_needs_games(self):
        with pytest.raises(GridError):
            GameSelection(kind="explicit")

    def test_enumerated_default_resolves_named_families(self):
        games = GameSelection().resolve()
        assert len(games) == 136
        assert all(g.max_payoff(1) == 4 and g.max_payoff(2) == 4 for g in games)
        assert all("-" in (g.name or "") for g in games)

    def test_enumerated_names_carry_index_and_family(self):
        names = [g.name for g in GameSelection(include_other=True).resolve()]
        assert len(names) == 144
        assert names[0].startswith("g000-")
        families = {n.split("-", 1)[1] for n in names}
        assert families == {f.value for f in GameFamily}

    def test_single_family_selection(self):
        games = GameSelection(families=(GameFamily.CYCLIC,)).resolve()
        assert len(games) == 18
        assert all((g.name or "").endswith("-Cyclic") for g in games)


class TestGridSpec:
    def test_needs_agents(self):
        with pytest.raises(GridError):
            GridSpec(agents=())

    def test_agent_names_must_be_unique(self):
        with pytest.raises(GridError):
            GridSpec(agents=(AgentSpec.constant(0), AgentSpec.constant(0)))

    def test_repetitions_must_be_positive(self):
        with pytest.raises(GridError):
            GridSpec(agents=(AgentSpec.constant(0),), repetitions=0)

    def test_axes_must_be_non_empty(self):
        with pytest.raises(GridError):
            GridSpec(agents=(AgentSpec.constant(0),), variants=())

    def test_observer_mode_cannot_be_swept(self):
        with pytest.raises(GridError):
            GridSpec(
                agents=(AgentSpec.llm("engine-a"),),
                prediction_modes=(PredictionMode.PREDICT_AS_OBSERVER,),
            )


class TestExpandGrid:
    def test_three_engines_against_the_named_families(self):
        spec = GridSpec(
            agents=(
                AgentSpec.llm("engine-a"),
                AgentSpec.llm("engine-b"),
                AgentSpec.llm("engine-c"),
            ),
        )
        configs = expand_grid(spec)
        assert len(configs) == 3 * 3 * 136
        assert len({c.config_key() for c in configs}) == len(configs)

    def test_expansion_order_is_documented_and_stable(self):
        spec = GridSpec(
            agents=(AgentSpec.llm("engine-a"), AgentSpec.llm("engine-b")),
            games=GameSelection(
                kind="explicit",
                explicit=(default_prisoners_dilemma(), default_battle_of_sexes()),
            ),
        )
        configs = expand_grid(spec)
        pairs = [(c.agent_p1.name, c.agent_p2.name, c.game.name) for c in configs]
        assert pairs == [
            ("engine-a", "engine-a", "prisoners-dilemma"),
            ("engine-a", "engine-a", "battle-of-sexes"),
            ("engine-a", "engine-b", "prisoners-dilemma"),
            ("engine-a", "engine-b", "battle-of-sexes"),
            ("engine-b", "engine-a", "prisoners-dilemma"),
            ("engine-b", "engine-a", "battle-of-sexes"),
            ("engine-b", "engine-b", "prisoners-dilemma"),
            ("engine-b", "engine-b", "battle-of-sexes"),
        ]
        assert [c.config_key() for c in expand_grid(spec)] == [
            c.config_key() for c in configs
        ]

    def test_self_play_can_be_disabled(self):
        spec = GridSpec(
            agents=(AgentSpec.llm("engine-a"), AgentSpec.llm("engine-b")),
            games=PD_GAMES,
            self_play=False,
        )
        pairs = [(c.agent_p1.name, c.agent_p2.name) for c in expand_grid(spec)]
        assert pairs == [("engine-a", "engine-b"), ("engine-b", "engine-a")]

    def test_repetitions_are_numbered(self):
        spec = GridSpec(
            agents=(AgentSpec.llm("engine-a"),), games=PD_GAMES, repetitions=3
        )
        assert [c.rep for c in expand_grid(spec)] == [0, 1, 2]

    def test_sweeps_touch_llm_seats_only(self):
        spec = GridSpec(
            agents=(AgentSpec.constant(0), AgentSpec.llm("engine-a")),
            games=PD_GAMES,
            interventions=(None, Intervention.fallible()),
            prediction_modes=(PredictionMode.NONE, PredictionMode.PREDICT_THEN_ACT),
        )
        configs = expand_grid(spec)
        for config in configs:
            if config.agent_p1.kind is not AgentKind.LLM:
                assert config.intervention_p1 is None
                assert config.prediction_p1 is PredictionMode.NONE
            if config.agent_p2.kind is not AgentKind.LLM:
                assert config.intervention_p2 is None
                assert config.prediction_p2 is PredictionMode.NONE

    def test_scripted_pairs_collapse_under_prompt_sweeps(self):
        spec = GridSpec(
            agents=(AgentSpec.constant(0), AgentSpec.constant(1, name="dove")),
            games=PD_GAMES,
            variants=(BASE_VARIANT, PromptVariant.from_id("numeric.swapped.coins")),
            interventions=(None, Intervention.fallible()),
            prediction_modes=(PredictionMode.NONE, PredictionMode.PREDICT_THEN_ACT),
        )
        configs = expand_grid(spec)
        # Scripted seats read no prompts, so only the variant axis survives
        # in the config (it is part of the match record), and the
        # intervention and prediction axes dedupe away.
        assert len(configs) == 2 * 2 * 2  # agent pair x variant

    def test_agent_intervention_beats_the_swept_one(self):
        plan = Intervention.schedule("The other player always picks J.")
        agent = AgentSpec.llm("engine-a", intervention_id="plan")
        spec = GridSpec(
            agents=(agent,),
            games=PD_GAMES,
            interventions=(None, Intervention.fallible()),
        )
        configs = expand_grid(spec, interventions_by_id={"plan": plan})
        assert len(configs) == 1  # the sweep axis no longer differentiates
        assert configs[0].intervention_p1 == plan
        assert configs[0].intervention_p2 == plan

    def test_unknown_intervention_id_fails_fast(self):
        agent = AgentSpec.llm("engine-a", intervention_id="ghost")
        spec = GridSpec(agents=(agent,), games=PD_GAMES)
        with pytest.raises(ConfigurationError, match="ghost"):
            expand_grid(spec)


class TestRunGrid:
    def small_spec(self) -> GridSpec:
        return GridSpec(
            agents=(AgentSpec.llm("engine-a"), AgentSpec.llm("engine-b")),
            games=PD_GAMES,
        )

    def test_executes_and_persists_every_match(self, tmp_path):
        result = run_grid(
            self.small_spec(), tmp_path / "run",
            registry=build_mock_registry(), offline=True,
        )
        assert result.executed == 4
        assert result.resumed == 0
        assert result.failures == []
        assert result.invalid_count == 0
        files = sorted((tmp_path / "run" / "transcripts").glob("*.json"))
        assert len(files) == 4
        doc = json.loads(files[0].read_text())
        assert doc["config_key"] == files[0].stem
        assert doc["valid"] is True

    def test_resume_loads_instead_of_replaying(self, tmp_path):
        spec = self.small_spec()
        first = run_grid(spec, tmp_path / "run", registry=build_mock_registry(), offline=True)
        second = run_grid(spec, tmp_path / "run", registry=build_mock_registry(), offline=True)
        assert (second.executed, second.resumed) == (0, 4)
        assert [t.config_key() for t in second.transcripts] == [
            t.config_key() for t in first.transcripts
        ]
        assert [t.to_json() for t in second.transcripts] == [
            t.to_json() for t in first.transcripts
        ]

    def test_resume_can_be_disabled(self, tmp_path):
        spec = self.small_spec()
        run_grid(spec, tmp_path / "run", registry=build_mock_registry(), offline=True)
        again = run_grid(
            spec, tmp_path / "run",
            registry=build_mock_registry(), offline=True, resume=False,
        )
        assert (again.executed, again.resumed) == (4, 0)

    def test_setup_failures_do_not_stop_the_grid(self, tmp_path):
        spec = GridSpec(
            agents=(AgentSpec.llm("engine-a"), AgentSpec.llm("engine-x")),
            games=PD_GAMES,
        )
        result = run_grid(spec, tmp_path / "run", registry=build_mock_registry(), offline=True)
        assert result.executed == 1  # engine-a vs engine-a still ran
        assert len(result.failures) == 3
        assert all("engine-x" in reason for _, reason in result.failures)
        assert len(result.transcripts) == 1

    def test_invalid_matches_are_kept_and_counted(self, tmp_path):
        registry = ProviderRegistry()
        registry.register(MockProvider("noisy", ["?"] * 4), ProviderParams(model="mock"))
        spec = GridSpec(agents=(AgentSpec.llm("noisy"),), games=PD_GAMES)
        result = run_grid(
            spec, tmp_path / "run", registry=registry, offline=True, max_workers=1
        )
        assert result.executed == 1
        assert result.failures == []
        assert result.invalid_count == 1
        assert result.valid_transcripts == []
        assert result.transcripts[0].failure.startswith("MoveError")

    def test_progress_callback_counts_up(self, tmp_path):
        seen = []
        run_grid(
            self.small_spec(), tmp_path / "run",
            registry=build_mock_registry(), offline=True,
            progress=lambda done, total: seen.append((done, total)),
        )
        assert seen == [(1, 4), (2, 4), (3, 4), (4, 4)]


class TestMeanAndCi95:
    def test_two_point_sample(self):
        mean, ci = mean_and_ci95([0.4, 0.6])
        assert mean == pytest.approx(0.5)
        assert ci == pytest.approx(0.196)

    def test_singleton_has_zero_width(self):
        assert mean_and_ci95([0.7]) == (0.7, 0.0)

    def test_identical_values_have_zero_width(self):
        mean, ci = mean_and_ci95([0.3, 0.3, 0.3])
        assert (mean, ci) == (0.3, 0.0)

    def test_empty_sample_rejected(self):
        with pytest.raises(GridError):
            mean_and_ci95([])


class TestAggregate:
    def pd_transcript(self):
        return play_match(
            MatchConfig(
                game=default_prisoners_dilemma(),
                agent_p1=AgentSpec.constant(0),
                agent_p2=AgentSpec.defect_then_cooperate(),
                rounds=10,
            )
        )

    def test_one_transcript_yields_two_observations(self):
        rows = aggregate([self.pd_transcript()], group_by=("agent",))
        by_agent = {row.key_dict()["agent"]: row for row in rows}
        assert set(by_agent) == {"constant-0", "defect-then-cooperate"}
        hawk = by_agent["constant-0"]
        assert hawk.n == 1
        assert hawk.mean_normalized_score == pytest.approx(0.95)
        assert hawk.ci95_normalized_score == 0.0
        assert hawk.mean_defection_rate == pytest.approx(1.0)
        assert hawk.low_n
        dove = by_agent["defect-then-cooperate"]
        assert dove.mean_normalized_score == pytest.approx(0.05)
        assert dove.mean_defection_rate == pytest.approx(0.1)
        assert dove.mean_prediction_lock_round is None

    def test_repeated_transcripts_accumulate(self):
        t = self.pd_transcript()
        rows = aggregate([t] * 5, group_by=("agent",))
        hawk = next(r for r in rows if r.key_dict()["agent"] == "constant-0")
        assert hawk.n == 5
        assert hawk.mean_normalized_score == pytest.approx(0.95)
        assert hawk.ci95_normalized_score == 0.0  # identical values
        assert not hawk.low_n

    def test_invalid_transcripts_contribute_nothing(self):
        t = self.pd_transcript()
        registry = ProviderRegistry()
        registry.register(MockProvider("noisy", ["?"] * 4), ProviderParams(model="mock"))
        broken = play_match(
            MatchConfig(
                game=default_prisoners_dilemma(),
                agent_p1=AgentSpec.llm("noisy"),
                agent_p2=AgentSpec.constant(0),
                rounds=10,
            ),
            registry=registry,
            offline=True,
        )
        assert not broken.valid
        rows = aggregate([t, broken], group_by=("agent",))
        assert sum(row.n for row in rows) == 2

    def test_group_by_multiple_fields(self):
        rows = aggregate([self.pd_transcript()], group_by=("agent", "seat", "game"))
        assert [row.key for row in rows] == [
            (("agent", "constant-0"), ("seat", "p1"), ("game", "prisoners-dilemma")),
            (("agent", "defect-then-cooperate"), ("seat", "p2"), ("game", "prisoners-dilemma")),
        ]

    def test_family_and_opponent_fields(self):
        rows = aggregate([self.pd_transcript()], group_by=("family", "opponent"))
        keys = [row.key_dict() for row in rows]
        assert all(k["family"] == "PrisonersDilemma" for k in keys)
        assert {k["opponent"] for k in keys} == {"constant-0", "defect-then-cooperate"}

    def test_unknown_group_field_rejected(self):
        with pytest.raises(GridError, match="known fields"):
            aggregate([self.pd_transcript()], group_by=("flavor",))

    def test_row_json_shape(self):
        row = aggregate([self.pd_transcript()], group_by=("agent",))[0]
        doc = row.to_json_dict()
        assert doc["agent"] == "constant-0"
        assert doc["n"] == 1
        assert doc["low_n"] is True
        assert set(doc) >= {
            "mean_normalized_score", "ci95_normalized_score",
            "mean_defection_rate", "mean_coordination_rate",
            "mean_preferred_option_rate", "mean_prediction_lock_round",
        }
