"""Game representations, equilibrium analysis, and the payoff sweep."""

from __future__ import annotations

import json

import pytest

from arena2x2.errors import GameValidationError
from arena2x2.games import (
    CELLS,
    OrdinalGame,
    PayoffGame,
    best_response_cycle,
    cell_value,
    default_battle_of_sexes,
    default_prisoners_dilemma,
    dominant_action,
    dump_game_json,
    equilibrium_report,
    load_game_json,
    ordinal_battle_of_sexes,
    ordinal_from_payoffs,
    ordinal_prisoners_dilemma,
    pareto_dominated_cells,
    payoff_sweep,
    pure_nash,
)


class TestPayoffGame:
    def test_round_trips_through_json(self, tmp_path):
        game = default_prisoners_dilemma()
        path = tmp_path / "game.json"
        dump_game_json(game, path)
        loaded = load_game_json(path)
        assert loaded == game

    def test_json_layout_is_player_major(self):
        doc = default_prisoners_dilemma().to_json_dict()
        assert doc["actions"] == [["F", "J"], ["F", "J"]]
        assert doc["payoffs"][0] == [[5, 10], [0, 8]]
        assert doc["payoffs"][1] == [[5, 0], [10, 8]]

    def test_payoff_indexing(self):
        game = default_prisoners_dilemma()
        assert game.payoff(1, 0, 1) == 10
        assert game.payoff(2, 0, 1) == 0
        assert game.cell_payoffs((1, 1)) == (8, 8)
        assert game.max_payoff(1) == 10

    def test_rejects_duplicate_action_labels(self):
        with pytest.raises(GameValidationError):
            PayoffGame(("F", "F"), ("F", "J"), ((1, 2), (3, 4)), ((1, 2), (3, 4)))

    def test_rejects_negative_payoffs(self):
        with pytest.raises(GameValidationError):
            PayoffGame(("F", "J"), ("F", "J"), ((-1, 2), (3, 4)), ((1, 2), (3, 4)))

    def test_rejects_malformed_tables(self):
        with pytest.raises(GameValidationError):
            PayoffGame(("F", "J"), ("F", "J"), ((1, 2, 3), (3, 4)), ((1, 2), (3, 4)))

    def test_from_cells_requires_all_cells(self):
        with pytest.raises(GameValidationError):
            PayoffGame.from_cells({(0, 0): (1, 1)})


class TestOrdinalGame:
    def test_requires_rank_permutations(self):
        with pytest.raises(GameValidationError):
            OrdinalGame((1, 2, 3, 3), (1, 2, 3, 4))

    def test_rank_indexing_is_row_major(self):
        game = OrdinalGame((2, 4, 1, 3), (2, 1, 4, 3))
        assert game.rank(1, 0, 1) == 4
        assert game.rank(2, 1, 0) == 4
        assert game.cell_ranks((1, 1)) == (3, 3)

    def test_to_payoff_game_uses_ranks_as_points(self):
        payoff = ordinal_prisoners_dilemma().to_payoff_game()
        assert payoff.payoffs_p1 == ((2, 4), (1, 3))
        assert payoff.payoffs_p2 == ((2, 1), (4, 3))
        assert payoff.actions_p1 == ("F", "J")

    def test_cell_value_dispatches_on_game_type(self):
        ordinal = ordinal_prisoners_dilemma()
        payoff = default_prisoners_dilemma()
        assert cell_value(ordinal, 1, 0, 1) == 4
        assert cell_value(payoff, 1, 0, 1) == 10


class TestEquilibria:
    def test_prisoners_dilemma_has_unique_defect_equilibrium(self):
        game = ordinal_prisoners_dilemma()
        assert pure_nash(game) == frozenset({(0, 0)})
        assert dominant_action(game, 1) == 0
        assert dominant_action(game, 2) == 0
        assert not best_response_cycle(game)

    def test_battle_of_sexes_has_two_equilibria_no_dominance(self):
        game = ordinal_battle_of_sexes()
        assert pure_nash(game) == frozenset({(0, 0), (1, 1)})
        assert dominant_action(game, 1) is None
        assert dominant_action(game, 2) is None

    def test_weak_equilibria_count_for_tied_payoff_games(self):
        # Seat 2 is indifferent across columns in the top row; (0, 0) and
        # (0, 1) still qualify because no deviation strictly gains.
        game = PayoffGame(("F", "J"), ("F", "J"), ((5, 5), (0, 0)), ((3, 3), (1, 1)))
        assert pure_nash(game) == frozenset({(0, 0), (0, 1)})

    def test_matching_pennies_shape_cycles(self):
        game = OrdinalGame((4, 1, 2, 3), (2, 3, 4, 1))
        assert pure_nash(game) == frozenset()
        assert best_response_cycle(game)

    def test_cycle_iff_no_pure_equilibrium_on_ordinal_games(self):
        from arena2x2.taxonomy import enumerate_games

        for game in enumerate_games():
            assert best_response_cycle(game) == (not pure_nash(game))

    def test_cycle_visits_all_four_cells(self):
        # Explicit simulation: strict best responses from any start walk
        # through every cell when there is no rest point.
        from arena2x2.taxonomy import enumerate_games

        for game in enumerate_games():
            if pure_nash(game):
                continue
            cur = (0, 0)
            visited = {cur}
            for _ in range(8):
                row, col = cur
                if game.rank(1, 1 - row, col) > game.rank(1, row, col):
                    cur = (1 - row, col)
                elif game.rank(2, row, 1 - col) > game.rank(2, row, col):
                    cur = (row, 1 - col)
                visited.add(cur)
            assert visited == set(CELLS)

    def test_pareto_dominated_cells(self):
        game = ordinal_prisoners_dilemma()
        assert (0, 0) in pareto_dominated_cells(game)
        assert (0, 1) not in pareto_dominated_cells(game)

    def test_equilibrium_report_serializes(self):
        report = equilibrium_report(ordinal_prisoners_dilemma())
        doc = report.to_json_dict()
        assert doc["pure_nash"] == [[0, 0]]
        assert doc["dominant_p1"] == 0
        assert doc["best_response_cycle"] is False
        json.dumps(doc)


class TestOrdinalFromPayoffs:
    def test_ranks_strictly_ordered_payoffs(self):
        game = ordinal_from_payoffs(default_prisoners_dilemma())
        assert game.ranks_p1 == (2, 4, 1, 3)
        assert game.ranks_p2 == (2, 1, 4, 3)

    def test_rejects_ties(self):
        with pytest.raises(GameValidationError):
            ordinal_from_payoffs(default_battle_of_sexes())


class TestPayoffSweep:
    def test_endpoints_are_base_and_mirror(self):
        base = default_battle_of_sexes()
        games = payoff_sweep(base, steps=2)
        assert games[0].payoffs_p1 == base.payoffs_p1
        assert games[0].payoffs_p2 == base.payoffs_p2
        assert games[1].cell_payoffs((0, 0)) == (7, 10)
        assert games[1].cell_payoffs((1, 1)) == (10, 7)

    def test_intermediate_steps_interpolate_linearly(self):
        games = payoff_sweep(default_battle_of_sexes(), steps=4)
        assert [g.cell_payoffs((0, 0))[0] for g in games] == [10, 9, 8, 7]
        assert [g.cell_payoffs((1, 1))[0] for g in games] == [7, 8, 9, 10]
        assert [g.cell_payoffs((0, 0))[1] for g in games] == [7, 8, 9, 10]

    def test_off_diagonal_cells_untouched(self):
        for game in payoff_sweep(default_battle_of_sexes(), steps=5):
            assert game.cell_payoffs((0, 1)) == (0, 0)
            assert game.cell_payoffs((1, 0)) == (0, 0)

    def test_names_are_distinct_and_derived(self):
        games = payoff_sweep(default_battle_of_sexes(), steps=3)
        names = [g.name for g in games]
        assert len(set(names)) == 3
        assert all(name.startswith("battle-of-sexes-") for name in names)

    def test_rejects_single_step(self):
        with pytest.raises(GameValidationError):
            payoff_sweep(default_battle_of_sexes(), steps=1)

    def test_rejects_games_without_two_equilibria(self):
        with pytest.raises(GameValidationError):
            payoff_sweep(default_prisoners_dilemma(), steps=3)

    def test_rejects_aligned_preferences(self):
        # Both players prefer the same equilibrium: nothing to trade.
        game = PayoffGame.from_cells(
            {(0, 0): (10, 10), (0, 1): (1, 2), (1, 0): (2, 1), (1, 1): (5, 5)}
        )
        with pytest.raises(GameValidationError):
            payoff_sweep(game, steps=3)
