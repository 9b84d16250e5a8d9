"""2x2 game representations and equilibrium analysis.

Two kinds of games appear throughout the engine:

* ``PayoffGame``: a concrete bimatrix with integer payoffs, used to score
  matches.  Rows are indexed by player 1's action, columns by player 2's.
* ``OrdinalGame``: a strict preference ranking (each player ranks the four
  outcome cells 1..4, 4 best, no ties).  These are the unit of enumeration
  and classification; ``to_payoff_game`` turns ranks directly into points.

Cells are ``(row, col)`` pairs with ``row, col in {0, 1}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Union

from .errors import GameValidationError

Cell = tuple[int, int]

DEFAULT_ACTIONS = ("F", "J")

CELLS: tuple[Cell, ...] = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class PayoffGame:
    """A 2x2 bimatrix game with named actions and integer payoffs.

    ``payoffs_p1[row][col]`` is player 1's payoff when player 1 picks
    ``actions_p1[row]`` and player 2 picks ``actions_p2[col]``; same layout
    for ``payoffs_p2``.
    """

    actions_p1: tuple[str, str]
    actions_p2: tuple[str, str]
    payoffs_p1: tuple[tuple[int, int], tuple[int, int]]
    payoffs_p2: tuple[tuple[int, int], tuple[int, int]]
    name: str | None = None

    def __post_init__(self) -> None:
        for label, actions in (("p1", self.actions_p1), ("p2", self.actions_p2)):
            if len(actions) != 2 or len(set(actions)) != 2:
                raise GameValidationError(f"{label} needs two distinct action labels, got {actions!r}")
            if not all(isinstance(a, str) and a for a in actions):
                raise GameValidationError(f"{label} action labels must be non-empty strings")
        for label, table in (("p1", self.payoffs_p1), ("p2", self.payoffs_p2)):
            if len(table) != 2 or any(len(row) != 2 for row in table):
                raise GameValidationError(f"{label} payoffs must be a 2x2 table")
            for row in table:
                for value in row:
                    if not isinstance(value, int) or isinstance(value, bool):
                        raise GameValidationError(f"{label} payoffs must be integers, got {value!r}")
                    if value < 0:
                        raise GameValidationError(f"{label} payoffs must be non-negative, got {value}")

    @classmethod
    def from_cells(
        cls,
        cells: dict[Cell, tuple[int, int]],
        actions_p1: tuple[str, str] = DEFAULT_ACTIONS,
        actions_p2: tuple[str, str] = DEFAULT_ACTIONS,
        name: str | None = None,
    ) -> "PayoffGame":
        """Build a game from a ``{(row, col): (p1_payoff, p2_payoff)}`` map."""
        missing = [c for c in CELLS if c not in cells]
        if missing:
            raise GameValidationError(f"missing cells: {missing}")
        p1 = tuple(tuple(cells[(r, c)][0] for c in (0, 1)) for r in (0, 1))
        p2 = tuple(tuple(cells[(r, c)][1] for c in (0, 1)) for r in (0, 1))
        return cls(actions_p1, actions_p2, p1, p2, name)

    def payoff(self, player: int, row: int, col: int) -> int:
        """Payoff for ``player`` (1 or 2) at cell ``(row, col)``."""
        table = self.payoffs_p1 if player == 1 else self.payoffs_p2
        return table[row][col]

    def cell_payoffs(self, cell: Cell) -> tuple[int, int]:
        r, c = cell
        return (self.payoffs_p1[r][c], self.payoffs_p2[r][c])

    def max_payoff(self, player: int) -> int:
        table = self.payoffs_p1 if player == 1 else self.payoffs_p2
        return max(max(row) for row in table)

    def to_json_dict(self) -> dict:
        doc = {
            "actions": [list(self.actions_p1), list(self.actions_p2)],
            "payoffs": [
                [list(row) for row in self.payoffs_p1],
                [list(row) for row in self.payoffs_p2],
            ],
        }
        if self.name is not None:
            doc["name"] = self.name
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PayoffGame":
        try:
            actions = doc["actions"]
            payoffs = doc["payoffs"]
        except (KeyError, TypeError) as exc:
            raise GameValidationError(f"game document needs 'actions' and 'payoffs': {exc}") from exc
        if len(actions) != 2 or len(payoffs) != 2:
            raise GameValidationError("'actions' and 'payoffs' must each have one entry per player")
        return cls(
            actions_p1=tuple(actions[0]),
            actions_p2=tuple(actions[1]),
            payoffs_p1=tuple(tuple(int(v) for v in row) for row in payoffs[0]),
            payoffs_p2=tuple(tuple(int(v) for v in row) for row in payoffs[1]),
            name=doc.get("name"),
        )


@dataclass(frozen=True)
class OrdinalGame:
    """A strict-ordinal 2x2 game: each player ranks the four cells 1..4.

    Ranks are stored row-major: ``ranks_p1[2 * row + col]``.  Rank 4 is the
    most preferred outcome.  Both players' rankings must be permutations of
    (1, 2, 3, 4), so preferences never tie.
    """

    ranks_p1: tuple[int, int, int, int]
    ranks_p2: tuple[int, int, int, int]

    def __post_init__(self) -> None:
        for label, ranks in (("p1", self.ranks_p1), ("p2", self.ranks_p2)):
            if sorted(ranks) != [1, 2, 3, 4]:
                raise GameValidationError(f"{label} ranks must be a permutation of 1..4, got {ranks!r}")

    def rank(self, player: int, row: int, col: int) -> int:
        ranks = self.ranks_p1 if player == 1 else self.ranks_p2
        return ranks[2 * row + col]

    def cell_ranks(self, cell: Cell) -> tuple[int, int]:
        r, c = cell
        return (self.rank(1, r, c), self.rank(2, r, c))

    def as_tuple(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return (self.ranks_p1, self.ranks_p2)

    def to_payoff_game(
        self,
        actions_p1: tuple[str, str] = DEFAULT_ACTIONS,
        actions_p2: tuple[str, str] = DEFAULT_ACTIONS,
        name: str | None = None,
    ) -> PayoffGame:
        """Use the ranks themselves as points (rank 4 pays 4, rank 1 pays 1)."""
        p1 = tuple(tuple(self.rank(1, r, c) for c in (0, 1)) for r in (0, 1))
        p2 = tuple(tuple(self.rank(2, r, c) for c in (0, 1)) for r in (0, 1))
        return PayoffGame(actions_p1, actions_p2, p1, p2, name)


Game = Union[PayoffGame, OrdinalGame]


def cell_value(game: Game, player: int, row: int, col: int) -> int:
    """Rank or payoff at a cell, whichever the game type carries."""
    if isinstance(game, OrdinalGame):
        return game.rank(player, row, col)
    return game.payoff(player, row, col)


def pure_nash(game: Game) -> frozenset[Cell]:
    """All cells where neither player gains by deviating unilaterally.

    Deviations that merely tie are not profitable, so payoff games with
    ties use the weak condition; ordinal games have no ties, making the
    condition effectively strict.
    """
    out = set()
    for row, col in CELLS:
        p1_ok = cell_value(game, 1, row, col) >= cell_value(game, 1, 1 - row, col)
        p2_ok = cell_value(game, 2, row, col) >= cell_value(game, 2, row, 1 - col)
        if p1_ok and p2_ok:
            out.add((row, col))
    return frozenset(out)


def dominant_action(game: Game, player: int) -> int | None:
    """The player's strictly dominant action index, or None.

    An action is strictly dominant when it beats the alternative against
    both opponent actions.
    """
    for mine in (0, 1):
        other_own = 1 - mine
        if player == 1:
            better = all(
                cell_value(game, 1, mine, c) > cell_value(game, 1, other_own, c) for c in (0, 1)
            )
        else:
            better = all(
                cell_value(game, 2, r, mine) > cell_value(game, 2, r, other_own) for r in (0, 1)
            )
        if better:
            return mine
    return None


def best_response_cycle(game: Game) -> bool:
    """Whether sequential strict best responses cycle instead of settling.

    Starting from each cell, let players alternately switch to a strictly
    better action.  Returns True if some start revisits a cell without ever
    reaching a rest point, which for strict-ordinal games happens exactly
    when the game has no pure equilibrium.
    """
    for start in CELLS:
        cur = start
        seen = {cur}
        while True:
            row, col = cur
            if cell_value(game, 1, 1 - row, col) > cell_value(game, 1, row, col):
                cur = (1 - row, col)
            elif cell_value(game, 2, row, 1 - col) > cell_value(game, 2, row, col):
                cur = (row, 1 - col)
            else:
                break
            if cur in seen:
                return True
            seen.add(cur)
    return False


def pareto_dominated_cells(game: Game) -> frozenset[Cell]:
    """Cells strictly worse for both players than some other cell."""
    out = set()
    for cell in CELLS:
        v1, v2 = cell_value(game, 1, *cell), cell_value(game, 2, *cell)
        for other in CELLS:
            if other == cell:
                continue
            if cell_value(game, 1, *other) > v1 and cell_value(game, 2, *other) > v2:
                out.add(cell)
                break
    return frozenset(out)


@dataclass(frozen=True)
class EquilibriumReport:
    """Summary of a game's pure strategic structure."""

    pure_nash: frozenset[Cell]
    dominant_p1: int | None
    dominant_p2: int | None
    best_response_cycle: bool

    def to_json_dict(self) -> dict:
        return {
            "pure_nash": sorted(list(c) for c in self.pure_nash),
            "dominant_p1": self.dominant_p1,
            "dominant_p2": self.dominant_p2,
            "best_response_cycle": self.best_response_cycle,
        }


def equilibrium_report(game: Game) -> EquilibriumReport:
    return EquilibriumReport(
        pure_nash=pure_nash(game),
        dominant_p1=dominant_action(game, 1),
        dominant_p2=dominant_action(game, 2),
        best_response_cycle=best_response_cycle(game),
    )


def ordinal_from_payoffs(game: PayoffGame) -> OrdinalGame:
    """Rank a payoff game's cells per player; ties are an error."""
    ranks = []
    for player in (1, 2):
        values = [cell_value(game, player, r, c) for r, c in CELLS]
        if len(set(values)) != 4:
            raise GameValidationError(f"player {player} payoffs tie; no strict ranking exists")
        order = sorted(values)
        ranks.append(tuple(order.index(v) + 1 for v in values))
    return OrdinalGame(ranks_p1=ranks[0], ranks_p2=ranks[1])


def load_game_json(path: str | Path) -> PayoffGame:
    with open(path, "r", encoding="utf-8") as fh:
        return PayoffGame.from_json_dict(json.load(fh))


def dump_game_json(game: PayoffGame, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(game.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def default_prisoners_dilemma() -> PayoffGame:
    """The stock social-dilemma matrix used by the command line and tests.

    Option F is the selfish choice, option J the cooperative one.
    """
    return PayoffGame.from_cells(
        {
            (0, 0): (5, 5),
            (0, 1): (10, 0),
            (1, 0): (0, 10),
            (1, 1): (8, 8),
        },
        name="prisoners-dilemma",
    )


def default_battle_of_sexes() -> PayoffGame:
    """The stock coordination matrix with opposed favourites.

    Player 1 prefers joint F (10 vs 7), player 2 prefers joint J.
    Miscoordination pays nothing.
    """
    return PayoffGame.from_cells(
        {
            (0, 0): (10, 7),
            (0, 1): (0, 0),
            (1, 0): (0, 0),
            (1, 1): (7, 10),
        },
        name="battle-of-sexes",
    )


def ordinal_prisoners_dilemma() -> OrdinalGame:
    """Rank form of the social dilemma: row/col 0 is the selfish action."""
    return OrdinalGame(ranks_p1=(2, 4, 1, 3), ranks_p2=(2, 1, 4, 3))


def ordinal_battle_of_sexes() -> OrdinalGame:
    """Rank form of the opposed-favourites coordination game."""
    return OrdinalGame(ranks_p1=(4, 2, 1, 3), ranks_p2=(3, 1, 2, 4))


def payoff_sweep(base: PayoffGame, steps: int) -> list[PayoffGame]:
    """Interpolate a two-equilibrium game toward its mirrored version.

    ``base`` must have exactly two pure equilibria on a diagonal, with the
    players preferring different ones.  The sweep linearly trades payoff
    between the two coordination cells, one game per step, so the first
    game is ``base`` and the last is ``base`` with the equilibrium payoffs
    exchanged.  All other cells are untouched.  Intermediate payoffs are
    rounded to integers.
    """
    if steps < 2:
        raise GameValidationError("payoff_sweep needs at least 2 steps")
    eqs = sorted(pure_nash(base))
    if len(eqs) != 2:
        raise GameValidationError(f"base game must have exactly two pure equilibria, found {len(eqs)}")
    a, b = eqs
    if a[0] == b[0] or a[1] == b[1]:
        raise GameValidationError("the two equilibria must sit on a diagonal")
    a1, a2 = base.cell_payoffs(a)
    b1, b2 = base.cell_payoffs(b)
    if a1 == b1 or a2 == b2:
        raise GameValidationError("each player must strictly prefer one equilibrium")
    if (a1 > b1) == (a2 > b2):
        raise GameValidationError("players must prefer different equilibria")

    games = []
    for i in range(steps):
        t = i / (steps - 1)
        cells = {cell: base.cell_payoffs(cell) for cell in CELLS}
        cells[a] = (round(a1 + t * (b1 - a1)), round(a2 + t * (b2 - a2)))
        cells[b] = (round(b1 + t * (a1 - b1)), round(b2 + t * (a2 - b2)))
        name = f"{base.name or 'sweep'}-{i:02d}"
        games.append(
            PayoffGame.from_cells(cells, base.actions_p1, base.actions_p2, name=name)
        )
    return games
