"""Enumeration and classification of strict-ordinal 2x2 games.

There are 24 x 24 = 576 ways to assign strict rank permutations to the two
players.  Games that differ only by relabeling a player's two actions are
strategically identical, so we quotient by the four relabelings generated
by swapping rows and swapping columns (players themselves are not swapped:
a game and its transpose count separately).  Every orbit under that group
has exactly four members, leaving 576 / 4 = 144 distinct games, the usual
count for the strict-ordinal 2x2 topology (Robinson & Goforth, 2005).

Each game lands in exactly one family, decided by the first matching rule:

1. ``WIN_WIN``: some cell is ranked (4, 4); both players can top out at once.
2. ``PRISONERS_DILEMMA``: some pure equilibrium is Pareto-dominated by
   another cell, i.e. rational play locks in a jointly bad outcome.
3. ``BIASED``: some pure equilibrium is ranked (4, 3) or (3, 4); good for
   both but clearly better for one.
4. ``UNFAIR``: some pure equilibrium is ranked (4, 2) or (2, 4); one player
   thrives, the other gets the second-worst outcome.
5. ``SECOND_BEST``: some pure equilibrium is ranked (3, 3).
6. ``CYCLIC``: no pure equilibrium at all; best responses chase each other.
7. ``OTHER``: whatever remains (equilibria pairing a poor rank with a
   middling one, with no redeeming structure above).

The rule order matters: a (4, 3) equilibrium next to a (4, 2) one reads as
biased, not unfair, and a dominated equilibrium is a dilemma regardless of
its rank pattern.
"""

from __future__ import annotations

from enum import Enum
from functools import lru_cache
from itertools import permutations

from .games import CELLS, OrdinalGame, pareto_dominated_cells, pure_nash


class GameFamily(str, Enum):
    WIN_WIN = "WinWin"
    PRISONERS_DILEMMA = "PrisonersDilemma"
    UNFAIR = "Unfair"
    CYCLIC = "Cyclic"
    BIASED = "Biased"
    SECOND_BEST = "SecondBest"
    OTHER = "Other"


NAMED_FAMILIES: tuple[GameFamily, ...] = (
    GameFamily.WIN_WIN,
    GameFamily.PRISONERS_DILEMMA,
    GameFamily.UNFAIR,
    GameFamily.CYCLIC,
    GameFamily.BIASED,
    GameFamily.SECOND_BEST,
)


def _swap_rows(ranks: tuple[int, ...]) -> tuple[int, ...]:
    return (ranks[2], ranks[3], ranks[0], ranks[1])


def _swap_cols(ranks: tuple[int, ...]) -> tuple[int, ...]:
    return (ranks[1], ranks[0], ranks[3], ranks[2])


def orbit(game: OrdinalGame) -> list[OrdinalGame]:
    """The four row/column relabelings of a game (including itself)."""
    out = []
    for rows in (False, True):
        for cols in (False, True):
            p1, p2 = game.ranks_p1, game.ranks_p2
            if rows:
                p1, p2 = _swap_rows(p1), _swap_rows(p2)
            if cols:
                p1, p2 = _swap_cols(p1), _swap_cols(p2)
            out.append(OrdinalGame(p1, p2))
    return out


def canonicalize(game: OrdinalGame) -> OrdinalGame:
    """The orbit member whose (ranks_p1, ranks_p2) tuple is smallest."""
    return min(orbit(game), key=OrdinalGame.as_tuple)


@lru_cache(maxsize=1)
def _enumerate_cached() -> tuple[OrdinalGame, ...]:
    perms = list(permutations((1, 2, 3, 4)))
    seen = set()
    games = []
    for p1 in perms:
        for p2 in perms:
            canon = canonicalize(OrdinalGame(p1, p2))
            key = canon.as_tuple()
            if key not in seen:
                seen.add(key)
                games.append(canon)
    games.sort(key=OrdinalGame.as_tuple)
    return tuple(games)


def enumerate_games() -> list[OrdinalGame]:
    """All 144 distinct strict-ordinal games, canonical and sorted."""
    return list(_enumerate_cached())


def classify(game: OrdinalGame) -> GameFamily:
    """Assign a game to its family.  Invariant under relabeling, so the
    input need not be canonical."""
    nash = pure_nash(game)
    nash_ranks = {game.cell_ranks(cell) for cell in nash}
    if any(game.cell_ranks(cell) == (4, 4) for cell in CELLS):
        return GameFamily.WIN_WIN
    dominated = pareto_dominated_cells(game)
    if any(cell in dominated for cell in nash):
        return GameFamily.PRISONERS_DILEMMA
    if nash_ranks & {(4, 3), (3, 4)}:
        return GameFamily.BIASED
    if nash_ranks & {(4, 2), (2, 4)}:
        return GameFamily.UNFAIR
    if (3, 3) in nash_ranks:
        return GameFamily.SECOND_BEST
    if not nash:
        return GameFamily.CYCLIC
    return GameFamily.OTHER


def family_census() -> dict[GameFamily, int]:
    """Family sizes over the full enumeration.  Deterministic."""
    census = {family: 0 for family in GameFamily}
    for game in enumerate_games():
        census[classify(game)] += 1
    return census


def games_in_families(
    families: tuple[GameFamily, ...] = NAMED_FAMILIES,
    include_other: bool = False,
) -> list[OrdinalGame]:
    """Enumerated games filtered to the given families, in canonical order."""
    wanted = set(families)
    if include_other:
        wanted.add(GameFamily.OTHER)
    return [g for g in enumerate_games() if classify(g) in wanted]
