"""Player specifications and scripted decision rules.

An ``AgentSpec`` is a declarative description of a player.  Scripted kinds
are pure functions of the game and history; the LLM kind delegates each
round to a prompting session owned by the match engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Protocol, Sequence

from .errors import ConfigurationError, GameValidationError, TieError
from .games import CELLS, Cell, Game, PayoffGame, cell_value, pure_nash


class Seat(IntEnum):
    """Which side of the table an agent occupies."""

    P1 = 1
    P2 = 2

    @property
    def other(self) -> "Seat":
        return Seat.P2 if self is Seat.P1 else Seat.P1

    @property
    def index(self) -> int:
        return self.value - 1


@dataclass(frozen=True)
class Round:
    """One completed round: both actions (as indices) and both payoffs."""

    action_p1: int
    action_p2: int
    payoff_p1: int
    payoff_p2: int

    def action(self, seat: Seat) -> int:
        return self.action_p1 if seat is Seat.P1 else self.action_p2

    def payoff(self, seat: Seat) -> int:
        return self.payoff_p1 if seat is Seat.P1 else self.payoff_p2


History = Sequence[Round]


class AgentKind(str, Enum):
    CONSTANT = "constant"
    DEFECT_THEN_COOPERATE = "defect_then_cooperate"
    ALTERNATOR = "alternator"
    LLM = "llm"


SCRIPTED_KINDS = frozenset(
    {AgentKind.CONSTANT, AgentKind.DEFECT_THEN_COOPERATE, AgentKind.ALTERNATOR}
)


@dataclass(frozen=True)
class AgentSpec:
    """Declarative player description.

    ``action`` is only meaningful for CONSTANT (the fixed action index).
    ``provider`` must name a registered completion provider for LLM agents
    and must be absent for scripted ones.  ``intervention_id`` optionally
    names a configured rules addendum applied when this agent plays.
    """

    kind: AgentKind
    name: str = ""
    action: int | None = None
    provider: str | None = None
    variant_id: str | None = None
    intervention_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind is AgentKind.CONSTANT:
            if self.action not in (0, 1):
                raise ConfigurationError(f"constant agent needs action 0 or 1, got {self.action!r}")
        elif self.action is not None:
            raise ConfigurationError(f"{self.kind.value} agent does not take an action index")
        if self.kind is AgentKind.LLM:
            if not self.provider:
                raise ConfigurationError("llm agent needs a provider id")
        elif self.provider is not None:
            raise ConfigurationError(f"{self.kind.value} agent must not name a provider")
        if not self.name:
            object.__setattr__(self, "name", self._default_name())

    def _default_name(self) -> str:
        if self.kind is AgentKind.CONSTANT:
            return f"constant-{self.action}"
        if self.kind is AgentKind.LLM:
            return str(self.provider)
        return self.kind.value.replace("_", "-")

    @property
    def scripted(self) -> bool:
        return self.kind in SCRIPTED_KINDS

    @classmethod
    def constant(cls, action: int, name: str = "") -> "AgentSpec":
        return cls(kind=AgentKind.CONSTANT, action=action, name=name)

    @classmethod
    def defect_then_cooperate(cls, name: str = "") -> "AgentSpec":
        return cls(kind=AgentKind.DEFECT_THEN_COOPERATE, name=name)

    @classmethod
    def alternator(cls, name: str = "") -> "AgentSpec":
        return cls(kind=AgentKind.ALTERNATOR, name=name)

    @classmethod
    def llm(
        cls,
        provider: str,
        variant_id: str | None = None,
        intervention_id: str | None = None,
        name: str = "",
    ) -> "AgentSpec":
        return cls(
            kind=AgentKind.LLM,
            provider=provider,
            variant_id=variant_id,
            intervention_id=intervention_id,
            name=name,
        )

    def to_json_dict(self) -> dict:
        doc: dict = {"kind": self.kind.value, "name": self.name}
        if self.action is not None:
            doc["action"] = self.action
        if self.provider is not None:
            doc["provider"] = self.provider
        if self.variant_id is not None:
            doc["variant_id"] = self.variant_id
        if self.intervention_id is not None:
            doc["intervention_id"] = self.intervention_id
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "AgentSpec":
        return cls(
            kind=AgentKind(doc["kind"]),
            name=doc.get("name", ""),
            action=doc.get("action"),
            provider=doc.get("provider"),
            variant_id=doc.get("variant_id"),
            intervention_id=doc.get("intervention_id"),
        )


def seat_actions(game: PayoffGame, seat: Seat) -> tuple[str, str]:
    return game.actions_p1 if seat is Seat.P1 else game.actions_p2


def defect_action(game: PayoffGame, seat: Seat) -> int:
    """Index of the seat's selfish option.

    By convention the label "F" marks the selfish choice; games without
    that label fall back to action 0.
    """
    actions = seat_actions(game, seat)
    if "F" in actions:
        return actions.index("F")
    return 0


def preferred_option(game: Game, seat: Seat) -> int:
    """The seat's preferred action.

    In a coordination-shaped game (exactly two pure equilibria) the
    preference is over the equilibrium cells; otherwise it is over all
    four cells.  A payoff tie between candidate cells raises TieError
    rather than guessing.
    """
    player = seat.value
    nash = pure_nash(game)
    candidates: Sequence[Cell] = sorted(nash) if len(nash) == 2 else CELLS
    best = max(candidates, key=lambda cell: cell_value(game, player, *cell))
    best_value = cell_value(game, player, *best)
    ties = [c for c in candidates if cell_value(game, player, *c) == best_value]
    if len(ties) > 1:
        raise TieError(f"seat {seat.name} has no unique preferred cell among {sorted(ties)}")
    return best[0] if seat is Seat.P1 else best[1]


def scripted_move(spec: AgentSpec, seat: Seat, game: PayoffGame, history: History) -> int:
    """Next action index for a scripted agent.  Pure."""
    if spec.kind is AgentKind.CONSTANT:
        return int(spec.action)  # validated 0 or 1
    if spec.kind is AgentKind.DEFECT_THEN_COOPERATE:
        mine = defect_action(game, seat)
        return mine if not history else 1 - mine
    if spec.kind is AgentKind.ALTERNATOR:
        # Starts on the option the opponent likes best, then flips each round.
        start = preferred_option(game, seat.other)
        return start if len(history) % 2 == 0 else 1 - start
    raise ConfigurationError(f"{spec.kind.value} is not a scripted agent kind")


class LlmSession(Protocol):
    """Round-by-round decision source for an LLM-backed seat."""

    def choose(self, spec: AgentSpec, seat: Seat, game: PayoffGame, history: History) -> int: ...


def next_move(
    spec: AgentSpec,
    seat: Seat,
    game: PayoffGame,
    history: History,
    llm_session: LlmSession | None = None,
) -> int:
    """Next action for any agent kind.

    Scripted kinds compute locally; the LLM kind requires a session that
    carries the prompting and provider machinery.
    """
    if spec.scripted:
        return scripted_move(spec, seat, game, history)
    if llm_session is None:
        raise ConfigurationError("llm agent needs an active session")
    return llm_session.choose(spec, seat, game, history)
