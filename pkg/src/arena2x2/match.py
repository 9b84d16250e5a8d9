"""Playing one repeated game between two agents.

A match is a fixed number of simultaneous rounds.  Each round, both seats
pick an action knowing only the rules and the shared history; LLM seats
get that knowledge as a fresh self-contained prompt every round.  The
transcript records actions, payoffs, predictions and every completion
consumed, and stays honest about failure: a seat that cannot move makes
the whole transcript invalid with the cause attached.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

from .agents import (
    AgentKind,
    AgentSpec,
    History,
    Round,
    Seat,
    preferred_option,
    scripted_move,
    seat_actions,
)
from .errors import (
    ArenaError,
    ConfigurationError,
    GameValidationError,
    InvalidTranscriptError,
    MoveError,
    PromptParseError,
    TieError,
)
from .games import PayoffGame
from .prompting import (
    BASE_VARIANT,
    Intervention,
    PredictionMode,
    PromptVariant,
    label_for_action,
    parse_choice,
    render_round_prompt,
    render_rules,
    render_rules_observer,
)
from .providers import CompletionClient, CompletionRecord, ProviderRegistry, ResponseCache

PARSE_RETRIES = 3


@dataclass(frozen=True)
class MatchConfig:
    """Everything needed to replay one match exactly."""

    game: PayoffGame
    agent_p1: AgentSpec
    agent_p2: AgentSpec
    rounds: int = 10
    variant: PromptVariant = BASE_VARIANT
    intervention_p1: Intervention | None = None
    intervention_p2: Intervention | None = None
    prediction_p1: PredictionMode = PredictionMode.NONE
    prediction_p2: PredictionMode = PredictionMode.NONE
    seed: int = 0
    rep: int = 0
    template_id: str = "v1"

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigurationError(f"a match needs at least one round, got {self.rounds}")
        for label, mode in (("p1", self.prediction_p1), ("p2", self.prediction_p2)):
            if mode is PredictionMode.PREDICT_AS_OBSERVER:
                raise ConfigurationError(
                    f"{label}: predict_as_observer is a replay framing, not a playable "
                    "seat mode; use observe_match on a finished transcript"
                )

    def agent(self, seat: Seat) -> AgentSpec:
        return self.agent_p1 if seat is Seat.P1 else self.agent_p2

    def intervention(self, seat: Seat) -> Intervention | None:
        return self.intervention_p1 if seat is Seat.P1 else self.intervention_p2

    def prediction(self, seat: Seat) -> PredictionMode:
        return self.prediction_p1 if seat is Seat.P1 else self.prediction_p2

    def seat_variant(self, seat: Seat) -> PromptVariant:
        override = self.agent(seat).variant_id
        return PromptVariant.from_id(override) if override else self.variant

    def to_json_dict(self) -> dict:
        return {
            "game": self.game.to_json_dict(),
            "agent_p1": self.agent_p1.to_json_dict(),
            "agent_p2": self.agent_p2.to_json_dict(),
            "rounds": self.rounds,
            "variant": self.variant.id,
            "intervention_p1": self.intervention_p1.to_json_dict() if self.intervention_p1 else None,
            "intervention_p2": self.intervention_p2.to_json_dict() if self.intervention_p2 else None,
            "prediction_p1": self.prediction_p1.value,
            "prediction_p2": self.prediction_p2.value,
            "seed": self.seed,
            "rep": self.rep,
            "template_id": self.template_id,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MatchConfig":
        return cls(
            game=PayoffGame.from_json_dict(doc["game"]),
            agent_p1=AgentSpec.from_json_dict(doc["agent_p1"]),
            agent_p2=AgentSpec.from_json_dict(doc["agent_p2"]),
            rounds=doc["rounds"],
            variant=PromptVariant.from_id(doc["variant"]),
            intervention_p1=Intervention.from_json_dict(doc["intervention_p1"]) if doc.get("intervention_p1") else None,
            intervention_p2=Intervention.from_json_dict(doc["intervention_p2"]) if doc.get("intervention_p2") else None,
            prediction_p1=PredictionMode(doc["prediction_p1"]),
            prediction_p2=PredictionMode(doc["prediction_p2"]),
            seed=doc["seed"],
            rep=doc["rep"],
            template_id=doc.get("template_id", "v1"),
        )

    def config_key(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RoundResult:
    round_no: int
    action_p1: int
    action_p2: int
    payoff_p1: int
    payoff_p2: int
    prediction_p1: int | None = None
    prediction_p2: int | None = None
    completion_ids_p1: tuple[str, ...] = ()
    completion_ids_p2: tuple[str, ...] = ()

    def action(self, seat: Seat) -> int:
        return self.action_p1 if seat is Seat.P1 else self.action_p2

    def payoff(self, seat: Seat) -> int:
        return self.payoff_p1 if seat is Seat.P1 else self.payoff_p2

    def prediction(self, seat: Seat) -> int | None:
        return self.prediction_p1 if seat is Seat.P1 else self.prediction_p2

    def to_json_dict(self) -> dict:
        return {
            "round": self.round_no,
            "action_p1": self.action_p1,
            "action_p2": self.action_p2,
            "payoff_p1": self.payoff_p1,
            "payoff_p2": self.payoff_p2,
            "prediction_p1": self.prediction_p1,
            "prediction_p2": self.prediction_p2,
            "completion_ids_p1": list(self.completion_ids_p1),
            "completion_ids_p2": list(self.completion_ids_p2),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RoundResult":
        return cls(
            round_no=doc["round"],
            action_p1=doc["action_p1"],
            action_p2=doc["action_p2"],
            payoff_p1=doc["payoff_p1"],
            payoff_p2=doc["payoff_p2"],
            prediction_p1=doc.get("prediction_p1"),
            prediction_p2=doc.get("prediction_p2"),
            completion_ids_p1=tuple(doc.get("completion_ids_p1", ())),
            completion_ids_p2=tuple(doc.get("completion_ids_p2", ())),
        )


@dataclass
class Transcript:
    """The full trace of one match."""

    config: MatchConfig
    rounds: list[RoundResult]
    total_p1: int
    total_p2: int
    valid: bool
    failure: str | None
    failed_round: int | None
    records: list[CompletionRecord] = field(default_factory=list)

    def total(self, seat: Seat) -> int:
        return self.total_p1 if seat is Seat.P1 else self.total_p2

    def history(self) -> list[Round]:
        return [
            Round(r.action_p1, r.action_p2, r.payoff_p1, r.payoff_p2)
            for r in self.rounds
        ]

    def config_key(self) -> str:
        return self.config.config_key()

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "config_key": self.config_key(),
            "rounds": [r.to_json_dict() for r in self.rounds],
            "total_p1": self.total_p1,
            "total_p2": self.total_p2,
            "valid": self.valid,
            "failure": self.failure,
            "failed_round": self.failed_round,
            "records": [r.to_json_dict() for r in self.records],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Transcript":
        return cls(
            config=MatchConfig.from_json_dict(doc["config"]),
            rounds=[RoundResult.from_json_dict(r) for r in doc["rounds"]],
            total_p1=doc["total_p1"],
            total_p2=doc["total_p2"],
            valid=doc["valid"],
            failure=doc.get("failure"),
            failed_round=doc.get("failed_round"),
            records=[CompletionRecord.from_json_dict(r) for r in doc.get("records", [])],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        return cls.from_json_dict(json.loads(text))


class _LlmSeatSession:
    """Prompt-chained decision loop for one LLM seat in one match."""

    def __init__(
        self,
        config: MatchConfig,
        seat: Seat,
        client: CompletionClient,
    ):
        self.config = config
        self.seat = seat
        self.client = client
        self.variant = config.seat_variant(seat)
        self.mode = config.prediction(seat)
        self.intervention = config.intervention(seat)
        self.rules = render_rules(config.game, seat, self.variant, config.template_id)

    def _prompt(self, history: History, mode: PredictionMode, prediction: str | None = None) -> str:
        return render_round_prompt(
            self.rules,
            self.seat,
            history,
            self.intervention,
            mode,
            self.variant,
            total_rounds=self.config.rounds,
            prediction=prediction,
            template_id=self.config.template_id,
        )

    def _ask(self, prompt: str) -> tuple[int, list[str]]:
        return complete_and_parse(self.client, prompt, self.variant)

    def move(self, history: History) -> tuple[int, int | None, list[str]]:
        """Returns (action, prediction, completion record ids) for one round."""
        ids: list[str] = []
        prediction: int | None = None
        if self.mode is PredictionMode.PREDICT_AS_PLAYER:
            prediction, used = self._ask(self._prompt(history, self.mode))
            ids.extend(used)
            action, used = self._ask(self._prompt(history, PredictionMode.NONE))
            ids.extend(used)
        elif self.mode is PredictionMode.PREDICT_THEN_ACT:
            prediction, used = self._ask(self._prompt(history, self.mode))
            ids.extend(used)
            echo = label_for_action(prediction, self.variant)
            action, used = self._ask(self._prompt(history, self.mode, prediction=echo))
            ids.extend(used)
        else:
            action, used = self._ask(self._prompt(history, PredictionMode.NONE))
            ids.extend(used)
        return action, prediction, ids


def complete_and_parse(
    client: CompletionClient,
    prompt: str,
    variant: PromptVariant,
    parse_retries: int = PARSE_RETRIES,
) -> tuple[int, list[str]]:
    """One completion plus up to ``parse_retries`` cache-bypassing retries
    when the text does not name an option.  Returns the parsed action and
    the ids of every record consumed along the way."""
    ids = []
    last_error: PromptParseError | None = None
    for attempt in range(1 + parse_retries):
        record = client.complete(prompt, skip_cache=attempt > 0)
        ids.append(record.record_id)
        try:
            return parse_choice(record.completion, variant), ids
        except PromptParseError as exc:
            last_error = exc
    raise MoveError(
        f"unparseable completion after {1 + parse_retries} attempts: {last_error}",
        raw=last_error.raw if last_error else None,
    )


def play_match(
    config: MatchConfig,
    registry: ProviderRegistry | None = None,
    cache: ResponseCache | None = None,
    offline: bool = False,
    query_order: tuple[Seat, Seat] = (Seat.P1, Seat.P2),
) -> Transcript:
    """Run one match to completion or first failure.

    Both seats observe the identical pre-round history, so the order the
    two seats are queried in (``query_order``) can never leak one seat's
    current move to the other.  A seat failure (unparseable completions,
    provider breakdown, an undecidable scripted preference) truncates the
    match at that round and marks the transcript invalid with the cause.
    """
    if set(query_order) != {Seat.P1, Seat.P2}:
        raise ConfigurationError("query_order must mention each seat exactly once")

    sessions: dict[Seat, _LlmSeatSession] = {}
    for seat in (Seat.P1, Seat.P2):
        spec = config.agent(seat)
        if spec.kind is AgentKind.LLM:
            if registry is None:
                raise ConfigurationError(f"agent {spec.name!r} needs a provider registry")
            client = registry.client(
                spec.provider,
                cache=cache,
                sink=[],
                id_prefix=f"p{seat.value}.",
                offline=offline,
            )
            sessions[seat] = _LlmSeatSession(config, seat, client)

    game = config.game
    history: list[Round] = []
    results: list[RoundResult] = []
    records: list[CompletionRecord] = []
    valid, failure, failed_round = True, None, None
    merged = {Seat.P1: 0, Seat.P2: 0}

    def merge_round_records() -> None:
        # Deterministic order regardless of query_order, and nothing is
        # lost when a seat fails mid-round: whatever its client consumed
        # is still accounted for.
        for seat in (Seat.P1, Seat.P2):
            session = sessions.get(seat)
            if session is None:
                continue
            sink = session.client.sink
            records.extend(sink[merged[seat]:])
            merged[seat] = len(sink)

    for round_no in range(1, config.rounds + 1):
        actions: dict[Seat, int] = {}
        predictions: dict[Seat, int | None] = {Seat.P1: None, Seat.P2: None}
        ids: dict[Seat, tuple[str, ...]] = {Seat.P1: (), Seat.P2: ()}
        try:
            for seat in query_order:
                session = sessions.get(seat)
                if session is None:
                    actions[seat] = scripted_move(config.agent(seat), seat, game, history)
                else:
                    action, prediction, used = session.move(history)
                    actions[seat] = action
                    predictions[seat] = prediction
                    ids[seat] = tuple(used)
        except ArenaError as exc:
            valid = False
            failure = f"{type(exc).__name__}: {exc}"
            failed_round = round_no
            merge_round_records()
            break

        row, col = actions[Seat.P1], actions[Seat.P2]
        payoff_p1, payoff_p2 = game.payoff(1, row, col), game.payoff(2, row, col)
        history.append(Round(row, col, payoff_p1, payoff_p2))
        results.append(
            RoundResult(
                round_no=round_no,
                action_p1=row,
                action_p2=col,
                payoff_p1=payoff_p1,
                payoff_p2=payoff_p2,
                prediction_p1=predictions[Seat.P1],
                prediction_p2=predictions[Seat.P2],
                completion_ids_p1=ids[Seat.P1],
                completion_ids_p2=ids[Seat.P2],
            )
        )
        merge_round_records()

    return Transcript(
        config=config,
        rounds=results,
        total_p1=sum(r.payoff_p1 for r in results),
        total_p2=sum(r.payoff_p2 for r in results),
        valid=valid,
        failure=failure,
        failed_round=failed_round,
        records=records,
    )


def normalized_score(transcript: Transcript, seat: Seat) -> float:
    """Fraction of the per-round maximum the seat actually earned.

    The denominator is rounds times the seat's largest matrix entry, so a
    score of 1.0 means hitting the personal best every single round.
    """
    if not transcript.valid:
        raise InvalidTranscriptError(
            f"cannot score an invalid transcript ({transcript.failure})"
        )
    best = transcript.config.game.max_payoff(seat.value)
    if best <= 0:
        raise GameValidationError(f"seat {seat.name} has no positive payoff to normalize by")
    return transcript.total(seat) / (transcript.config.rounds * best)


def prediction_lock_round(transcript: Transcript, seat: Seat) -> int | None:
    """First round from which the seat's predictions stay correct.

    A prediction is correct when it matches the opponent's realized action
    in the same round.  Returns None when the seat made no predictions or
    its final prediction was wrong.
    """
    if not transcript.rounds:
        return None
    checks = []
    for rnd in transcript.rounds:
        pred = rnd.prediction(seat)
        if pred is None:
            return None
        checks.append(pred == rnd.action(seat.other))
    lock = None
    for round_no, correct in zip(range(1, len(checks) + 1), checks):
        if correct:
            if lock is None:
                lock = round_no
        else:
            lock = None
    return lock


@dataclass(frozen=True)
class MatchMetrics:
    """Per-match behavioral summary, seat-indexed tuples ordered (p1, p2)."""

    config_key: str
    rounds_played: int
    normalized_score: tuple[float, float]
    defection_rate: tuple[float | None, float | None]
    coordination_rate: float
    preferred_option_rate: tuple[float | None, float | None]
    prediction_lock_round: tuple[int | None, int | None]

    def to_json_dict(self) -> dict:
        return {
            "config_key": self.config_key,
            "rounds_played": self.rounds_played,
            "normalized_score": list(self.normalized_score),
            "defection_rate": list(self.defection_rate),
            "coordination_rate": self.coordination_rate,
            "preferred_option_rate": list(self.preferred_option_rate),
            "prediction_lock_round": list(self.prediction_lock_round),
        }


def match_metrics(transcript: Transcript) -> MatchMetrics:
    """Behavioral metrics for one valid transcript.

    Defection rate is the rate of choosing the option labeled "F" and is
    None for seats whose game has no such label.  Preferred-option rate is
    None when the seat has no unique preferred option.  Coordination rate
    counts rounds where both seats picked the same action index.
    """
    if not transcript.valid:
        raise InvalidTranscriptError(
            f"metrics need a valid transcript ({transcript.failure})"
        )
    game = transcript.config.game
    n = len(transcript.rounds)

    defection = []
    preferred = []
    locks = []
    for seat in (Seat.P1, Seat.P2):
        actions = [r.action(seat) for r in transcript.rounds]
        labels = seat_actions(game, seat)
        if "F" in labels:
            target = labels.index("F")
            defection.append(sum(a == target for a in actions) / n)
        else:
            defection.append(None)
        try:
            target = preferred_option(game, seat)
            preferred.append(sum(a == target for a in actions) / n)
        except TieError:
            preferred.append(None)
        locks.append(prediction_lock_round(transcript, seat))

    return MatchMetrics(
        config_key=transcript.config_key(),
        rounds_played=n,
        normalized_score=(
            normalized_score(transcript, Seat.P1),
            normalized_score(transcript, Seat.P2),
        ),
        defection_rate=(defection[0], defection[1]),
        coordination_rate=sum(r.action_p1 == r.action_p2 for r in transcript.rounds) / n,
        preferred_option_rate=(preferred[0], preferred[1]),
        prediction_lock_round=(locks[0], locks[1]),
    )


@dataclass
class ObserverReport:
    """Round-by-round third-party predictions replayed over a transcript."""

    target: Seat
    predictions: list[int]
    records: list[CompletionRecord]
    lock_round: int | None

    def to_json_dict(self) -> dict:
        return {
            "target": self.target.value,
            "predictions": self.predictions,
            "lock_round": self.lock_round,
            "records": [r.to_json_dict() for r in self.records],
        }


def observe_match(
    transcript: Transcript,
    target: Seat,
    provider_id: str,
    registry: ProviderRegistry,
    cache: ResponseCache | None = None,
    offline: bool = False,
    variant: PromptVariant | None = None,
) -> ObserverReport:
    """Ask a model to predict one seat's moves as an outside observer.

    The observer sees third-person rules and the history up to each round,
    never its own earlier predictions, and the replay cannot perturb the
    original match because that match is already over.
    """
    config = transcript.config
    variant = variant or config.variant
    sink: list[CompletionRecord] = []
    client = registry.client(
        provider_id,
        cache=cache,
        sink=sink,
        id_prefix=f"obs{target.value}.",
        offline=offline,
    )
    rules = render_rules_observer(config.game, variant, config.template_id)
    history: list[Round] = []
    predictions: list[int] = []
    realized = [r.action(target) for r in transcript.rounds]
    for rnd in transcript.rounds:
        prompt = render_round_prompt(
            rules,
            target,
            history,
            None,
            PredictionMode.PREDICT_AS_OBSERVER,
            variant,
            total_rounds=config.rounds,
            template_id=config.template_id,
        )
        prediction, _ = complete_and_parse(client, prompt, variant)
        predictions.append(prediction)
        history.append(Round(rnd.action_p1, rnd.action_p2, rnd.payoff_p1, rnd.payoff_p2))

    lock = None
    for round_no, (pred, real) in enumerate(zip(predictions, realized), start=1):
        if pred == real:
            if lock is None:
                lock = round_no
        else:
            lock = None
    return ObserverReport(target=target, predictions=predictions, records=sink, lock_round=lock)
