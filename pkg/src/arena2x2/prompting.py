"""Prompt construction, robustness variants, and answer parsing.

Every query sent to a model is a single self-contained prompt assembled
from plain-text templates: the rules of the game, an optional rules
addendum (intervention), the full history so far, and a one-line query
that asks for exactly one token.  Nothing else is carried between rounds;
the history section is the only memory.

A ``PromptVariant`` controls the surface form without touching the game:
which pair of labels names the two actions, the order in which the two
options are mentioned, and the payoff unit word.  Three label schemes,
two orders and three units give the 18-variant robustness space.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from itertools import product
from pathlib import Path

from .agents import History, Round, Seat
from .errors import ConfigurationError, PromptParseError
from .games import PayoffGame


class LabelScheme(str, Enum):
    LETTERS_FJ = "letters_FJ"
    LETTERS_OTHER = "letters_other"
    NUMERIC = "numeric"


class OptionOrder(str, Enum):
    GIVEN = "given"
    SWAPPED = "swapped"


class Unit(str, Enum):
    POINTS = "points"
    DOLLARS = "dollars"
    COINS = "coins"


SCHEME_LABELS: dict[LabelScheme, tuple[str, str]] = {
    LabelScheme.LETTERS_FJ: ("F", "J"),
    LabelScheme.LETTERS_OTHER: ("Q", "Z"),
    LabelScheme.NUMERIC: ("1", "2"),
}

# Unit words stay plural even for a payoff of 1, so rendered prompts are
# stable functions of the variant alone.
UNIT_WORDS: dict[Unit, str] = {
    Unit.POINTS: "points",
    Unit.DOLLARS: "dollars",
    Unit.COINS: "coins",
}


@dataclass(frozen=True)
class PromptVariant:
    """One point in the prompt robustness space.

    ``label_scheme`` picks the two tokens naming action 0 and action 1.
    ``option_order`` picks which option is mentioned first in running
    text; it never changes which label maps to which action.
    ``unit`` picks the payoff noun.
    """

    label_scheme: LabelScheme = LabelScheme.LETTERS_FJ
    option_order: OptionOrder = OptionOrder.GIVEN
    unit: Unit = Unit.POINTS

    @property
    def labels(self) -> tuple[str, str]:
        """Labels indexed by action: labels[0] names action 0."""
        return SCHEME_LABELS[self.label_scheme]

    @property
    def presented(self) -> tuple[int, int]:
        """Action indices in the order the text mentions them."""
        return (0, 1) if self.option_order is OptionOrder.GIVEN else (1, 0)

    @property
    def unit_word(self) -> str:
        return UNIT_WORDS[self.unit]

    @property
    def id(self) -> str:
        return f"{self.label_scheme.value}.{self.option_order.value}.{self.unit.value}"

    @classmethod
    def from_id(cls, variant_id: str) -> "PromptVariant":
        parts = variant_id.split(".")
        if len(parts) != 3:
            raise ConfigurationError(f"variant id must be scheme.order.unit, got {variant_id!r}")
        try:
            return cls(LabelScheme(parts[0]), OptionOrder(parts[1]), Unit(parts[2]))
        except ValueError as exc:
            raise ConfigurationError(f"unknown variant id {variant_id!r}: {exc}") from exc


BASE_VARIANT = PromptVariant()


def variant_space() -> list[PromptVariant]:
    """All 18 variants in a fixed order: scheme, then order, then unit."""
    return [
        PromptVariant(scheme, order, unit)
        for scheme, order, unit in product(LabelScheme, OptionOrder, Unit)
    ]


def label_for_action(action: int, variant: PromptVariant) -> str:
    return variant.labels[action]


def action_for_label(label: str, variant: PromptVariant) -> int:
    folded = label.casefold()
    for action, known in enumerate(variant.labels):
        if known.casefold() == folded:
            return action
    raise PromptParseError(f"label {label!r} is not one of {variant.labels}", raw=label)


class InterventionKind(str, Enum):
    FALLIBLE_OPPONENT = "fallible_opponent"
    EXPLICIT_SCHEDULE = "explicit_schedule"


@dataclass(frozen=True)
class Intervention:
    """A rules addendum injected after the rules, before the history.

    The fallible-opponent kind adds a stock warning that the other player
    can make mistakes.  The explicit-schedule kind adds caller-supplied
    text, e.g. announcing the opponent's round-by-round plan.
    """

    kind: InterventionKind
    text: str | None = None

    def __post_init__(self) -> None:
        if self.kind is InterventionKind.EXPLICIT_SCHEDULE and not self.text:
            raise ConfigurationError("explicit_schedule intervention needs text")
        if self.kind is InterventionKind.FALLIBLE_OPPONENT and self.text is not None:
            raise ConfigurationError("fallible_opponent intervention takes no text")

    @classmethod
    def fallible(cls) -> "Intervention":
        return cls(kind=InterventionKind.FALLIBLE_OPPONENT)

    @classmethod
    def schedule(cls, text: str) -> "Intervention":
        return cls(kind=InterventionKind.EXPLICIT_SCHEDULE, text=text)

    def rendered(self, template_id: str = "v1") -> str:
        if self.kind is InterventionKind.FALLIBLE_OPPONENT:
            return _template(template_id, "intervention_fallible")
        return str(self.text)

    def to_json_dict(self) -> dict:
        doc: dict = {"kind": self.kind.value}
        if self.text is not None:
            doc["text"] = self.text
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Intervention":
        return cls(kind=InterventionKind(doc["kind"]), text=doc.get("text"))


class PredictionMode(str, Enum):
    NONE = "none"
    PREDICT_AS_PLAYER = "predict_as_player"
    PREDICT_AS_OBSERVER = "predict_as_observer"
    PREDICT_THEN_ACT = "predict_then_act"


@lru_cache(maxsize=None)
def _template(template_id: str, name: str) -> str:
    base = resources.files(__package__) / "templates" / template_id
    candidate = base / f"{name}.txt"
    try:
        text = candidate.read_text(encoding="utf-8")
    except (FileNotFoundError, NotADirectoryError):
        raise ConfigurationError(
            f"template {name!r} not found for template set {template_id!r} "
            f"(available sets: {', '.join(available_template_ids())})"
        ) from None
    return text.rstrip("\n")


def available_template_ids() -> list[str]:
    base = resources.files(__package__) / "templates"
    return sorted(entry.name for entry in base.iterdir() if entry.is_dir())


@lru_cache(maxsize=None)
def _section_order(template_id: str) -> tuple[str, ...]:
    lines = [ln.strip() for ln in _template(template_id, "round").splitlines()]
    return tuple(ln.strip("{}") for ln in lines if ln)


def _seat_payoffs(game: PayoffGame, seat: Seat, own_action: int, other_action: int) -> tuple[int, int]:
    # Player 1 picks the row, player 2 the column.
    if seat is Seat.P1:
        row, col = own_action, other_action
    else:
        row, col = other_action, own_action
    own = game.payoff(seat.value, row, col)
    other = game.payoff(seat.other.value, row, col)
    return own, other


def render_rules(
    game: PayoffGame,
    seat: Seat,
    variant: PromptVariant = BASE_VARIANT,
    template_id: str = "v1",
) -> str:
    """The rules section from one seat's perspective.

    One intro sentence pair plus exactly four outcome clauses, enumerated
    in the variant's presentation order (own action varies slowest).
    """
    labels = variant.labels
    order = variant.presented
    lines = [
        _template(template_id, "rules_player_intro").format(
            opt_first=labels[order[0]], opt_second=labels[order[1]]
        )
    ]
    outcome = _template(template_id, "rules_player_outcome")
    for own_action in order:
        for other_action in order:
            own_pay, other_pay = _seat_payoffs(game, seat, own_action, other_action)
            lines.append(
                outcome.format(
                    own=labels[own_action],
                    other=labels[other_action],
                    own_payoff=own_pay,
                    other_payoff=other_pay,
                    unit=variant.unit_word,
                )
            )
    return "\n".join(lines)


def render_rules_observer(
    game: PayoffGame,
    variant: PromptVariant = BASE_VARIANT,
    template_id: str = "v1",
) -> str:
    """The rules section in third person, for prediction-only prompts."""
    labels = variant.labels
    order = variant.presented
    lines = [
        _template(template_id, "rules_observer_intro").format(
            opt_first=labels[order[0]], opt_second=labels[order[1]]
        )
    ]
    outcome = _template(template_id, "rules_observer_outcome")
    for p1_action in order:
        for p2_action in order:
            lines.append(
                outcome.format(
                    p1=labels[p1_action],
                    p2=labels[p2_action],
                    p1_payoff=game.payoff(1, p1_action, p2_action),
                    p2_payoff=game.payoff(2, p1_action, p2_action),
                    unit=variant.unit_word,
                )
            )
    return "\n".join(lines)


def render_history(
    history: History,
    seat: Seat,
    variant: PromptVariant = BASE_VARIANT,
    template_id: str = "v1",
) -> str:
    """The history section for one seat; empty string before round 1.

    Prompts grow monotonically: the section for k+1 rounds extends the
    k-round section without rewriting it.
    """
    if not history:
        return ""
    labels = variant.labels
    line = _template(template_id, "history_player_line")
    lines = [_template(template_id, "history_player_header")]
    for i, rnd in enumerate(history, start=1):
        lines.append(
            line.format(
                round=i,
                own=labels[rnd.action(seat)],
                own_payoff=rnd.payoff(seat),
                other=labels[rnd.action(seat.other)],
                other_payoff=rnd.payoff(seat.other),
                unit=variant.unit_word,
            )
        )
    return "\n".join(lines)


def render_history_observer(
    history: History,
    variant: PromptVariant = BASE_VARIANT,
    template_id: str = "v1",
) -> str:
    if not history:
        return ""
    labels = variant.labels
    line = _template(template_id, "history_observer_line")
    lines = [_template(template_id, "history_observer_header")]
    for i, rnd in enumerate(history, start=1):
        lines.append(
            line.format(
                round=i,
                p1=labels[rnd.action_p1],
                p1_payoff=rnd.payoff_p1,
                p2=labels[rnd.action_p2],
                p2_payoff=rnd.payoff_p2,
                unit=variant.unit_word,
            )
        )
    return "\n".join(lines)


def render_round_prompt(
    rules: str,
    seat: Seat,
    history: History,
    intervention: Intervention | None,
    mode: PredictionMode,
    variant: PromptVariant = BASE_VARIANT,
    *,
    total_rounds: int,
    prediction: str | None = None,
    template_id: str = "v1",
) -> str:
    """Assemble one complete prompt for the upcoming round.

    ``mode`` selects the query: NONE asks for an action,
    PREDICT_AS_PLAYER asks the seat to predict its opponent (the matching
    action prompt is a second call with mode NONE), PREDICT_THEN_ACT asks
    for a prediction when ``prediction`` is None and otherwise for an
    action with the model's own prediction echoed back, and
    PREDICT_AS_OBSERVER asks a bystander to predict ``seat`` (pass rules
    from ``render_rules_observer``).

    The round number is ``len(history) + 1``.
    """
    round_no = len(history) + 1
    labels = variant.labels
    order = variant.presented
    opt_first, opt_second = labels[order[0]], labels[order[1]]

    observer = mode is PredictionMode.PREDICT_AS_OBSERVER
    if observer:
        history_text = render_history_observer(history, variant, template_id)
    else:
        history_text = render_history(history, seat, variant, template_id)

    intervention_text = intervention.rendered(template_id) if intervention else ""

    echo = ""
    if mode is PredictionMode.NONE or (
        mode is PredictionMode.PREDICT_THEN_ACT and prediction is not None
    ):
        query_name = "query_action"
        if prediction is not None:
            echo = _template(template_id, "prediction_echo").format(prediction=prediction)
    elif mode in (PredictionMode.PREDICT_AS_PLAYER, PredictionMode.PREDICT_THEN_ACT):
        query_name = "query_predict_player"
    else:
        query_name = "query_predict_observer"

    query = _template(template_id, query_name).format(
        round=round_no,
        total=total_rounds,
        opt_first=opt_first,
        opt_second=opt_second,
        target=seat.value,
    )
    if echo:
        query = f"{echo}\n{query}"

    sections = {
        "rules": rules,
        "intervention": intervention_text,
        "history": history_text,
        "query": query,
    }
    ordered = [sections[name] for name in _section_order(template_id)]
    return "\n".join(part for part in ordered if part)


_STRIP_CHARS = string.whitespace + string.punctuation


def parse_choice(completion: str, variant: PromptVariant = BASE_VARIANT) -> int:
    """Map a one-token completion onto an action index.

    Surrounding whitespace and punctuation are ignored and matching is
    case-insensitive, but the token must equal exactly one label; empty
    or ambiguous text raises PromptParseError carrying the raw string.
    """
    token = completion.strip(_STRIP_CHARS)
    if not token:
        raise PromptParseError(f"empty completion {completion!r}", raw=completion)
    folded = token.casefold()
    for action, label in enumerate(variant.labels):
        if folded == label.casefold():
            return action
    raise PromptParseError(
        f"completion {completion!r} is not one of the options {variant.labels}",
        raw=completion,
    )


_EARN_RE = re.compile(r"earns? (\d+) ")


def rules_payoff_numbers(rules_text: str) -> tuple[int, ...]:
    """All payoff amounts mentioned in a rules section, in text order.

    Only numbers in earning positions count, so numeric option labels do
    not leak in.  Used to check that variants never alter the game.
    """
    return tuple(int(m.group(1)) for m in _EARN_RE.finditer(rules_text))


def _golden_history(game: PayoffGame) -> list[Round]:
    rounds = []
    for a1, a2 in ((0, 1), (1, 0), (1, 1)):
        rounds.append(
            Round(
                action_p1=a1,
                action_p2=a2,
                payoff_p1=game.payoff(1, a1, a2),
                payoff_p2=game.payoff(2, a1, a2),
            )
        )
    return rounds


def build_golden_corpus(template_id: str = "v1") -> dict[str, str]:
    """Deterministic set of rendered prompts used as byte-exact goldens.

    Covers every variant against two stock games with empty and non-empty
    histories, plus one example of each special prompt shape on the base
    variant: both intervention kinds, both prediction queries, the
    prediction echo, the observer framing, and the second seat.
    """
    from .games import default_battle_of_sexes, default_prisoners_dilemma

    games = {
        "pd": default_prisoners_dilemma(),
        "bos": default_battle_of_sexes(),
    }
    corpus: dict[str, str] = {}
    for game_key, game in games.items():
        histories = {"h0": [], "h3": _golden_history(game)}
        for variant in variant_space():
            rules = render_rules(game, Seat.P1, variant, template_id)
            for hist_key, history in histories.items():
                name = f"round.{game_key}.{variant.id}.{hist_key}.txt"
                corpus[name] = render_round_prompt(
                    rules,
                    Seat.P1,
                    history,
                    None,
                    PredictionMode.NONE,
                    variant,
                    total_rounds=10,
                    template_id=template_id,
                )

    pd = games["pd"]
    h3 = _golden_history(pd)
    base_rules = render_rules(pd, Seat.P1, BASE_VARIANT, template_id)
    p2_rules = render_rules(pd, Seat.P2, BASE_VARIANT, template_id)
    observer_rules = render_rules_observer(pd, BASE_VARIANT, template_id)
    schedule = Intervention.schedule(
        "The other player will start with option J and then alternate between option F and option J."
    )
    specials = {
        "round.pd.base.h3.seat2.txt": render_round_prompt(
            p2_rules, Seat.P2, h3, None, PredictionMode.NONE, total_rounds=10, template_id=template_id
        ),
        "intervention.fallible.pd.h0.txt": render_round_prompt(
            base_rules, Seat.P1, [], Intervention.fallible(), PredictionMode.NONE,
            total_rounds=10, template_id=template_id,
        ),
        "intervention.schedule.pd.h3.txt": render_round_prompt(
            base_rules, Seat.P1, h3, schedule, PredictionMode.NONE,
            total_rounds=10, template_id=template_id,
        ),
        "predict.player.pd.h3.txt": render_round_prompt(
            base_rules, Seat.P1, h3, None, PredictionMode.PREDICT_AS_PLAYER,
            total_rounds=10, template_id=template_id,
        ),
        "predict.then-act.predict.pd.h3.txt": render_round_prompt(
            base_rules, Seat.P1, h3, None, PredictionMode.PREDICT_THEN_ACT,
            total_rounds=10, template_id=template_id,
        ),
        "predict.then-act.act.pd.h3.txt": render_round_prompt(
            base_rules, Seat.P1, h3, None, PredictionMode.PREDICT_THEN_ACT,
            total_rounds=10, prediction="J", template_id=template_id,
        ),
        "predict.observer.pd.h3.txt": render_round_prompt(
            observer_rules, Seat.P2, h3, None, PredictionMode.PREDICT_AS_OBSERVER,
            total_rounds=10, template_id=template_id,
        ),
    }
    corpus.update(specials)
    return corpus


def _goldens_dir() -> Path:
    return Path(__file__).resolve().parent / "goldens" / "prompts"


def validate_prompt_goldens(update: bool = False, template_id: str = "v1") -> list[str]:
    """Compare freshly rendered prompts against the stored goldens.

    Returns a list of problem descriptions (empty means clean).  With
    ``update=True`` the stored files are rewritten instead; that only
    works from a source checkout.
    """
    corpus = build_golden_corpus(template_id)
    directory = _goldens_dir()
    if update:
        directory.mkdir(parents=True, exist_ok=True)
        for stale in directory.glob("*.txt"):
            if stale.name not in corpus:
                stale.unlink()
        for name, text in sorted(corpus.items()):
            (directory / name).write_text(text + "\n", encoding="utf-8")
        return []

    problems = []
    stored = {p.name for p in directory.glob("*.txt")}
    for name in sorted(corpus.keys() - stored):
        problems.append(f"missing golden: {name}")
    for name in sorted(stored - corpus.keys()):
        problems.append(f"stale golden: {name}")
    for name in sorted(corpus.keys() & stored):
        want = (directory / name).read_text(encoding="utf-8")
        if want != corpus[name] + "\n":
            problems.append(f"mismatch: {name}")
    return problems
