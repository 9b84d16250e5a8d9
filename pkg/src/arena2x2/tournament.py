"""Crossing agents, games and prompt conditions into tournaments.

A grid is the cartesian product of ordered agent pairs, games, prompt
variants, interventions, prediction modes and repetitions.  Expansion is
deterministic, execution is embarrassingly parallel with per-match
isolation, and a run directory doubles as a resume checkpoint: finished
transcripts are picked up instead of replayed.
"""

from __future__ import annotations

import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import sqrt
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .agents import AgentKind, AgentSpec, Seat
from .errors import ConfigurationError, GameValidationError, GridError
from .games import PayoffGame, ordinal_from_payoffs
from .match import MatchConfig, Transcript, match_metrics, play_match
from .prompting import BASE_VARIANT, Intervention, PredictionMode, PromptVariant
from .providers import ProviderRegistry, ResponseCache
from .taxonomy import GameFamily, NAMED_FAMILIES, classify, enumerate_games, games_in_families


@dataclass(frozen=True)
class GameSelection:
    """Which games a grid runs on.

    ``explicit`` carries concrete payoff games as given.  ``enumerated``
    draws from the canonical strict-ordinal enumeration, rank-as-points,
    filtered to the named families (the catch-all bucket joins only when
    ``include_other`` is set).
    """

    kind: str = "enumerated"
    explicit: tuple[PayoffGame, ...] = ()
    families: tuple[GameFamily, ...] = NAMED_FAMILIES
    include_other: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("explicit", "enumerated"):
            raise GridError(f"unknown game selection kind {self.kind!r}")
        if self.kind == "explicit" and not self.explicit:
            raise GridError("explicit game selection needs at least one game")

    def resolve(self) -> list[PayoffGame]:
        if self.kind == "explicit":
            return list(self.explicit)
        chosen = games_in_families(self.families, self.include_other)
        by_tuple = {g.as_tuple(): i for i, g in enumerate(enumerate_games())}
        out = []
        for game in chosen:
            idx = by_tuple[game.as_tuple()]
            family = classify(game).value
            out.append(game.to_payoff_game(name=f"g{idx:03d}-{family}"))
        return out


@dataclass(frozen=True)
class GridSpec:
    """Declarative description of a whole tournament."""

    agents: tuple[AgentSpec, ...]
    games: GameSelection = GameSelection()
    rounds: int = 10
    self_play: bool = True
    variants: tuple[PromptVariant, ...] = (BASE_VARIANT,)
    interventions: tuple[Intervention | None, ...] = (None,)
    prediction_modes: tuple[PredictionMode, ...] = (PredictionMode.NONE,)
    repetitions: int = 1
    seed: int = 0
    template_id: str = "v1"

    def __post_init__(self) -> None:
        if not self.agents:
            raise GridError("a grid needs at least one agent")
        if len({a.name for a in self.agents}) != len(self.agents):
            raise GridError("agent names must be unique within a grid")
        if self.repetitions < 1:
            raise GridError("repetitions must be >= 1")
        if not self.variants or not self.interventions or not self.prediction_modes:
            raise GridError("variants, interventions and prediction_modes must be non-empty")
        for mode in self.prediction_modes:
            if mode is PredictionMode.PREDICT_AS_OBSERVER:
                raise GridError("predict_as_observer cannot be swept; it replays finished matches")


def expand_grid(
    spec: GridSpec,
    interventions_by_id: Mapping[str, Intervention] | None = None,
) -> list[MatchConfig]:
    """All match configs for a grid, in a fixed documented order.

    Loop nesting, outermost first: seat-1 agent, seat-2 agent, game,
    variant, intervention, prediction mode, repetition.  Swept
    interventions and prediction modes apply to LLM seats only (scripted
    agents read no prompts); an agent's own configured intervention takes
    precedence over the swept one.  Configs that would duplicate an
    earlier config's key (a sweep axis that touches no seat) are dropped.
    """
    registry = dict(interventions_by_id or {})

    def resolve_intervention(agent: AgentSpec, swept: Intervention | None) -> Intervention | None:
        if agent.kind is not AgentKind.LLM:
            return None
        if agent.intervention_id is not None:
            try:
                return registry[agent.intervention_id]
            except KeyError:
                raise ConfigurationError(
                    f"agent {agent.name!r} references unknown intervention "
                    f"{agent.intervention_id!r}"
                ) from None
        return swept

    games = spec.games.resolve()
    configs = []
    seen = set()
    for agent_p1 in spec.agents:
        for agent_p2 in spec.agents:
            if agent_p1.name == agent_p2.name and not spec.self_play:
                continue
            for game in games:
                for variant in spec.variants:
                    for intervention in spec.interventions:
                        for mode in spec.prediction_modes:
                            for rep in range(spec.repetitions):
                                config = MatchConfig(
                                    game=game,
                                    agent_p1=agent_p1,
                                    agent_p2=agent_p2,
                                    rounds=spec.rounds,
                                    variant=variant,
                                    intervention_p1=resolve_intervention(agent_p1, intervention),
                                    intervention_p2=resolve_intervention(agent_p2, intervention),
                                    prediction_p1=mode if agent_p1.kind is AgentKind.LLM else PredictionMode.NONE,
                                    prediction_p2=mode if agent_p2.kind is AgentKind.LLM else PredictionMode.NONE,
                                    seed=spec.seed,
                                    rep=rep,
                                    template_id=spec.template_id,
                                )
                                key = config.config_key()
                                if key not in seen:
                                    seen.add(key)
                                    configs.append(config)
    return configs


@dataclass
class GridResult:
    run_dir: Path
    transcripts: list[Transcript]
    executed: int
    resumed: int
    failures: list[tuple[str, str]]

    @property
    def valid_transcripts(self) -> list[Transcript]:
        return [t for t in self.transcripts if t.valid]

    @property
    def invalid_count(self) -> int:
        return sum(not t.valid for t in self.transcripts)


def run_grid(
    spec: GridSpec,
    run_dir: str | Path,
    registry: ProviderRegistry | None = None,
    cache: ResponseCache | None = None,
    offline: bool = False,
    max_workers: int = 8,
    resume: bool = True,
    interventions_by_id: Mapping[str, Intervention] | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> GridResult:
    """Execute every config, writing one transcript file per match.

    Matches run on a thread pool; each one is independent.  With
    ``resume`` (the default), transcripts already present in the run
    directory are loaded instead of replayed, so an interrupted run picks
    up where it stopped.  A match that cannot even start (bad provider,
    offline violation) becomes a failure entry; matches that start but
    break mid-way persist as invalid transcripts.  Either way the rest of
    the grid proceeds.
    """
    run_dir = Path(run_dir)
    transcripts_dir = run_dir / "transcripts"
    transcripts_dir.mkdir(parents=True, exist_ok=True)

    configs = expand_grid(spec, interventions_by_id)
    total = len(configs)
    done = 0
    transcripts: list[Transcript] = []
    failures: list[tuple[str, str]] = []
    executed = 0
    resumed = 0

    def run_one(config: MatchConfig) -> Transcript:
        transcript = play_match(config, registry=registry, cache=cache, offline=offline)
        path = transcripts_dir / f"{transcript.config_key()}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(transcript.to_json(), encoding="utf-8")
        tmp.replace(path)
        return transcript

    pending: list[MatchConfig] = []
    for config in configs:
        path = transcripts_dir / f"{config.config_key()}.json"
        if resume and path.exists():
            transcripts.append(Transcript.from_json(path.read_text(encoding="utf-8")))
            resumed += 1
            done += 1
            if progress:
                progress(done, total)
        else:
            pending.append(config)

    if pending:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = {pool.submit(run_one, c): c for c in pending}
            for future, config in futures.items():
                try:
                    transcripts.append(future.result())
                    executed += 1
                except Exception as exc:
                    failures.append((config.config_key(), f"{type(exc).__name__}: {exc}"))
                done += 1
                if progress:
                    progress(done, total)

    transcripts.sort(key=Transcript.config_key)
    failures.sort()
    return GridResult(
        run_dir=run_dir,
        transcripts=transcripts,
        executed=executed,
        resumed=resumed,
        failures=failures,
    )


def _family_label(game: PayoffGame) -> str:
    try:
        return classify(ordinal_from_payoffs(game)).value
    except GameValidationError:
        return "unclassified"


def _observation_fields(transcript: Transcript, seat: Seat) -> dict[str, str]:
    config = transcript.config
    return {
        "agent": config.agent(seat).name,
        "opponent": config.agent(seat.other).name,
        "game": config.game.name or "",
        "family": _family_label(config.game),
        "variant": config.seat_variant(seat).id,
        "seat": f"p{seat.value}",
        "intervention": (config.intervention(seat).kind.value if config.intervention(seat) else "none"),
        "prediction": config.prediction(seat).value,
    }


GROUPABLE_FIELDS = (
    "agent", "opponent", "game", "family", "variant", "seat", "intervention", "prediction",
)

LOW_N_THRESHOLD = 5


@dataclass(frozen=True)
class MetricsRow:
    """One aggregation cell: a key plus seat-level metric means.

    ``ci95`` is the normal-approximation half width 1.96 * s / sqrt(n)
    using the sample standard deviation; zero when n < 2.  ``low_n``
    flags cells too thin to trust the interval.
    """

    key: tuple[tuple[str, str], ...]
    n: int
    mean_normalized_score: float
    ci95_normalized_score: float
    mean_defection_rate: float | None
    mean_coordination_rate: float
    mean_preferred_option_rate: float | None
    mean_prediction_lock_round: float | None
    low_n: bool

    def key_dict(self) -> dict[str, str]:
        return dict(self.key)

    def to_json_dict(self) -> dict:
        doc = dict(self.key)
        doc.update(
            n=self.n,
            mean_normalized_score=self.mean_normalized_score,
            ci95_normalized_score=self.ci95_normalized_score,
            mean_defection_rate=self.mean_defection_rate,
            mean_coordination_rate=self.mean_coordination_rate,
            mean_preferred_option_rate=self.mean_preferred_option_rate,
            mean_prediction_lock_round=self.mean_prediction_lock_round,
            low_n=self.low_n,
        )
        return doc


def mean_and_ci95(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and 1.96 * stdev / sqrt(n); the half width is 0 for n < 2."""
    if not values:
        raise GridError("cannot aggregate an empty sample")
    mean = statistics.fmean(values)
    if len(values) < 2:
        return mean, 0.0
    return mean, 1.96 * statistics.stdev(values) / sqrt(len(values))


def _optional_mean(values: Sequence[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return statistics.fmean(present) if present else None


def aggregate(
    transcripts: Sequence[Transcript],
    group_by: tuple[str, ...] = ("agent",),
) -> list[MetricsRow]:
    """Roll seat-level observations up to aggregation cells.

    Every valid transcript contributes two observations, one per seat,
    tagged with that seat's agent, opponent, game, family, variant,
    intervention and prediction mode; invalid transcripts contribute
    nothing.  Rows come back sorted by key.
    """
    for fieldname in group_by:
        if fieldname not in GROUPABLE_FIELDS:
            raise GridError(
                f"cannot group by {fieldname!r}; known fields: {', '.join(GROUPABLE_FIELDS)}"
            )

    cells: dict[tuple[tuple[str, str], ...], list[dict]] = {}
    for transcript in transcripts:
        if not transcript.valid:
            continue
        metrics = match_metrics(transcript)
        for seat in (Seat.P1, Seat.P2):
            fields = _observation_fields(transcript, seat)
            key = tuple((f, fields[f]) for f in group_by)
            i = seat.index
            cells.setdefault(key, []).append(
                {
                    "score": metrics.normalized_score[i],
                    "defection": metrics.defection_rate[i],
                    "coordination": metrics.coordination_rate,
                    "preferred": metrics.preferred_option_rate[i],
                    "lock": metrics.prediction_lock_round[i],
                }
            )

    rows = []
    for key in sorted(cells):
        obs = cells[key]
        scores = [o["score"] for o in obs]
        mean, ci95 = mean_and_ci95(scores)
        locks = [float(o["lock"]) for o in obs if o["lock"] is not None]
        rows.append(
            MetricsRow(
                key=key,
                n=len(obs),
                mean_normalized_score=mean,
                ci95_normalized_score=ci95,
                mean_defection_rate=_optional_mean([o["defection"] for o in obs]),
                mean_coordination_rate=statistics.fmean(o["coordination"] for o in obs),
                mean_preferred_option_rate=_optional_mean([o["preferred"] for o in obs]),
                mean_prediction_lock_round=statistics.fmean(locks) if locks else None,
                low_n=len(obs) < LOW_N_THRESHOLD,
            )
        )
    return rows
