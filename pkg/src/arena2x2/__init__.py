"""Tournament engine for finitely repeated 2x2 games.

Enumerates and classifies the strict-ordinal 2x2 games, plays repeated
matches between scripted strategies and LLM-backed players over a
prompt-chained protocol, and aggregates tournament grids into normalized
performance reports.
"""

__version__ = "0.1.0"

from .agents import AgentKind, AgentSpec, History, Round, Seat, next_move, preferred_option
from .errors import ArenaError
from .games import (
    EquilibriumReport,
    OrdinalGame,
    PayoffGame,
    best_response_cycle,
    default_battle_of_sexes,
    default_prisoners_dilemma,
    dominant_action,
    equilibrium_report,
    ordinal_from_payoffs,
    payoff_sweep,
    pure_nash,
)
from .match import (
    MatchConfig,
    MatchMetrics,
    Transcript,
    match_metrics,
    normalized_score,
    observe_match,
    play_match,
)
from .prompting import (
    BASE_VARIANT,
    Intervention,
    PredictionMode,
    PromptVariant,
    parse_choice,
    render_round_prompt,
    render_rules,
    variant_space,
)
from .providers import (
    CompletionClient,
    CompletionRecord,
    MockProvider,
    OpenAiCompatProvider,
    PolicyMockProvider,
    ProviderParams,
    ProviderRegistry,
    ResponseCache,
    cache_key,
)
from .taxonomy import (
    GameFamily,
    canonicalize,
    classify,
    enumerate_games,
    family_census,
)
from .tournament import (
    GameSelection,
    GridSpec,
    MetricsRow,
    aggregate,
    expand_grid,
    run_grid,
)

__all__ = [
    "AgentKind",
    "AgentSpec",
    "ArenaError",
    "BASE_VARIANT",
    "CompletionClient",
    "CompletionRecord",
    "EquilibriumReport",
    "GameFamily",
    "GameSelection",
    "GridSpec",
    "History",
    "Intervention",
    "MatchConfig",
    "MatchMetrics",
    "MetricsRow",
    "MockProvider",
    "OpenAiCompatProvider",
    "OrdinalGame",
    "PayoffGame",
    "PolicyMockProvider",
    "PredictionMode",
    "PromptVariant",
    "ProviderParams",
    "ProviderRegistry",
    "ResponseCache",
    "Round",
    "Seat",
    "Transcript",
    "aggregate",
    "best_response_cycle",
    "cache_key",
    "canonicalize",
    "classify",
    "default_battle_of_sexes",
    "default_prisoners_dilemma",
    "dominant_action",
    "enumerate_games",
    "equilibrium_report",
    "expand_grid",
    "family_census",
    "match_metrics",
    "next_move",
    "normalized_score",
    "observe_match",
    "ordinal_from_payoffs",
    "parse_choice",
    "payoff_sweep",
    "play_match",
    "preferred_option",
    "pure_nash",
    "render_round_prompt",
    "render_rules",
    "run_grid",
    "variant_space",
]
