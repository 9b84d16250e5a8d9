"""Experiment configuration: a TOML file describing providers and a grid.

Values support ``${VAR}`` environment interpolation so credentials and
hosts stay out of checked-in files.  Relative paths resolve against the
config file's directory.

Layout::

    [run]
    out_dir = "runs/demo"
    offline = false
    workers = 8

    [cache]
    enabled = true
    dir = "cache"

    [providers.main]
    kind = "openai_compat"
    endpoint = "https://example.test/v1/chat/completions"
    model = "some-model"
    api_key_env = "ARENA_API_KEY"

    [providers.scripted]
    kind = "policy_mock"
    policy = "defect-then-cooperate"

    [interventions.fallible]
    kind = "fallible_opponent"

    [grid]
    agents = [{kind = "llm", provider = "main"}, "alternator", "constant:F"]
    games = "enumerated"
    rounds = 10
    variants = ["letters_FJ.given.points"]
    interventions = ["none", "fallible"]
    prediction_modes = ["none"]
"""

from __future__ import annotations

import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agents import AgentSpec
from .errors import ConfigurationError
from .games import (
    PayoffGame,
    default_battle_of_sexes,
    default_prisoners_dilemma,
    load_game_json,
)
from .prompting import (
    BASE_VARIANT,
    Intervention,
    InterventionKind,
    PredictionMode,
    PromptVariant,
    variant_space,
)
from .providers import (
    MockProvider,
    OpenAiCompatProvider,
    PolicyMockProvider,
    ProviderParams,
    ProviderRegistry,
)
from .taxonomy import GameFamily
from .tournament import GameSelection, GridSpec

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def interpolate_env(value: object) -> object:
    """Replace ``${VAR}`` in every string, recursively through containers."""
    if isinstance(value, str):
        def swap(match: re.Match) -> str:
            name = match.group(1)
            try:
                return os.environ[name]
            except KeyError:
                raise ConfigurationError(
                    f"config references undefined environment variable {name!r}"
                ) from None
        return _ENV_RE.sub(swap, value)
    if isinstance(value, dict):
        return {k: interpolate_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [interpolate_env(v) for v in value]
    return value


def parse_agent_string(text: str) -> AgentSpec:
    """Compact agent shorthand: ``constant:F``, ``constant:1``,
    ``defect-then-cooperate`` (or ``dtc``), ``alternator``,
    ``llm:<provider>``."""
    text = text.strip()
    if text in ("defect-then-cooperate", "dtc"):
        return AgentSpec.defect_then_cooperate()
    if text == "alternator":
        return AgentSpec.alternator()
    if text.startswith("constant:"):
        arg = text.split(":", 1)[1]
        mapping = {"0": 0, "1": 1, "F": 0, "J": 1}
        if arg not in mapping:
            raise ConfigurationError(f"constant agent wants 0/1 or F/J, got {arg!r}")
        return AgentSpec.constant(mapping[arg], name=f"constant-{arg}")
    if text.startswith("llm:"):
        provider = text.split(":", 1)[1]
        if not provider:
            raise ConfigurationError("llm agent shorthand needs a provider id")
        return AgentSpec.llm(provider)
    raise ConfigurationError(f"cannot parse agent {text!r}")


def _agent_from_entry(entry: object) -> AgentSpec:
    if isinstance(entry, str):
        return parse_agent_string(entry)
    if isinstance(entry, dict):
        return AgentSpec.from_json_dict(entry)
    raise ConfigurationError(f"agent entries are strings or tables, got {type(entry).__name__}")


def stock_game(name: str) -> PayoffGame | None:
    if name == "pd":
        return default_prisoners_dilemma()
    if name == "bos":
        return default_battle_of_sexes()
    return None


def resolve_game(name: str, base_dir: Path) -> PayoffGame:
    """A stock game name (``pd``, ``bos``) or a path to a game JSON file."""
    game = stock_game(name)
    if game is not None:
        return game
    path = Path(name)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigurationError(f"unknown game {name!r}: not a stock name and no file at {path}")
    return load_game_json(path)


def _parse_variants(entries: object) -> tuple[PromptVariant, ...]:
    if entries in (None, "base"):
        return (BASE_VARIANT,)
    if entries == "all":
        return tuple(variant_space())
    if not isinstance(entries, list):
        raise ConfigurationError("grid.variants must be 'all', 'base' or a list of variant ids")
    out = []
    for entry in entries:
        if entry == "all":
            out.extend(variant_space())
        elif entry == "base":
            out.append(BASE_VARIANT)
        else:
            out.append(PromptVariant.from_id(str(entry)))
    return tuple(out)


def _parse_interventions(doc: dict) -> dict[str, Intervention]:
    out = {}
    for name, body in doc.items():
        try:
            kind = InterventionKind(body["kind"])
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"intervention {name!r}: bad kind ({exc})") from exc
        out[name] = Intervention(kind=kind, text=body.get("text"))
    return out


def _parse_families(entries: object) -> tuple[GameFamily, ...]:
    if not isinstance(entries, list) or not entries:
        raise ConfigurationError("grid.families must be a non-empty list of family names")
    try:
        return tuple(GameFamily(e) for e in entries)
    except ValueError as exc:
        known = ", ".join(f.value for f in GameFamily)
        raise ConfigurationError(f"unknown family ({exc}); known: {known}") from exc


@dataclass
class ExperimentConfig:
    """Everything a tournament run needs, plus provider plumbing that the
    single-match command reuses."""

    base_dir: Path
    out_dir: Path
    offline: bool = False
    workers: int = 8
    cache_dir: Path | None = None
    provider_specs: dict[str, dict] = field(default_factory=dict)
    interventions: dict[str, Intervention] = field(default_factory=dict)
    grid: GridSpec | None = None
    group_by: tuple[str, ...] | None = None

    def build_registry(self, offline: bool | None = None) -> ProviderRegistry:
        """Construct every configured provider.  The offline flag only
        gates use, not construction, so mock-only runs never touch the
        network path at all."""
        del offline  # offline is enforced at client creation time
        registry = ProviderRegistry()
        for provider_id, body in sorted(self.provider_specs.items()):
            registry.register(*_build_provider(provider_id, body))
        return registry

    def default_group_by(self) -> tuple[str, ...]:
        if self.group_by:
            return self.group_by
        if self.grid is not None and self.grid.games.kind == "explicit":
            return ("agent", "game")
        return ("agent", "family")


def _build_provider(provider_id: str, body: dict):
    kind = body.get("kind")
    params = ProviderParams(
        model=str(body.get("model", "mock")),
        temperature=float(body.get("temperature", 0.0)),
        max_completion_tokens=int(body.get("max_completion_tokens", 1)),
    )
    if kind == "openai_compat":
        try:
            endpoint = body["endpoint"]
        except KeyError:
            raise ConfigurationError(f"provider {provider_id!r} needs an endpoint") from None
        if "model" not in body:
            raise ConfigurationError(f"provider {provider_id!r} needs a model")
        provider = OpenAiCompatProvider(
            provider_id,
            endpoint=endpoint,
            api_key_env=body.get("api_key_env", "ARENA_API_KEY"),
            timeout=float(body.get("timeout", 60.0)),
            requests_per_second=body.get("requests_per_second"),
        )
        return provider, params
    if kind == "mock":
        script = body.get("script")
        if not isinstance(script, list):
            raise ConfigurationError(f"provider {provider_id!r} needs a script list")
        return MockProvider(provider_id, [str(s) for s in script], cycle=bool(body.get("cycle", False))), params
    if kind == "policy_mock":
        policy = body.get("policy")
        if not isinstance(policy, str):
            raise ConfigurationError(f"provider {provider_id!r} needs a policy string")
        return PolicyMockProvider(provider_id, parse_agent_string(policy)), params
    raise ConfigurationError(
        f"provider {provider_id!r}: unknown kind {kind!r} "
        "(expected openai_compat, mock or policy_mock)"
    )


def _parse_grid(doc: dict, base_dir: Path, interventions: dict[str, Intervention]) -> GridSpec:
    agents = tuple(_agent_from_entry(e) for e in doc.get("agents", []))

    games_kind = doc.get("games", "enumerated")
    if games_kind == "enumerated":
        selection = GameSelection(
            kind="enumerated",
            families=_parse_families(doc["families"]) if "families" in doc else GameSelection().families,
            include_other=bool(doc.get("include_other", False)),
        )
    elif games_kind == "explicit":
        names = doc.get("explicit_games")
        if not isinstance(names, list) or not names:
            raise ConfigurationError("grid.explicit_games must list stock names or paths")
        selection = GameSelection(
            kind="explicit",
            explicit=tuple(resolve_game(str(n), base_dir) for n in names),
        )
    else:
        raise ConfigurationError(f"grid.games must be 'enumerated' or 'explicit', got {games_kind!r}")

    swept: list[Intervention | None] = []
    for entry in doc.get("interventions", ["none"]):
        if entry == "none":
            swept.append(None)
        elif entry in interventions:
            swept.append(interventions[entry])
        else:
            raise ConfigurationError(f"grid references unknown intervention {entry!r}")

    try:
        modes = tuple(PredictionMode(m) for m in doc.get("prediction_modes", ["none"]))
    except ValueError as exc:
        raise ConfigurationError(f"bad prediction mode: {exc}") from exc

    return GridSpec(
        agents=agents,
        games=selection,
        rounds=int(doc.get("rounds", 10)),
        self_play=bool(doc.get("self_play", True)),
        variants=_parse_variants(doc.get("variants")),
        interventions=tuple(swept),
        prediction_modes=modes,
        repetitions=int(doc.get("repetitions", 1)),
        seed=int(doc.get("seed", 0)),
        template_id=str(doc.get("template_id", "v1")),
    )


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid TOML: {exc}") from exc
    doc = interpolate_env(raw)
    base_dir = path.resolve().parent

    run = doc.get("run", {})
    out_dir = Path(run.get("out_dir", "runs/run"))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir

    cache = doc.get("cache", {})
    cache_dir: Path | None = None
    if cache.get("enabled", False):
        cache_dir = Path(cache.get("dir", "cache"))
        if not cache_dir.is_absolute():
            cache_dir = base_dir / cache_dir

    interventions = _parse_interventions(doc.get("interventions", {}))
    grid = None
    if "grid" in doc:
        grid = _parse_grid(doc["grid"], base_dir, interventions)

    group_by = None
    report = doc.get("report", {})
    if "group_by" in report:
        group_by = tuple(str(f) for f in report["group_by"])

    return ExperimentConfig(
        base_dir=base_dir,
        out_dir=out_dir,
        offline=bool(run.get("offline", False)),
        workers=int(run.get("workers", 8)),
        cache_dir=cache_dir,
        provider_specs=doc.get("providers", {}),
        interventions=interventions,
        grid=grid,
        group_by=group_by,
    )
