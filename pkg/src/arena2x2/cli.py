"""Command line entry points.

Subcommands::

    enumerate         census of the strict-ordinal games, optional JSONL dump
    classify          family and equilibrium report for one game
    play              one match, printed round by round
    tournament        run a configured grid into a run directory
    report            rebuild metrics and plot specs from stored transcripts
    validate-prompts  diff every rendered prompt variant against the goldens

Exit codes: 0 success, 1 the run finished but something is unhealthy
(invalid transcripts, failed configs, golden drift), 2 unusable input.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .agents import Seat
from .config import (
    ExperimentConfig,
    load_experiment_config,
    parse_agent_string,
    resolve_game,
)
from .errors import ArenaError, ConfigurationError
from .games import OrdinalGame, equilibrium_report, ordinal_from_payoffs
from .match import MatchConfig, Transcript, match_metrics, observe_match, play_match
from .prompting import (
    BASE_VARIANT,
    Intervention,
    PredictionMode,
    PromptVariant,
    label_for_action,
    variant_space,
    parse_choice,
    validate_prompt_goldens,
)
from .providers import ResponseCache
from .reporting import (
    write_metrics_csv,
    write_metrics_json,
    write_plot_specs,
    write_reports,
    write_run_log,
)
from .taxonomy import GameFamily, classify, enumerate_games, family_census
from .tournament import GameSelection, aggregate, run_grid

FAMILY_PRINT_ORDER = (
    GameFamily.WIN_WIN,
    GameFamily.PRISONERS_DILEMMA,
    GameFamily.UNFAIR,
    GameFamily.CYCLIC,
    GameFamily.BIASED,
    GameFamily.SECOND_BEST,
    GameFamily.OTHER,
)


def cmd_enumerate(args: argparse.Namespace) -> int:
    games = enumerate_games()
    census = family_census()
    for family in FAMILY_PRINT_ORDER:
        print(f"{family.value:18s} {census[family]:4d}")
    print(f"{'total':18s} {len(games):4d}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            for i, game in enumerate(games):
                fh.write(
                    json.dumps(
                        {
                            "id": f"g{i:03d}",
                            "ranks_p1": list(game.ranks_p1),
                            "ranks_p2": list(game.ranks_p2),
                            "family": classify(game).value,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
        print(f"wrote {len(games)} games to {out}")
    return 0


def _parse_ranks(text: str) -> OrdinalGame:
    try:
        p1_text, p2_text = text.split(";")
        p1 = tuple(int(v) for v in p1_text.split(","))
        p2 = tuple(int(v) for v in p2_text.split(","))
    except ValueError as exc:
        raise ConfigurationError(
            f"--ranks wants 'a,b,c,d;e,f,g,h' (row-major, rank 4 best), got {text!r}: {exc}"
        ) from exc
    return OrdinalGame(p1, p2)


def cmd_classify(args: argparse.Namespace) -> int:
    if args.ranks:
        game = _parse_ranks(args.ranks)
    else:
        game = ordinal_from_payoffs(resolve_game(args.game, Path.cwd()))
    from .taxonomy import canonicalize

    canon = canonicalize(game)
    doc = {
        "family": classify(game).value,
        "ranks_p1": list(game.ranks_p1),
        "ranks_p2": list(game.ranks_p2),
        "canonical_ranks_p1": list(canon.ranks_p1),
        "canonical_ranks_p2": list(canon.ranks_p2),
        "equilibrium": equilibrium_report(game).to_json_dict(),
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _parse_intervention_arg(text: str | None) -> Intervention | None:
    if text is None or text == "none":
        return None
    if text == "fallible":
        return Intervention.fallible()
    if text.startswith("schedule:"):
        return Intervention.schedule(text.split(":", 1)[1])
    raise ConfigurationError(
        f"intervention must be 'fallible' or 'schedule:<text>', got {text!r}"
    )


def cmd_play(args: argparse.Namespace) -> int:
    cfg: ExperimentConfig | None = None
    if args.config:
        cfg = load_experiment_config(args.config)

    game = resolve_game(args.game, Path.cwd())
    agent_p1 = parse_agent_string(args.p1)
    agent_p2 = parse_agent_string(args.p2)
    mode = PredictionMode(args.predict)

    config = MatchConfig(
        game=game,
        agent_p1=agent_p1,
        agent_p2=agent_p2,
        rounds=args.rounds,
        variant=PromptVariant.from_id(args.variant),
        intervention_p1=_parse_intervention_arg(args.intervene_p1) if agent_p1.kind.value == "llm" else None,
        intervention_p2=_parse_intervention_arg(args.intervene_p2) if agent_p2.kind.value == "llm" else None,
        prediction_p1=mode if agent_p1.kind.value == "llm" else PredictionMode.NONE,
        prediction_p2=mode if agent_p2.kind.value == "llm" else PredictionMode.NONE,
        seed=args.seed,
    )

    registry = cfg.build_registry() if cfg else None
    cache = ResponseCache(cfg.cache_dir) if cfg and cfg.cache_dir else None
    transcript = play_match(config, registry=registry, cache=cache, offline=args.offline)

    v1, v2 = config.seat_variant(Seat.P1), config.seat_variant(Seat.P2)
    print(f"{game.name or 'game'}: {agent_p1.name} (p1) vs {agent_p2.name} (p2), {args.rounds} rounds")
    print("round  p1  p2  pay1  pay2  pred1  pred2")
    for r in transcript.rounds:
        pred1 = "-" if r.prediction_p1 is None else label_for_action(r.prediction_p1, v1)
        pred2 = "-" if r.prediction_p2 is None else label_for_action(r.prediction_p2, v2)
        print(
            f"{r.round_no:5d}  {label_for_action(r.action_p1, v1):>2s}  "
            f"{label_for_action(r.action_p2, v2):>2s}  {r.payoff_p1:4d}  {r.payoff_p2:4d}  "
            f"{pred1:>5s}  {pred2:>5s}"
        )
    print(f"totals: p1={transcript.total_p1} p2={transcript.total_p2}")
    if transcript.valid:
        metrics = match_metrics(transcript)
        print(
            "normalized: "
            f"p1={metrics.normalized_score[0]:.4f} p2={metrics.normalized_score[1]:.4f}  "
            f"coordination={metrics.coordination_rate:.4f}"
        )
    else:
        print(f"INVALID at round {transcript.failed_round}: {transcript.failure}")

    if args.observe:
        if cfg is None:
            raise ConfigurationError("--observe needs --config for the provider registry")
        target = Seat.P1 if args.observe_target == "p1" else Seat.P2
        report = observe_match(
            transcript, target, args.observe, registry=cfg.build_registry(),
            cache=cache, offline=args.offline,
        )
        variant = config.seat_variant(target)
        labels = [label_for_action(p, variant) for p in report.predictions]
        print(f"observer predictions for {args.observe_target}: {' '.join(labels)}")
        print(f"observer lock round: {report.lock_round}")

    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(transcript.to_json(), encoding="utf-8")
        print(f"wrote transcript to {out}")
    return 0 if transcript.valid else 1


def cmd_tournament(args: argparse.Namespace) -> int:
    cfg = load_experiment_config(args.config)
    if cfg.grid is None:
        raise ConfigurationError(f"{args.config} has no [grid] section")
    grid = cfg.grid
    if args.seed is not None:
        grid = dataclasses.replace(grid, seed=args.seed)
    if args.include_other_families:
        if grid.games.kind != "enumerated":
            raise ConfigurationError("--include-other-families only applies to enumerated games")
        grid = dataclasses.replace(
            grid, games=dataclasses.replace(grid.games, include_other=True)
        )
    out_dir = Path(args.out) if args.out else cfg.out_dir
    offline = args.offline or cfg.offline
    registry = cfg.build_registry()
    cache = ResponseCache(cfg.cache_dir) if cfg.cache_dir else None

    result = run_grid(
        grid,
        out_dir,
        registry=registry,
        cache=cache,
        offline=offline,
        max_workers=args.workers or cfg.workers,
        resume=not args.fresh,
        interventions_by_id=cfg.interventions,
    )
    write_reports(result, cfg.default_group_by())

    print(f"run dir: {result.run_dir}")
    print(
        f"transcripts: {len(result.transcripts)} "
        f"(executed {result.executed}, resumed {result.resumed})"
    )
    print(f"valid: {len(result.valid_transcripts)}  invalid: {result.invalid_count}")
    if result.failures:
        print(f"failed configs: {len(result.failures)}")
        for key, error in result.failures[:10]:
            print(f"  {key[:16]}: {error}")
    return 0 if not result.failures and result.invalid_count == 0 else 1


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    transcript_dir = run_dir / "transcripts"
    paths = sorted(transcript_dir.glob("*.json"))
    if not paths:
        raise ConfigurationError(f"no transcripts under {transcript_dir}")
    transcripts = [Transcript.from_json(p.read_text(encoding="utf-8")) for p in paths]
    group_by = tuple(args.group_by.split(",")) if args.group_by else ("agent", "family")

    valid = [t for t in transcripts if t.valid]
    rows = aggregate(valid, group_by)
    write_metrics_csv(rows, group_by, run_dir / "metrics.csv")
    write_metrics_json(rows, group_by, run_dir / "metrics.json")
    overall = aggregate(valid, ("agent",))
    write_metrics_csv(overall, ("agent",), run_dir / "metrics_by_agent.csv")
    write_metrics_json(overall, ("agent",), run_dir / "metrics_by_agent.json")
    write_run_log(transcripts, run_dir / "completions.jsonl")
    write_plot_specs(transcripts, run_dir / "plots")
    print(f"rebuilt reports for {len(transcripts)} transcripts ({len(rows)} metric rows)")
    return 0


def cmd_validate_prompts(args: argparse.Namespace) -> int:
    if args.update_goldens:
        validate_prompt_goldens(update=True)
        print("goldens rewritten from current templates")
        return 0
    problems = validate_prompt_goldens()
    roundtrips = 0
    for variant in variant_space():
        for action in (0, 1):
            token = label_for_action(action, variant)
            if parse_choice(token, variant) != action:
                problems.append(f"round-trip failed: {variant.id} action {action}")
            roundtrips += 1
    if problems:
        for problem in problems:
            print(problem)
        return 1
    print(f"goldens match; {roundtrips} label round-trips ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arena2x2",
        description="Tournament engine for finitely repeated 2x2 games.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="census of the 144 strict-ordinal games")
    p.add_argument("--out", help="write the enumeration as JSONL here")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("classify", help="family and equilibrium report for one game")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ranks", help="row-major ranks 'a,b,c,d;e,f,g,h' (4 = best)")
    group.add_argument("--game", help="stock name (pd, bos) or game JSON path")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("play", help="play one match and print it")
    p.add_argument("--game", required=True, help="stock name (pd, bos) or game JSON path")
    p.add_argument("--p1", required=True, help="agent: constant:F, dtc, alternator, llm:<provider>")
    p.add_argument("--p2", required=True)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--variant", default=BASE_VARIANT.id)
    p.add_argument("--predict", default="none",
                   choices=[m.value for m in PredictionMode if m is not PredictionMode.PREDICT_AS_OBSERVER],
                   help="prediction mode for LLM seats")
    p.add_argument("--intervene-p1", help="'fallible' or 'schedule:<text>' for seat 1")
    p.add_argument("--intervene-p2", help="'fallible' or 'schedule:<text>' for seat 2")
    p.add_argument("--observe", metavar="PROVIDER",
                   help="after the match, replay it for observer predictions")
    p.add_argument("--observe-target", choices=["p1", "p2"], default="p2")
    p.add_argument("--config", help="config file providing providers and cache")
    p.add_argument("--out", help="write the transcript JSON here")
    p.add_argument("--offline", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("tournament", help="run a configured grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the run directory")
    p.add_argument("--offline", action="store_true")
    p.add_argument("--include-other-families", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--fresh", action="store_true", help="ignore existing transcripts")
    p.set_defaults(func=cmd_tournament)

    p = sub.add_parser("report", help="rebuild metrics and plots from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--group-by", help="comma-separated fields, default agent,family")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate-prompts", help="diff rendered prompts against goldens")
    p.add_argument("--update-goldens", action="store_true")
    p.set_defaults(func=cmd_validate_prompts)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ArenaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
