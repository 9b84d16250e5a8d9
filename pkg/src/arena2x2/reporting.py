"""Run-directory outputs: metrics tables, run log, manifest, plot specs.

Everything written here is a pure function of the transcripts, sorted and
stably serialized, so re-running a finished tournament reproduces the
directory byte for byte.  Plot specs are renderer-agnostic JSON documents
describing the standard figures rather than image files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from .agents import Seat
from .match import Transcript, match_metrics
from .prompting import label_for_action
from .tournament import GridResult, MetricsRow, aggregate, mean_and_ci95

TRAJECTORY_CAP = 200

METRIC_COLUMNS = (
    "n",
    "mean_normalized_score",
    "ci95_normalized_score",
    "mean_defection_rate",
    "mean_coordination_rate",
    "mean_preferred_option_rate",
    "mean_prediction_lock_round",
    "low_n",
)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _dump_json(doc: object) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_metrics_csv(rows: Sequence[MetricsRow], group_by: tuple[str, ...], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(group_by) + list(METRIC_COLUMNS))
        for row in rows:
            key = row.key_dict()
            doc = row.to_json_dict()
            writer.writerow(
                [key[f] for f in group_by]
                + ["" if doc[c] is None else doc[c] for c in METRIC_COLUMNS]
            )
    tmp.replace(path)


def write_metrics_json(rows: Sequence[MetricsRow], group_by: tuple[str, ...], path: str | Path) -> None:
    doc = {"group_by": list(group_by), "rows": [row.to_json_dict() for row in rows]}
    _write_text(Path(path), _dump_json(doc))


def write_run_log(transcripts: Sequence[Transcript], path: str | Path) -> None:
    """Every completion consumed by the run, one JSON object per line.

    Transcripts are ordered by config key and records keep their in-match
    order, so the log is deterministic and each record appears exactly
    once."""
    lines = []
    for transcript in sorted(transcripts, key=Transcript.config_key):
        key = transcript.config_key()
        for record in transcript.records:
            doc = {"config_key": key}
            doc.update(record.to_json_dict())
            lines.append(json.dumps(doc, sort_keys=True))
    _write_text(Path(path), "\n".join(lines) + ("\n" if lines else ""))


def write_manifest(grid: GridResult, path: str | Path) -> None:
    doc = {
        "configs": len(grid.transcripts) + len(grid.failures),
        "transcripts": len(grid.transcripts),
        "valid": len(grid.valid_transcripts),
        "invalid": grid.invalid_count,
        "executed": grid.executed,
        "resumed": grid.resumed,
        "failures": [
            {"config_key": key, "error": error} for key, error in grid.failures
        ],
    }
    _write_text(Path(path), _dump_json(doc))


def _agent_names(transcripts: Sequence[Transcript]) -> list[str]:
    names = set()
    for t in transcripts:
        names.add(t.config.agent_p1.name)
        names.add(t.config.agent_p2.name)
    return sorted(names)


def family_performance_spec(transcripts: Sequence[Transcript]) -> dict:
    """Grouped bar chart: normalized score by family, one bar per agent,
    families ordered from best overall to worst."""
    rows = aggregate([t for t in transcripts if t.valid], ("family", "agent"))
    by_family: dict[str, dict[str, MetricsRow]] = {}
    for row in rows:
        key = row.key_dict()
        by_family.setdefault(key["family"], {})[key["agent"]] = row

    def family_mean(family: str) -> float:
        cells = by_family[family].values()
        total = sum(r.mean_normalized_score * r.n for r in cells)
        count = sum(r.n for r in cells)
        return total / count if count else 0.0

    families = sorted(by_family, key=lambda f: (-family_mean(f), f))
    agents = sorted({a for cells in by_family.values() for a in cells})
    series = []
    for agent in agents:
        series.append(
            {
                "agent": agent,
                "mean": [
                    (by_family[f][agent].mean_normalized_score if agent in by_family[f] else None)
                    for f in families
                ],
                "ci95": [
                    (by_family[f][agent].ci95_normalized_score if agent in by_family[f] else None)
                    for f in families
                ],
                "n": [
                    (by_family[f][agent].n if agent in by_family[f] else 0)
                    for f in families
                ],
            }
        )
    return {
        "chart": "grouped_bar",
        "title": "Normalized score by game family",
        "x_label": "game family",
        "y_label": "mean normalized score (95% CI)",
        "x": families,
        "series": series,
    }


def pairwise_heatmap_spec(transcripts: Sequence[Transcript], metric: str) -> dict:
    """Agent-by-agent heatmap; rows are seat-1 agents, columns seat-2.

    ``metric`` is one of normalized_score, defection_rate,
    preferred_option_rate (all read from the seat-1 side) or
    coordination_rate (shared).  Cells without data are null.
    """
    titles = {
        "normalized_score": "Seat-1 normalized score by pairing",
        "defection_rate": "Seat-1 defection rate by pairing",
        "preferred_option_rate": "Seat-1 preferred-option rate by pairing",
        "coordination_rate": "Coordination rate by pairing",
    }
    if metric not in titles:
        raise ValueError(f"unknown heatmap metric {metric!r}")
    valid = [t for t in transcripts if t.valid]
    names = _agent_names(valid)
    samples: dict[tuple[str, str], list[float]] = {}
    for t in valid:
        m = match_metrics(t)
        value: float | None
        if metric == "normalized_score":
            value = m.normalized_score[0]
        elif metric == "defection_rate":
            value = m.defection_rate[0]
        elif metric == "preferred_option_rate":
            value = m.preferred_option_rate[0]
        else:
            value = m.coordination_rate
        if value is None:
            continue
        pair = (t.config.agent_p1.name, t.config.agent_p2.name)
        samples.setdefault(pair, []).append(value)

    values = []
    ci95 = []
    counts = []
    for p1 in names:
        value_row: list[float | None] = []
        ci_row: list[float | None] = []
        count_row: list[int] = []
        for p2 in names:
            got = samples.get((p1, p2))
            if got:
                mean, half = mean_and_ci95(got)
                value_row.append(mean)
                ci_row.append(half)
                count_row.append(len(got))
            else:
                value_row.append(None)
                ci_row.append(None)
                count_row.append(0)
        values.append(value_row)
        ci95.append(ci_row)
        counts.append(count_row)
    return {
        "chart": "heatmap",
        "title": titles[metric],
        "metric": metric,
        "rows": names,
        "cols": names,
        "row_label": "seat-1 agent",
        "col_label": "seat-2 agent",
        "values": values,
        "ci95": ci95,
        "n": counts,
    }


def trajectories_spec(transcripts: Sequence[Transcript], cap: int = TRAJECTORY_CAP) -> dict:
    """Per-round action/payoff traces for inspection of explicit matches."""
    entries = []
    for t in sorted(transcripts, key=Transcript.config_key)[:cap]:
        config = t.config
        rounds = []
        for r in t.rounds:
            rounds.append(
                {
                    "round": r.round_no,
                    "action_p1": label_for_action(r.action_p1, config.seat_variant(Seat.P1)),
                    "action_p2": label_for_action(r.action_p2, config.seat_variant(Seat.P2)),
                    "payoff_p1": r.payoff_p1,
                    "payoff_p2": r.payoff_p2,
                    "prediction_p1": (
                        None if r.prediction_p1 is None
                        else label_for_action(r.prediction_p1, config.seat_variant(Seat.P1))
                    ),
                    "prediction_p2": (
                        None if r.prediction_p2 is None
                        else label_for_action(r.prediction_p2, config.seat_variant(Seat.P2))
                    ),
                }
            )
        entries.append(
            {
                "config_key": t.config_key(),
                "game": config.game.name or "",
                "agent_p1": config.agent_p1.name,
                "agent_p2": config.agent_p2.name,
                "valid": t.valid,
                "failure": t.failure,
                "rounds": rounds,
            }
        )
    return {"chart": "trajectories", "matches": entries, "truncated": len(transcripts) > cap}


def write_plot_specs(transcripts: Sequence[Transcript], plots_dir: str | Path) -> list[Path]:
    plots_dir = Path(plots_dir)
    written = []
    specs = {
        "family_performance.json": family_performance_spec(transcripts),
        "heatmap_normalized_score.json": pairwise_heatmap_spec(transcripts, "normalized_score"),
        "heatmap_defection_rate.json": pairwise_heatmap_spec(transcripts, "defection_rate"),
        "heatmap_preferred_option_rate.json": pairwise_heatmap_spec(transcripts, "preferred_option_rate"),
        "heatmap_coordination_rate.json": pairwise_heatmap_spec(transcripts, "coordination_rate"),
        "trajectories.json": trajectories_spec(transcripts),
    }
    for name, spec in specs.items():
        path = plots_dir / name
        _write_text(path, _dump_json(spec))
        written.append(path)
    return written


def write_reports(grid: GridResult, group_by: tuple[str, ...]) -> None:
    """Write the full report set for a finished grid into its run dir."""
    run_dir = grid.run_dir
    rows = aggregate(grid.valid_transcripts, group_by)
    write_metrics_csv(rows, group_by, run_dir / "metrics.csv")
    write_metrics_json(rows, group_by, run_dir / "metrics.json")
    overall = aggregate(grid.valid_transcripts, ("agent",))
    write_metrics_csv(overall, ("agent",), run_dir / "metrics_by_agent.csv")
    write_metrics_json(overall, ("agent",), run_dir / "metrics_by_agent.json")
    write_run_log(grid.transcripts, run_dir / "completions.jsonl")
    write_manifest(grid, run_dir / "manifest.json")
    write_plot_specs(grid.transcripts, run_dir / "plots")
