"""Command-line pipeline: generate, ingest, cluster, train, evaluate, replay, simulate.

Stages talk through files in the output directory; see ``config.OUTPUT_FILES``.
Exit codes: 0 success, 1 domain error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

from .classifier import ForestParams, cross_validate, derive_seed, load_model, save_model, train_forest
from .clustering import ClusteringParams, cluster_journey, load_overrides, write_cluster_report
from .clustering.labeling import LabelRuleConfig
from .config import PipelineConfig
from .engine import format_feedback, read_decisions, replay, write_decisions
from .errors import ConfigError, DomainError, UnlabeledData
from .fuzzy import FuzzyConfig
from .simulator import (
    GeneratorProfile,
    build_best_index,
    generate_journey,
    simulate_savings,
    weather_fixture,
    write_fuel_table,
)
from .telemetry import (
    Label,
    aggregate_events,
    events_by_journey,
    parse_telemetry,
    read_events,
    split_journeys,
    write_events,
    write_telemetry,
)
from .weather import FixtureWeatherProvider

logger = logging.getLogger("ecofeedback")

_JOURNEY_STREAM = 0x6A


class UsageError(ConfigError):
    """Bad arguments or a missing input file."""


class _CountingProvider:
    """Counts lookups that come back empty and will use the fallback weather."""

    def __init__(self, inner):
        self.inner = inner
        self.misses = 0

    def lookup(self, query):
        found = self.inner.lookup(query)
        self.misses += found is None
        return found


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _existing(path: Path | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"no {what} given")
    if not path.is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


def _input(args, cfg: PipelineConfig, flag: str, key: str, default: str | None, what: str) -> Path:
    """Explicit flag, then config path, then the previous stage's output."""
    value = getattr(args, flag, None)
    if value is not None:
        return _existing(Path(value), what)
    if cfg.path(key) is not None:
        return _existing(cfg.path(key), what)
    return _existing(cfg.output(default) if default else None, what)


def _rules(args, cfg: PipelineConfig) -> LabelRuleConfig:
    path = args.rules or cfg.path("label_rules")
    return LabelRuleConfig.default() if path is None else LabelRuleConfig.load(_existing(Path(path), "rule config"))


def _fuzzy(args, cfg: PipelineConfig) -> FuzzyConfig:
    path = args.fuzzy or cfg.path("fuzzy")
    return FuzzyConfig.default() if path is None else FuzzyConfig.load(_existing(Path(path), "fuzzy config"))


# -- commands ----------------------------------------------------------------


def cmd_generate(args, cfg: PipelineConfig) -> int:
    path = args.profile or cfg.path("profile")
    if path is None:
        text = resources.files("ecofeedback.data").joinpath("profile.json").read_text("utf-8")
        profile = GeneratorProfile.from_dict(json.loads(text))
    else:
        profile = GeneratorProfile.load(_existing(Path(path), "generator profile"))
    journeys = args.journeys or cfg.journeys
    records, fixture = [], {}
    for i in range(journeys):
        day = profile.shifted(dt.timedelta(days=i))
        recs = generate_journey(day, derive_seed(cfg.seed, _JOURNEY_STREAM, i))
        records.extend(recs)
        for key, value in weather_fixture(day, recs).items():
            fixture.setdefault(key, value)
    with open(cfg.output("telemetry"), "w", encoding="utf-8", newline="") as fh:
        write_telemetry(records, fh)
    _write_json(cfg.output("weather_fixture"), fixture)
    print(f"generated {len(records)} records over {journeys} journey(s)")
    return 0


def cmd_ingest(args, cfg: PipelineConfig) -> int:
    src = _input(args, cfg, "telemetry", "telemetry", "telemetry", "telemetry file")
    weather = None
    fixture = args.weather or cfg.path("weather_fixture")
    if fixture is None and cfg.output("weather_fixture").is_file():
        fixture = cfg.output("weather_fixture")
    if fixture is not None:
        weather = _CountingProvider(FixtureWeatherProvider.from_file(_existing(Path(fixture), "weather fixture")))
    with open(src, encoding="utf-8", newline="") as fh:
        parsed = parse_telemetry(fh, tank_capacity=cfg.tank_capacity)
    journeys = split_journeys(parsed.records, dt.timedelta(minutes=cfg.gap_threshold_minutes))
    events = []
    for j in journeys:
        events.extend(aggregate_events(j, weather, utc_offset_hours=cfg.utc_offset_hours))
    write_events(events, cfg.output("events"))
    for err in parsed.errors:
        logger.info("rejected line %d: %s", err.line, err)
    summary = {
        "records": len(parsed.records),
        "rejected_rows": parsed.rejected_rows,
        "errors": parsed.error_counts(),
        "journeys": len(journeys),
        "events": len(events),
        "idling_events": sum(e.is_idling for e in events),
        "weather_fallback_minutes": len(events) if weather is None else weather.misses,
    }
    _write_json(cfg.output("ingest_summary"), summary)
    print(f"{len(parsed.records)} records, {len(journeys)} journeys, {len(events)} events")
    print(f"{parsed.rejected_rows} rows rejected")
    if summary["weather_fallback_minutes"]:
        print(f"warning: {summary['weather_fallback_minutes']} minutes had no weather and used the fallback")
    return 0


def cmd_cluster(args, cfg: PipelineConfig) -> int:
    src = _input(args, cfg, "events", "events", "events", "events file")
    params = cfg.clustering
    if args.k is not None:
        params = ClusteringParams(k=args.k, height=None, min_events=params.min_events)
    elif args.height is not None:
        params = ClusteringParams(k=None, height=args.height, min_events=params.min_events)
    rules = _rules(args, cfg)
    override_path = args.overrides or cfg.path("overrides")
    overrides = None
    if override_path is not None:
        overrides = load_overrides(_existing(Path(override_path), "override file"))

    labeled, summaries = [], []
    for journey_id, events in events_by_journey(read_events(src)).items():
        result = cluster_journey(events, params, rules, overrides)
        if result.skipped:
            print(f"warning: journey {journey_id} has {len(events)} events, below min_events; left Unlabeled")
        labeled.extend(result.events)
        summaries.extend(result.summaries)
    write_events(labeled, cfg.output("labeled_events"))
    with open(cfg.output("cluster_report"), "w", encoding="utf-8", newline="") as fh:
        write_cluster_report(summaries, fh)
    counts = {lab: sum(e.label is lab for e in labeled) for lab in Label}
    print(", ".join(f"{n} {lab.value}" for lab, n in counts.items()))
    return 0


def _forest_params(args, cfg: PipelineConfig) -> ForestParams:
    p = cfg.forest
    return ForestParams(
        ntree=args.ntree or p.ntree,
        mtry=args.mtry or p.mtry,
        min_leaf=p.min_leaf,
        max_depth=p.max_depth,
        seed=cfg.seed,
    )


def _labeled(src: Path) -> list:
    events = [e for e in read_events(src) if e.label is not Label.UNLABELED]
    if not events:
        raise UnlabeledData(f"{src} has no labeled events")
    return events


def cmd_train(args, cfg: PipelineConfig) -> int:
    src = _input(args, cfg, "events", "labeled_events", "labeled_events", "labeled events file")
    params = _forest_params(args, cfg)
    rules = _rules(args, cfg)
    model = train_forest(_labeled(src), params, rules.severity_order)
    dest = Path(args.model) if args.model else cfg.path("model") or cfg.output("model")
    save_model(model, dest)
    print(f"ntree={params.ntree} mtry={params.mtry} seed={params.seed}")
    oob = "n/a" if model.oob_error is None else f"{100 * model.oob_error:.2f}%"
    print(f"OOB error: {oob} over {model.training_size} events")
    return 0


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    src = _input(args, cfg, "events", "labeled_events", "labeled_events", "labeled events file")
    params = _forest_params(args, cfg)
    folds = args.folds or cfg.folds
    rules = _rules(args, cfg)
    report = cross_validate(_labeled(src), params, folds, cfg.seed, rules.severity_order)
    doc = {"folds": folds, **report.to_dict()}
    _write_json(cfg.output("evaluation"), doc)
    print(f"{folds}-fold cross-validation over {report.n} events")
    print(report.to_table())
    return 0


def cmd_replay(args, cfg: PipelineConfig) -> int:
    src = _input(args, cfg, "events", "events", "events", "events file")
    model = load_model(_input(args, cfg, "model", "model", "model", "model file"))
    events = read_events(src)
    decisions = replay(events, model, _fuzzy(args, cfg))
    write_decisions(decisions, cfg.output("decisions"))
    for d in decisions:
        if d.action is not None:
            logger.info("%s %s", d.minute_start.isoformat(), format_feedback(d))
    inefficient = sum(d.verdict is Label.INEFFICIENT for d in decisions)
    print(f"{len(decisions)} decisions, {inefficient} Inefficient")
    return 0


def cmd_simulate(args, cfg: PipelineConfig) -> int:
    events = read_events(_input(args, cfg, "events", "events", "events", "events file"))
    decisions = read_decisions(_input(args, cfg, "decisions", "decisions", "decisions", "decision log"))
    history = read_events(
        _input(args, cfg, "history", "history", "labeled_events", "history events file")
    )
    index = build_best_index(history)
    report = simulate_savings(events, decisions, index)

    per_journey = []
    decision_iter = iter(decisions)
    for journey_id, group in events_by_journey(events).items():
        part = [next(decision_iter) for _ in group]
        r = simulate_savings(group, part, index)
        per_journey.append({k: v for k, v in r.to_dict().items() if k != "substitutions"})
    doc = {"overall": report.to_dict(), "journeys": per_journey, "index_size": len(index)}
    _write_json(cfg.output("savings"), doc)
    with open(cfg.output("fuel_table"), "w", encoding="utf-8", newline="") as fh:
        write_fuel_table(report, fh)
    gain = report.efficiency_gain_percent
    print(f"actual fuel {report.actual_total_fuel:.4f} L, adjusted {report.adjusted_total_fuel:.4f} L")
    print("efficiency gain: " + ("unbounded" if gain is None else f"{gain:.2f}%"))
    print(f"{len(report.substitutions)} substitutions, {report.unmatched_count} unmatched")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "ingest": cmd_ingest,
    "cluster": cmd_cluster,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "replay": cmd_replay,
    "simulate": cmd_simulate,
}


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=default, help="overrides the config seed")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument(
        "--verbose", "-v", action="store_true", default=default if suppress else False
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecofeedback", description=__doc__.splitlines()[0])
    _global_options(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="synthetic telemetry and weather fixture")
    p.add_argument("--profile")
    p.add_argument("--journeys", type=int)

    p = sub.add_parser("ingest", parents=[common], help="telemetry to one-minute events")
    p.add_argument("--telemetry")
    p.add_argument("--weather", help="weather fixture JSON")

    p = sub.add_parser("cluster", parents=[common], help="per-journey clustering and labels")
    p.add_argument("--events")
    p.add_argument("--rules")
    p.add_argument("--overrides")
    cut = p.add_mutually_exclusive_group()
    cut.add_argument("--k", type=int)
    cut.add_argument("--height", type=float)

    for name, text in (("train", "fit the forest"), ("evaluate", "k-fold cross-validation")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--events")
        p.add_argument("--rules")
        p.add_argument("--ntree", type=int)
        p.add_argument("--mtry", type=int)
        if name == "train":
            p.add_argument("--model", help="where to write the model")
        else:
            p.add_argument("--folds", type=int)

    p = sub.add_parser("replay", parents=[common], help="decisions for an events file")
    p.add_argument("--events")
    p.add_argument("--model")
    p.add_argument("--fuzzy")

    p = sub.add_parser("simulate", parents=[common], help="savings against the best history")
    p.add_argument("--events")
    p.add_argument("--decisions")
    p.add_argument("--history", help="labeled events used to build the best index")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
        cfg = cfg.with_overrides(seed=args.seed, output_dir=args.out)
        if cfg.seed < 0:
            raise UsageError("seed must be non-negative")
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
