"""Cluster summaries and rule-based efficiency labeling."""

from __future__ import annotations

import csv
import json
import operator
from collections import Counter
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import IO, Any, Callable, Iterable, Mapping, Sequence

from ..errors import ConfigError
from ..telemetry import DrivingEvent, Label
from ..weather import (
    DEFAULT_SEVERITY_ORDER,
    WeatherCondition,
    parse_severity_order,
    severity_rank,
)


@dataclass(frozen=True)
class ClusterSummary:
    cluster_id: int
    n_members: int
    mean_speed: float
    mean_acceleration: float
    mean_elevation_change: float
    is_idling_mode: int
    hour_mode: int
    weather_mode: WeatherCondition
    mean_fuel_economy: float
    label: Label = Label.UNLABELED
    journey_id: str | None = None


def _mode(values: Iterable, key: Callable | None = None):
    counts = Counter(values)
    top = max(counts.values())
    return min((v for v, c in counts.items() if c == top), key=key)


def summarize_cluster(
    members: Sequence[DrivingEvent],
    cluster_id: int = 1,
    *,
    severity_order: Sequence[WeatherCondition] | None = None,
    journey_id: str | None = None,
) -> ClusterSummary:
    """Table-style summary over raw member attributes.

    Modes break ties toward the smallest value (weather by severity rank).
    Fuel economy averages the capped mileage of members that have one.
    """
    if not members:
        raise ValueError("cannot summarize an empty cluster")
    n = len(members)
    mileages = [e.capped_mileage for e in members if e.capped_mileage is not None]
    return ClusterSummary(
        cluster_id=cluster_id,
        n_members=n,
        mean_speed=sum(e.avg_speed for e in members) / n,
        mean_acceleration=sum(e.avg_acceleration for e in members) / n,
        mean_elevation_change=sum(e.elevation_change for e in members) / n,
        is_idling_mode=_mode(int(e.is_idling) for e in members),
        hour_mode=_mode(e.hour for e in members),
        weather_mode=_mode(
            (e.weather for e in members), key=lambda w: severity_rank(w, severity_order)
        ),
        mean_fuel_economy=sum(mileages) / len(mileages) if mileages else 0.0,
        journey_id=journey_id if journey_id is not None else members[0].journey_id,
    )


# -- rules -------------------------------------------------------------------

_OPS: dict[str, Callable[[Any, Any], bool]] = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "in": lambda a, b: a in b,
    "not_in": lambda a, b: a not in b,
}
_NUMERIC_FIELDS = {
    "cluster_id",
    "n_members",
    "mean_speed",
    "mean_acceleration",
    "mean_elevation_change",
    "is_idling_mode",
    "hour_mode",
    "mean_fuel_economy",
    "weather_severity",
}
_FIELDS = _NUMERIC_FIELDS | {"weather_mode"}


@dataclass(frozen=True)
class Condition:
    field: str
    op: str
    value: Any

    def holds(self, summary: ClusterSummary, severity_order: Sequence[WeatherCondition]) -> bool:
        if self.field == "weather_severity":
            actual = severity_rank(summary.weather_mode, severity_order)
        else:
            actual = getattr(summary, self.field)
        return _OPS[self.op](actual, self.value)


@dataclass(frozen=True)
class LabelRule:
    label: Label
    conditions: tuple[Condition, ...]
    name: str = ""

    def matches(self, summary: ClusterSummary, severity_order: Sequence[WeatherCondition]) -> bool:
        return all(c.holds(summary, severity_order) for c in self.conditions)


@dataclass(frozen=True)
class LabelRuleConfig:
    rules: tuple[LabelRule, ...]
    severity_order: tuple[WeatherCondition, ...] = DEFAULT_SEVERITY_ORDER

    @classmethod
    def from_dict(cls, doc: Mapping) -> "LabelRuleConfig":
        if not isinstance(doc, Mapping):
            raise ConfigError("label rule config must be an object")
        params = doc.get("params", {})
        if not isinstance(params, Mapping):
            raise ConfigError("'params' must be an object")
        try:
            order = (
                parse_severity_order(doc["severity_order"])
                if "severity_order" in doc
                else DEFAULT_SEVERITY_ORDER
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"severity_order: {exc}") from None
        raw_rules = doc.get("rules")
        if not isinstance(raw_rules, list) or not raw_rules:
            raise ConfigError("'rules' must be a non-empty list")
        rules = tuple(_parse_rule(r, i, params) for i, r in enumerate(raw_rules))
        return cls(rules, order)

    @classmethod
    def load(cls, path: str | Path) -> "LabelRuleConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_dict(doc)

    @classmethod
    def default(cls) -> "LabelRuleConfig":
        text = resources.files("ecofeedback.data").joinpath("label_rules.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def label_for(self, summary: ClusterSummary) -> Label:
        for rule in self.rules:
            if rule.matches(summary, self.severity_order):
                return rule.label
        return Label.UNLABELED


def _resolve(value: Any, params: Mapping, where: str) -> Any:
    if isinstance(value, str) and value.startswith("$"):
        name = value[1:]
        if name not in params:
            raise ConfigError(f"{where}: unknown parameter {value!r}")
        return params[name]
    return value


def _parse_rule(raw: Any, index: int, params: Mapping) -> LabelRule:
    where = f"rule {index}"
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{where}: must be an object")
    where = f"rule {index} ({raw.get('name', 'unnamed')})"
    try:
        label = Label(raw["label"])
    except KeyError:
        raise ConfigError(f"{where}: missing 'label'") from None
    except ValueError:
        raise ConfigError(f"{where}: label must be Efficient or Inefficient") from None
    if label is Label.UNLABELED:
        raise ConfigError(f"{where}: label must be Efficient or Inefficient")
    when = raw.get("when", [])
    if not isinstance(when, list):
        raise ConfigError(f"{where}: 'when' must be a list of conditions")
    conditions = []
    for j, c in enumerate(when):
        cw = f"{where}, condition {j}"
        if not isinstance(c, Mapping) or not {"field", "op", "value"} <= set(c):
            raise ConfigError(f"{cw}: needs 'field', 'op' and 'value'")
        fld, op = c["field"], c["op"]
        if fld not in _FIELDS:
            raise ConfigError(f"{cw}: unknown field {fld!r}; choose from {sorted(_FIELDS)}")
        if op not in _OPS:
            raise ConfigError(f"{cw}: unknown operator {op!r}; choose from {sorted(_OPS)}")
        value = _resolve(c["value"], params, cw)
        if op in ("in", "not_in"):
            if not isinstance(value, list):
                raise ConfigError(f"{cw}: operator {op!r} needs a list value")
            value = tuple(_coerce(fld, v, cw) for v in value)
        else:
            if fld == "weather_mode" and op not in ("==", "!="):
                raise ConfigError(f"{cw}: weather_mode only supports ==, !=, in, not_in")
            value = _coerce(fld, value, cw)
        conditions.append(Condition(fld, op, value))
    return LabelRule(label, tuple(conditions), str(raw.get("name", "")))


def _coerce(fld: str, value: Any, where: str) -> Any:
    if fld == "weather_mode":
        try:
            return WeatherCondition.parse(value)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: field {fld!r} needs a numeric value, got {value!r}")
    return value


Overrides = Mapping[tuple[str, int], Label]


def parse_overrides(lines: Iterable[str]) -> dict[tuple[str, int], Label]:
    """Parse ``journey_id,cluster_id,label`` lines; ``#`` starts a comment."""
    out: dict[tuple[str, int], Label] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ConfigError(f"override line {lineno}: expected journey_id,cluster_id,label")
        try:
            cluster_id = int(parts[1])
            label = Label(parts[2])
        except ValueError:
            raise ConfigError(f"override line {lineno}: bad cluster id or label {line!r}") from None
        out[(parts[0], cluster_id)] = label
    return out


def load_overrides(path: str | Path) -> dict[tuple[str, int], Label]:
    with open(path, encoding="utf-8") as fh:
        return parse_overrides(fh)


def label_clusters(
    summaries: Sequence[ClusterSummary],
    rules: LabelRuleConfig,
    overrides: Overrides | None = None,
) -> list[ClusterSummary]:
    """Label each summary by the first matching rule; manual overrides win."""
    overrides = overrides or {}
    out = []
    for s in summaries:
        label = overrides.get((s.journey_id, s.cluster_id))
        if label is None:
            label = rules.label_for(s)
        out.append(replace(s, label=label))
    return out


REPORT_COLUMNS = (
    "Journey",
    "Cluster No",
    "Mean Speed (km/h)",
    "Mean Acceleration (km/h^2)",
    "Mean Elevation Change (m)",
    "Is Idling (Mode)",
    "Time of the day (Mode)",
    "Weather Condition (Mode)",
    "Mean Fuel Economy (km/L)",
    "Fuel Efficiency",
    "Members",
)


def write_cluster_report(summaries: Iterable[ClusterSummary], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for s in summaries:
        writer.writerow(
            [
                s.journey_id or "",
                s.cluster_id,
                f"{s.mean_speed:.2f}",
                f"{s.mean_acceleration:.2f}",
                f"{s.mean_elevation_change:.3f}",
                s.is_idling_mode,
                f"{s.hour_mode:02d}.00",
                s.weather_mode.display,
                f"{s.mean_fuel_economy:.2f}",
                s.label.value,
                s.n_members,
            ]
        )
