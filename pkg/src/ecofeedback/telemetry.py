"""Raw tracker records and their one-minute aggregation into driving events."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from itertools import groupby
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .errors import ConfigError
from .weather import WeatherCondition, WeatherProvider, WeatherQuery

logger = logging.getLogger(__name__)

RECORD_FIELDS = (
    "timestamp",
    "longitude",
    "latitude",
    "bearing",
    "elevation",
    "distance",
    "speed",
    "acceleration",
    "ignition",
    "battery_voltage",
    "fuel_level",
    "fuel_consumed",
)

DEFAULT_TANK_CAPACITY = 250.0  # liters
MILEAGE_CAP = 999.0  # km/L, applied in summaries and reports only
DEFAULT_GAP_THRESHOLD = dt.timedelta(minutes=120)
IGNITION_RESTART_GAP = dt.timedelta(minutes=30)
FALLBACK_WEATHER = WeatherCondition.CLEAR


class Label(str, enum.Enum):
    EFFICIENT = "Efficient"
    INEFFICIENT = "Inefficient"
    UNLABELED = "Unlabeled"


@dataclass(frozen=True)
class RawRecord:
    timestamp: dt.datetime
    longitude: float
    latitude: float
    bearing: float
    elevation: float
    distance: float
    speed: float
    acceleration: float
    ignition: bool
    battery_voltage: float
    fuel_level: float
    fuel_consumed: float


@dataclass(frozen=True)
class MalformedRow:
    line: int
    message: str


@dataclass(frozen=True)
class RangeViolation:
    line: int
    field: str
    value: object


@dataclass
class ParseResult:
    records: list[RawRecord] = field(default_factory=list)
    errors: list[MalformedRow | RangeViolation] = field(default_factory=list)

    @property
    def rejected_rows(self) -> int:
        return len({e.line for e in self.errors})

    def error_counts(self) -> dict[str, int]:
        counts = {"malformed": 0, "range": 0}
        for e in self.errors:
            counts["malformed" if isinstance(e, MalformedRow) else "range"] += 1
        return counts


def parse_timestamp(text: str) -> dt.datetime:
    """Parse ISO-8601; naive values are taken as UTC, aware ones converted."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = dt.datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=dt.timezone.utc)
    return ts.astimezone(dt.timezone.utc)


def format_timestamp(ts: dt.datetime) -> str:
    ts = ts.astimezone(dt.timezone.utc)
    fmt = "%Y-%m-%dT%H:%M:%S.%fZ" if ts.microsecond else "%Y-%m-%dT%H:%M:%SZ"
    return ts.strftime(fmt)


_TRUE = {"1", "true", "t", "on", "yes", "y"}
_FALSE = {"0", "false", "f", "off", "no", "n"}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value


def _range_violations(rec: RawRecord, tank_capacity: float) -> list[tuple[str, object]]:
    checks = (
        ("latitude", -90.0 <= rec.latitude <= 90.0),
        ("longitude", -180.0 <= rec.longitude <= 180.0),
        ("bearing", 0.0 <= rec.bearing < 360.0),
        ("distance", rec.distance >= 0.0),
        ("speed", rec.speed >= 0.0),
        ("fuel_consumed", rec.fuel_consumed >= 0.0),
        ("fuel_level", 0.0 <= rec.fuel_level <= tank_capacity),
    )
    return [(name, getattr(rec, name)) for name, ok in checks if not ok]


def parse_telemetry(
    stream: IO[str] | Iterable[str],
    schema: Mapping[str, str] | None = None,
    *,
    delimiter: str = ",",
    tank_capacity: float = DEFAULT_TANK_CAPACITY,
) -> ParseResult:
    """Parse delimiter-separated telemetry into :class:`RawRecord` objects.

    ``schema`` maps record field names to column headers; unmapped fields use
    their own name. Bad rows are skipped and reported in ``errors`` with the
    physical line number. A row whose timestamp does not advance past the
    previous accepted row is reported as a range violation on ``timestamp``.
    """
    columns = {name: name for name in RECORD_FIELDS}
    if schema:
        unknown = set(schema) - set(RECORD_FIELDS)
        if unknown:
            raise ConfigError(f"schema names unknown fields: {sorted(unknown)}")
        columns.update(schema)

    result = ParseResult()
    reader = csv.DictReader(stream, delimiter=delimiter)
    if reader.fieldnames is None:
        return result
    header = [h.strip() for h in reader.fieldnames]
    reader.fieldnames = header
    missing = [c for c in columns.values() if c not in header]
    if missing:
        raise ConfigError(f"telemetry header is missing columns: {missing}")

    last_ts: dt.datetime | None = None
    for row in reader:
        line = reader.line_num
        if not any((v or "").strip() for k, v in row.items() if k is not None):
            continue
        try:
            values = {}
            for name, col in columns.items():
                raw = row.get(col)
                if raw is None or raw.strip() == "":
                    raise ValueError(f"missing value for {name}")
                if name == "timestamp":
                    values[name] = parse_timestamp(raw)
                elif name == "ignition":
                    values[name] = _parse_bool(raw)
                else:
                    values[name] = _parse_float(raw)
            rec = RawRecord(**values)
        except ValueError as exc:
            result.errors.append(MalformedRow(line, str(exc)))
            continue

        violations = _range_violations(rec, tank_capacity)
        if last_ts is not None and rec.timestamp <= last_ts:
            violations.append(("timestamp", format_timestamp(rec.timestamp)))
        if violations:
            result.errors.extend(RangeViolation(line, f, v) for f, v in violations)
            continue
        result.records.append(rec)
        last_ts = rec.timestamp
    return result


def write_telemetry(records: Iterable[RawRecord], fh: IO[str], delimiter: str = ",") -> None:
    writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
    writer.writerow(RECORD_FIELDS)
    for r in records:
        writer.writerow(
            [
                format_timestamp(r.timestamp),
                repr(r.longitude),
                repr(r.latitude),
                repr(r.bearing),
                repr(r.elevation),
                repr(r.distance),
                repr(r.speed),
                repr(r.acceleration),
                "1" if r.ignition else "0",
                repr(r.battery_voltage),
                repr(r.fuel_level),
                repr(r.fuel_consumed),
            ]
        )


@dataclass
class Journey:
    journey_id: str
    records: list[RawRecord]


def journey_id_for(start: dt.datetime, vehicle_id: str | None = None) -> str:
    stamp = start.astimezone(dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    return f"{vehicle_id}-{stamp}" if vehicle_id else stamp


def split_journeys(
    records: Sequence[RawRecord],
    gap_threshold: dt.timedelta = DEFAULT_GAP_THRESHOLD,
    *,
    ignition_gap: dt.timedelta = IGNITION_RESTART_GAP,
    vehicle_id: str | None = None,
) -> list[Journey]:
    """Cut a time-ordered record sequence into journeys.

    A journey ends when the gap to the next record exceeds ``gap_threshold``,
    or when the ignition goes from off to on across a gap longer than
    ``ignition_gap``.
    """
    journeys: list[Journey] = []
    current: list[RawRecord] = []
    for rec in records:
        if current:
            prev = current[-1]
            gap = rec.timestamp - prev.timestamp
            restart = (not prev.ignition) and rec.ignition and gap > ignition_gap
            if gap > gap_threshold or restart:
                journeys.append(Journey(journey_id_for(current[0].timestamp, vehicle_id), current))
                current = []
        current.append(rec)
    if current:
        journeys.append(Journey(journey_id_for(current[0].timestamp, vehicle_id), current))
    return journeys


@dataclass(frozen=True)
class DrivingEvent:
    journey_id: str
    minute_start: dt.datetime
    avg_speed: float
    avg_acceleration: float
    elevation_change: float
    distance: float
    fuel_consumed: float
    is_idling: bool
    hour: int
    weather: WeatherCondition
    fuel_mileage: float | None
    location_anchor: tuple[float, float]
    label: Label = Label.UNLABELED

    @property
    def capped_mileage(self) -> float | None:
        if self.fuel_mileage is None:
            return None
        return min(self.fuel_mileage, MILEAGE_CAP)

    def with_label(self, label: Label) -> "DrivingEvent":
        return replace(self, label=label)


def derive_hour(timestamp: dt.datetime) -> int:
    """Hour of day rounded to the nearest hour; half past rounds up, 23:30 wraps to 0."""
    return (timestamp + dt.timedelta(minutes=30)).hour


def _idle_condition(rec: RawRecord) -> bool:
    return rec.speed == 0.0 and rec.ignition and rec.distance == 0.0


def derive_is_idling(
    event_records: Sequence[RawRecord], previous_minute_idle_candidate: bool
) -> tuple[bool, bool]:
    """Return ``(is_idling, candidate_for_next_minute)`` for one minute.

    A minute idles when every record has zero speed, zero distance and the
    ignition on, and the previous minute already ended in that state, so the
    stationary span is longer than one minute. The candidate flag handed to
    the next minute is whether this minute's last record is stationary with
    the engine running.
    """
    if not event_records:
        return False, False
    all_idle = all(_idle_condition(r) for r in event_records)
    return (all_idle and previous_minute_idle_candidate), _idle_condition(event_records[-1])


def _minute_of(ts: dt.datetime) -> dt.datetime:
    return ts.replace(second=0, microsecond=0)


def aggregate_events(
    journey: Journey,
    weather: WeatherProvider | None = None,
    *,
    utc_offset_hours: float = 0.0,
    fallback: WeatherCondition = FALLBACK_WEATHER,
) -> list[DrivingEvent]:
    """Aggregate one journey into wall-clock-aligned one-minute events.

    Speed and acceleration are unweighted means over the minute's records;
    distance and fuel are sums. ``hour`` and the weather query use local time
    (UTC plus ``utc_offset_hours``) rounded to the nearest hour. Minutes with
    no records produce no event and reset the idling candidate.
    """
    offset = dt.timedelta(hours=utc_offset_hours)
    events: list[DrivingEvent] = []
    candidate = False
    prev_minute: dt.datetime | None = None
    misses = 0
    for minute, group in groupby(journey.records, key=lambda r: _minute_of(r.timestamp)):
        recs = list(group)
        if prev_minute is None or minute - prev_minute != dt.timedelta(minutes=1):
            candidate = False
        is_idling, candidate = derive_is_idling(recs, candidate)
        prev_minute = minute

        distance = math.fsum(r.distance for r in recs)
        fuel = math.fsum(r.fuel_consumed for r in recs)
        first = recs[0]
        rounded_local = minute + offset + dt.timedelta(minutes=30)
        hour = rounded_local.hour

        condition = None
        if weather is not None:
            condition = weather.lookup(
                WeatherQuery(first.latitude, first.longitude, rounded_local.date(), hour)
            )
        if condition is None:
            misses += 1
            condition = fallback

        events.append(
            DrivingEvent(
                journey_id=journey.journey_id,
                minute_start=minute,
                avg_speed=math.fsum(r.speed for r in recs) / len(recs),
                avg_acceleration=math.fsum(r.acceleration for r in recs) / len(recs),
                elevation_change=recs[-1].elevation - first.elevation,
                distance=distance,
                fuel_consumed=fuel,
                is_idling=is_idling,
                hour=hour,
                weather=condition,
                fuel_mileage=distance / fuel if fuel > 0 else None,
                location_anchor=(first.latitude, first.longitude),
            )
        )
    if misses:
        logger.debug("journey %s: %d minutes used fallback weather", journey.journey_id, misses)
    return events


# -- event serialization -----------------------------------------------------


def event_to_dict(event: DrivingEvent) -> dict:
    d = asdict(event)
    d["minute_start"] = format_timestamp(event.minute_start)
    d["weather"] = event.weather.value
    d["label"] = event.label.value
    d["location_anchor"] = list(event.location_anchor)
    return d


def event_from_dict(d: Mapping) -> DrivingEvent:
    mileage = d.get("fuel_mileage")
    lat, lon = d["location_anchor"]
    return DrivingEvent(
        journey_id=str(d["journey_id"]),
        minute_start=parse_timestamp(d["minute_start"]),
        avg_speed=float(d["avg_speed"]),
        avg_acceleration=float(d["avg_acceleration"]),
        elevation_change=float(d["elevation_change"]),
        distance=float(d["distance"]),
        fuel_consumed=float(d["fuel_consumed"]),
        is_idling=bool(d["is_idling"]),
        hour=int(d["hour"]),
        weather=WeatherCondition.parse(d["weather"]),
        fuel_mileage=None if mileage is None else float(mileage),
        location_anchor=(float(lat), float(lon)),
        label=Label(d.get("label", Label.UNLABELED.value)),
    )


def dump_jsonl(rows: Iterable[Mapping], fh: IO[str]) -> None:
    for row in rows:
        fh.write(json.dumps(row, sort_keys=True, allow_nan=False))
        fh.write("\n")


def iter_jsonl(fh: IO[str]) -> Iterator[dict]:
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line:
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from None


def write_events(events: Iterable[DrivingEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        dump_jsonl((event_to_dict(e) for e in events), fh)


def read_events(path: str | Path) -> list[DrivingEvent]:
    with open(path, encoding="utf-8") as fh:
        return [event_from_dict(d) for d in iter_jsonl(fh)]


def events_by_journey(events: Iterable[DrivingEvent]) -> dict[str, list[DrivingEvent]]:
    """Group events by journey id, preserving first-seen journey order."""
    out: dict[str, list[DrivingEvent]] = {}
    for e in events:
        out.setdefault(e.journey_id, []).append(e)
    return out


def telemetry_to_string(records: Iterable[RawRecord]) -> str:
    buf = io.StringIO()
    write_telemetry(records, buf)
    return buf.getvalue()
