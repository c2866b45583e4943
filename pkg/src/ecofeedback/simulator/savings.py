"""Upper-bound fuel savings from replacing inefficient minutes with the best history."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

from ..engine import FeedbackDecision
from ..errors import LengthMismatch
from ..telemetry import DrivingEvent, Label, format_timestamp
from ..weather import WeatherCondition, grid_cell

ELEVATION_BIN_M = 5.0
CELLS_PER_DEGREE = 100


@dataclass(frozen=True, order=True)
class ContextKey:
    hour: int
    weather: WeatherCondition
    elevation_bin: int
    location_cell: tuple[int, int]  # hundredths of a degree

    def to_dict(self) -> dict:
        return {
            "hour": self.hour,
            "weather": self.weather.value,
            "elevation_bin": self.elevation_bin,
            "location_cell": [c / CELLS_PER_DEGREE for c in self.location_cell],
        }


def context_key(event: DrivingEvent) -> ContextKey:
    lat, lon = event.location_anchor
    return ContextKey(
        hour=event.hour,
        weather=event.weather,
        elevation_bin=math.floor(event.elevation_change / ELEVATION_BIN_M),
        location_cell=grid_cell(lat, lon, CELLS_PER_DEGREE),
    )


def build_best_index(history: Iterable[DrivingEvent]) -> dict[ContextKey, float]:
    """Best capped mileage per context over Efficient, non-idling events."""
    index: dict[ContextKey, float] = {}
    for e in history:
        if e.label is not Label.EFFICIENT or e.is_idling:
            continue
        mileage = e.capped_mileage
        if mileage is None:
            continue
        key = context_key(e)
        if mileage > index.get(key, -math.inf):
            index[key] = mileage
    return index


@dataclass(frozen=True)
class Substitution:
    event: DrivingEvent
    key: ContextKey | None  # None for an idling minute, which needs no match
    best_mileage: float | None
    actual_fuel: float
    adjusted_fuel: float

    def to_dict(self) -> dict:
        return {
            "minute_start": format_timestamp(self.event.minute_start),
            "kind": "idling" if self.key is None else "historical_best",
            "key": None if self.key is None else self.key.to_dict(),
            "best_mileage": self.best_mileage,
            "distance": self.event.distance,
            "actual_fuel": self.actual_fuel,
            "adjusted_fuel": self.adjusted_fuel,
        }


@dataclass(frozen=True)
class EventFuel:
    event: DrivingEvent
    actual_fuel: float
    adjusted_fuel: float


@dataclass(frozen=True)
class SavingsReport:
    journey_id: str | None
    actual_total_fuel: float
    adjusted_total_fuel: float
    actual_distance: float
    substitutions: tuple[Substitution, ...]
    efficiency_gain_percent: float | None
    unmatched_count: int
    per_event: tuple[EventFuel, ...]

    def to_dict(self) -> dict:
        return {
            "journey_id": self.journey_id,
            "actual_total_fuel": self.actual_total_fuel,
            "adjusted_total_fuel": self.adjusted_total_fuel,
            "actual_distance": self.actual_distance,
            "efficiency_gain_percent": self.efficiency_gain_percent,
            "unmatched_count": self.unmatched_count,
            "substitutions": [s.to_dict() for s in self.substitutions],
        }


def efficiency_gain(distance: float, actual_fuel: float, adjusted_fuel: float) -> float | None:
    """Percent change of distance-weighted mileage, ``100 * (F / F' - 1)``.

    Zero when nothing moved or nothing burned; None when every liter was
    removed, since the adjusted mileage is then unbounded.
    """
    if distance <= 0 or actual_fuel <= 0:
        return 0.0
    if adjusted_fuel <= 0:
        return None
    return 100.0 * (actual_fuel / adjusted_fuel - 1.0)


def simulate_savings(
    events: Sequence[DrivingEvent],
    decisions: Sequence[FeedbackDecision],
    index: Mapping[ContextKey, float],
) -> SavingsReport:
    if len(events) != len(decisions):
        raise LengthMismatch(f"{len(events)} events but {len(decisions)} decisions")
    for i, (e, d) in enumerate(zip(events, decisions)):
        if (e.journey_id, e.minute_start) != (d.journey_id, d.minute_start):
            raise LengthMismatch(f"decision {i} does not answer event {i}")

    subs: list[Substitution] = []
    rows: list[EventFuel] = []
    unmatched = 0
    for e, d in zip(events, decisions):
        adjusted = e.fuel_consumed
        if d.verdict is Label.INEFFICIENT:
            if e.is_idling:
                adjusted = 0.0
                subs.append(Substitution(e, None, None, e.fuel_consumed, adjusted))
            else:
                key = context_key(e)
                best = index.get(key)
                if best is None:
                    unmatched += 1
                elif e.fuel_mileage is not None and best > e.fuel_mileage:
                    adjusted = e.distance / best
                    subs.append(Substitution(e, key, best, e.fuel_consumed, adjusted))
        rows.append(EventFuel(e, e.fuel_consumed, adjusted))

    actual = math.fsum(r.actual_fuel for r in rows)
    adjusted_total = math.fsum(r.adjusted_fuel for r in rows)
    distance = math.fsum(e.distance for e in events)
    journeys = {e.journey_id for e in events}
    return SavingsReport(
        journey_id=journeys.pop() if len(journeys) == 1 else None,
        actual_total_fuel=actual,
        adjusted_total_fuel=adjusted_total,
        actual_distance=distance,
        substitutions=tuple(subs),
        efficiency_gain_percent=efficiency_gain(distance, actual, adjusted_total),
        unmatched_count=unmatched,
        per_event=tuple(rows),
    )


FUEL_TABLE_COLUMNS = ("minute_start", "latitude", "longitude", "actual_fuel", "adjusted_fuel")


def write_fuel_table(report: SavingsReport, fh: IO[str]) -> None:
    """Per-event actual vs. adjusted fuel keyed by location, for plotting."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(FUEL_TABLE_COLUMNS)
    for r in report.per_event:
        lat, lon = r.event.location_anchor
        writer.writerow(
            [format_timestamp(r.event.minute_start), repr(lat), repr(lon), repr(r.actual_fuel), repr(r.adjusted_fuel)]
        )
