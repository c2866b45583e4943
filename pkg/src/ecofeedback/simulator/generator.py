"""Seeded synthetic journeys for exercising the pipeline end to end.

The fuel model is deliberately simple. Liters burned over a record interval
of ``dt`` seconds at speed ``v`` (km/h) and acceleration ``a`` (km/h^2)::

    base_rate*dt + k_v*|v - v_opt|*dt + k_a*max(a, 0)*dt + idle_rate*dt*[v == 0]

with every constant taken from the profile.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ..classifier.forest import derive_seed
from ..errors import InvalidProfile
from ..telemetry import RawRecord, format_timestamp, parse_timestamp
from ..weather import WeatherCondition, fixture_key

EARTH_RADIUS_KM = 6371.0088
_GENERATOR_STREAM = 0x6E4E


@dataclass(frozen=True)
class DriverStyle:
    name: str
    cruise_speed: float  # km/h the driver aims for
    response: float  # share of the speed gap closed per record
    speed_noise: float  # km/h, std of per-record speed jitter
    accel_noise: float = 0.0  # km/h^2, std of extra acceleration jitter
    switch_minutes: float = 10.0  # mixed style only


STYLE_PRESETS: dict[str, DriverStyle] = {
    "smooth": DriverStyle("smooth", cruise_speed=55.0, response=0.25, speed_noise=1.0),
    "aggressive": DriverStyle(
        "aggressive", cruise_speed=78.0, response=0.9, speed_noise=9.0, accel_noise=1500.0
    ),
    "mixed": DriverStyle("mixed", cruise_speed=65.0, response=0.5, speed_noise=4.0),
}


@dataclass(frozen=True)
class FuelModel:
    base_rate: float = 0.00025  # L/s
    k_v: float = 0.00002  # L/s per km/h away from v_opt
    v_opt: float = 55.0  # km/h
    k_a: float = 4e-7  # L/s per km/h^2 of positive acceleration
    idle_rate: float = 0.0002  # L/s extra while stationary with the engine on

    def liters(self, v: float, a: float, dt_s: float, ignition: bool = True) -> float:
        if not ignition:
            return 0.0
        rate = self.base_rate + self.k_v * abs(v - self.v_opt) + self.k_a * max(a, 0.0)
        if v == 0.0:
            rate += self.idle_rate
        return rate * dt_s

    def liters_per_km_at(self, v: float) -> float:
        """Closed form for steady driving at ``v`` > 0."""
        return (self.base_rate + self.k_v * abs(v - self.v_opt)) * 3600.0 / v


@dataclass(frozen=True)
class IdleStop:
    at_minute: float
    duration_minutes: float


@dataclass(frozen=True)
class GeneratorProfile:
    route: tuple[tuple[float, float, float], ...]
    departure: dt.datetime
    driver_style: DriverStyle
    traffic_by_hour: Mapping[int, float] = field(default_factory=dict)
    weather_timeline: tuple[tuple[dt.datetime, WeatherCondition], ...] = ()
    idle_stops: tuple[IdleStop, ...] = ()
    fuel_model: FuelModel = FuelModel()
    cadence_seconds: float = 17.0
    jitter_seconds: float = 3.0
    utc_offset_hours: float = 0.0
    initial_fuel: float = 200.0
    max_speed: float = 110.0
    vehicle_id: str = "bus"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if len(self.route) < 2:
            raise InvalidProfile("route needs at least two waypoints")
        for i, wp in enumerate(self.route):
            if len(wp) != 3 or not all(math.isfinite(v) for v in wp):
                raise InvalidProfile(f"waypoint {i} must be finite (lat, lon, elevation)")
            if not (-90 <= wp[0] <= 90 and -180 <= wp[1] <= 180):
                raise InvalidProfile(f"waypoint {i} has out-of-range coordinates")
        if route_length_km(self.route) <= 0:
            raise InvalidProfile("route has zero length")
        s = self.driver_style
        if s.name not in STYLE_PRESETS:
            raise InvalidProfile(f"driver style must be one of {sorted(STYLE_PRESETS)}")
        if min(s.speed_noise, s.accel_noise) < 0:
            raise InvalidProfile("noise parameters must be non-negative")
        if not 0 < s.response <= 1:
            raise InvalidProfile("response must be in (0, 1]")
        if s.cruise_speed <= 0 or s.switch_minutes <= 0:
            raise InvalidProfile("cruise_speed and switch_minutes must be positive")
        if not 0 <= self.jitter_seconds < self.cadence_seconds:
            raise InvalidProfile("need 0 <= jitter_seconds < cadence_seconds")
        f = self.fuel_model
        if min(f.base_rate, f.k_v, f.k_a, f.idle_rate, f.v_opt) < 0:
            raise InvalidProfile("fuel model constants must be non-negative")
        for stop in self.idle_stops:
            if stop.at_minute < 0 or stop.duration_minutes <= 0:
                raise InvalidProfile("idle stops need at_minute >= 0 and duration_minutes > 0")
        for hour, cap in self.traffic_by_hour.items():
            if not 0 <= hour <= 23 or cap <= 0:
                raise InvalidProfile(f"bad traffic cap {cap} for hour {hour}")
        if self.initial_fuel < 0 or self.max_speed <= 0:
            raise InvalidProfile("initial_fuel and max_speed must be non-negative / positive")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "GeneratorProfile":
        try:
            style_doc = doc.get("driver_style", "smooth")
            if isinstance(style_doc, str):
                style_doc = {"name": style_doc}
            name = style_doc["name"]
            if name not in STYLE_PRESETS:
                raise InvalidProfile(f"driver style must be one of {sorted(STYLE_PRESETS)}")
            style = replace(STYLE_PRESETS[name], **{k: v for k, v in style_doc.items() if k != "name"})
            timeline = tuple(
                (parse_timestamp(w["from"]), WeatherCondition.parse(w["descriptor"]))
                for w in doc.get("weather_timeline", [])
            )
            options = {
                k: doc[k]
                for k in (
                    "cadence_seconds",
                    "jitter_seconds",
                    "utc_offset_hours",
                    "initial_fuel",
                    "max_speed",
                    "vehicle_id",
                )
                if k in doc
            }
            return cls(
                route=tuple(tuple(float(v) for v in wp) for wp in doc["route"]),
                departure=parse_timestamp(doc["departure"]),
                driver_style=style,
                traffic_by_hour={int(h): float(c) for h, c in doc.get("traffic_by_hour", {}).items()},
                weather_timeline=tuple(sorted(timeline, key=lambda w: w[0])),
                idle_stops=tuple(IdleStop(**s) for s in doc.get("idle_stops", [])),
                fuel_model=FuelModel(**doc.get("fuel_model", {})),
                **options,
            )
        except InvalidProfile:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidProfile(f"bad generator profile: {exc!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "GeneratorProfile":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidProfile(f"{path}: invalid JSON ({exc.msg})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        s = self.driver_style
        return {
            "route": [list(wp) for wp in self.route],
            "departure": format_timestamp(self.departure),
            "driver_style": {
                "name": s.name,
                "cruise_speed": s.cruise_speed,
                "response": s.response,
                "speed_noise": s.speed_noise,
                "accel_noise": s.accel_noise,
                "switch_minutes": s.switch_minutes,
            },
            "traffic_by_hour": {str(h): c for h, c in sorted(self.traffic_by_hour.items())},
            "weather_timeline": [
                {"from": format_timestamp(t), "descriptor": w.value} for t, w in self.weather_timeline
            ],
            "idle_stops": [
                {"at_minute": s.at_minute, "duration_minutes": s.duration_minutes}
                for s in self.idle_stops
            ],
            "fuel_model": vars(self.fuel_model).copy(),
            "cadence_seconds": self.cadence_seconds,
            "jitter_seconds": self.jitter_seconds,
            "utc_offset_hours": self.utc_offset_hours,
            "initial_fuel": self.initial_fuel,
            "max_speed": self.max_speed,
            "vehicle_id": self.vehicle_id,
        }

    def shifted(self, delta: dt.timedelta) -> "GeneratorProfile":
        """Same profile with the departure and weather timeline moved by ``delta``."""
        timeline = tuple((t + delta, w) for t, w in self.weather_timeline)
        return replace(self, departure=self.departure + delta, weather_timeline=timeline)

    def weather_at(self, t: dt.datetime) -> WeatherCondition:
        current = WeatherCondition.CLEAR
        for start, cond in self.weather_timeline:
            if start <= t:
                current = cond
        return current


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def initial_bearing(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    x = math.sin(dl) * math.cos(p2)
    y = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)
    return math.degrees(math.atan2(x, y)) % 360.0


def route_length_km(route: Sequence[Sequence[float]]) -> float:
    return sum(haversine_km(a[0], a[1], b[0], b[1]) for a, b in zip(route, route[1:]))


class _RouteCursor:
    def __init__(self, route):
        self.route = route
        self.cum = [0.0]
        for a, b in zip(route, route[1:]):
            self.cum.append(self.cum[-1] + haversine_km(a[0], a[1], b[0], b[1]))
        self.length = self.cum[-1]

    def at(self, km: float) -> tuple[float, float, float, float]:
        """(lat, lon, elevation, bearing) at ``km`` along the route."""
        km = min(max(km, 0.0), self.length)
        seg = 0
        while seg < len(self.route) - 2 and self.cum[seg + 1] <= km:
            seg += 1
        a, b = self.route[seg], self.route[seg + 1]
        span = self.cum[seg + 1] - self.cum[seg]
        f = 0.0 if span == 0 else (km - self.cum[seg]) / span
        lat = a[0] + f * (b[0] - a[0])
        lon = a[1] + f * (b[1] - a[1])
        elev = a[2] + f * (b[2] - a[2])
        return lat, lon, elev, initial_bearing(a[0], a[1], b[0], b[1])


def _style_at(profile: GeneratorProfile, elapsed_min: float, mixed_plan: dict[int, str]) -> DriverStyle:
    style = profile.driver_style
    if style.name != "mixed":
        return style
    block = int(elapsed_min // style.switch_minutes)
    return STYLE_PRESETS[mixed_plan[block]]


def generate_journey(profile: GeneratorProfile, seed: int) -> list[RawRecord]:
    """Drive the route once and return tracker records at a jittered cadence."""
    rng = np.random.default_rng(derive_seed(seed, _GENERATOR_STREAM))
    cursor = _RouteCursor(profile.route)
    fm = profile.fuel_model
    offset = dt.timedelta(hours=profile.utc_offset_hours)
    windows = [
        (
            profile.departure + dt.timedelta(minutes=s.at_minute),
            profile.departure + dt.timedelta(minutes=s.at_minute + s.duration_minutes),
        )
        for s in profile.idle_stops
    ]
    switch_choices = rng.random(4096)
    mixed_plan = {
        i: ("aggressive" if u < 0.5 else "smooth") for i, u in enumerate(switch_choices)
    }

    t = profile.departure
    pos = 0.0
    v = 0.0
    fuel_level = profile.initial_fuel
    lat, lon, elev, bearing = cursor.at(0.0)
    records = [
        RawRecord(t, lon, lat, bearing, elev, 0.0, 0.0, 0.0, True, 27.6, fuel_level, 0.0)
    ]

    while pos < cursor.length:
        dt_s = float(round(profile.cadence_seconds + rng.uniform(-1, 1) * profile.jitter_seconds))
        dt_s = max(dt_s, 1.0)
        t_next = t + dt.timedelta(seconds=dt_s)
        elapsed_min = (t_next - profile.departure).total_seconds() / 60.0
        style = _style_at(profile, elapsed_min, mixed_plan)
        noise_v = rng.normal(0.0, style.speed_noise) if style.speed_noise > 0 else 0.0
        noise_a = rng.normal(0.0, style.accel_noise) if style.accel_noise > 0 else 0.0

        if any(start <= t_next < end for start, end in windows):
            v_new = 0.0
        else:
            local_hour = (t_next + offset).hour
            target = min(style.cruise_speed, profile.traffic_by_hour.get(local_hour, math.inf))
            v_new = v + style.response * (target - v) + noise_v
            v_new += noise_a * dt_s / 3600.0
            v_new = min(max(v_new, 0.0), profile.max_speed)
            if v_new == 0.0 and v == 0.0:
                v_new = min(1.0, target)  # creep away from a stop

        dist = (v + v_new) / 2.0 * dt_s / 3600.0
        if pos + dist >= cursor.length:
            dist = cursor.length - pos
        accel = (v_new - v) / (dt_s / 3600.0)
        pos += dist
        liters = fm.liters(v_new, accel, dt_s)
        fuel_level = max(fuel_level - liters, 0.0)
        lat, lon, elev, bearing = cursor.at(pos)
        battery = float(27.6 + rng.normal(0.0, 0.05))
        records.append(
            RawRecord(
                t_next, lon, lat, bearing, elev, dist, v_new, accel, True, battery, fuel_level, liters
            )
        )
        t, v = t_next, v_new
    return records


def weather_fixture(profile: GeneratorProfile, records: Sequence[RawRecord]) -> dict[str, str]:
    """Fixture entries covering every record's cell and local hour.

    The hour is that of the record's minute rounded to the nearest hour in
    local time, which is how event aggregation queries the provider.
    """
    offset = dt.timedelta(hours=profile.utc_offset_hours)
    out: dict[str, str] = {}
    for r in records:
        minute = r.timestamp.replace(second=0, microsecond=0)
        rounded = minute + offset + dt.timedelta(minutes=30)
        key = fixture_key(r.latitude, r.longitude, rounded.date(), rounded.hour)
        out.setdefault(key, profile.weather_at(r.timestamp).value)
    return out
