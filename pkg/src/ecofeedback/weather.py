"""Weather descriptors and providers.

A provider answers ``lookup(WeatherQuery)`` with a :class:`WeatherCondition`
or ``None`` when it has nothing for that place and hour. Two providers ship:
:class:`FixtureWeatherProvider` reads a JSON document keyed by
``"lat,lon,date,hour"`` and :class:`HttpWeatherProvider` calls any REST
service whose response contains a descriptor string at a known path.
"""

from __future__ import annotations

import datetime as dt
import enum
import json
import logging
import math
import re
import threading
from concurrent.futures import Future
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

import httpx

logger = logging.getLogger(__name__)


class WeatherCondition(str, enum.Enum):
    SUNNY = "Sunny"
    CLEAR = "Clear"
    PARTLY_CLOUDY = "PartlyCloudy"
    CLOUDY = "Cloudy"
    OVERCAST = "Overcast"
    PATCHY_RAIN_NEARBY = "PatchyRainNearby"
    LIGHT_DRIZZLE = "LightDrizzle"
    LIGHT_RAIN_SHOWER = "LightRainShower"
    MODERATE_RAIN = "ModerateRain"
    MODERATE_OR_HEAVY_RAIN = "ModerateOrHeavyRain"
    MIST = "Mist"
    FOG = "Fog"

    @classmethod
    def parse(cls, text: str) -> "WeatherCondition":
        """Parse a descriptor, ignoring case, spaces, hyphens and underscores.

        ``"partly cloudy"``, ``"Partly-Cloudy"`` and ``"PartlyCloudy"`` all
        map to :attr:`PARTLY_CLOUDY`. Unknown descriptors raise ``ValueError``.
        """
        key = _normalize(text)
        try:
            return _BY_KEY[key]
        except KeyError:
            raise ValueError(f"unknown weather descriptor {text!r}") from None

    @property
    def display(self) -> str:
        return re.sub(r"(?<!^)(?=[A-Z])", " ", self.value)


def _normalize(text: str) -> str:
    return re.sub(r"[\s_\-]+", "", str(text)).lower()


_BY_KEY = {_normalize(c.value): c for c in WeatherCondition}

DEFAULT_SEVERITY_ORDER: tuple[WeatherCondition, ...] = tuple(WeatherCondition)


def severity_rank(
    condition: WeatherCondition,
    order: Sequence[WeatherCondition] | None = None,
) -> int:
    """Ordinal badness of ``condition``: Sunny is 0, Fog is 11 by default."""
    order = DEFAULT_SEVERITY_ORDER if order is None else order
    return list(order).index(condition)


def parse_severity_order(names: Sequence[str]) -> tuple[WeatherCondition, ...]:
    order = tuple(WeatherCondition.parse(n) for n in names)
    if set(order) != set(WeatherCondition) or len(order) != len(WeatherCondition):
        raise ValueError("severity order must list every weather descriptor exactly once")
    return order


@dataclass(frozen=True)
class WeatherQuery:
    latitude: float
    longitude: float
    date: dt.date
    hour: int

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")
        if not 0 <= self.hour <= 23:
            raise ValueError(f"hour out of range: {self.hour}")

    @property
    def cell(self) -> tuple[int, int]:
        """Grid cell in tenths of a degree, rounded half away from zero."""
        return grid_cell(self.latitude, self.longitude)


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def grid_cell(latitude: float, longitude: float, per_degree: int = 10) -> tuple[int, int]:
    return (_round_half_away(latitude * per_degree), _round_half_away(longitude * per_degree))


class WeatherProvider(Protocol):
    def lookup(self, query: WeatherQuery) -> WeatherCondition | None: ...


class NullWeatherProvider:
    """Provider that never has data; every event gets the fallback descriptor."""

    def lookup(self, query: WeatherQuery) -> WeatherCondition | None:
        return None


def fixture_key(latitude: float, longitude: float, date: dt.date, hour: int) -> str:
    lat, lon = grid_cell(latitude, longitude)
    return f"{lat / 10:.1f},{lon / 10:.1f},{date.isoformat()},{hour}"


class FixtureWeatherProvider:
    """Weather looked up from a static mapping of ``"lat,lon,date,hour"`` keys.

    Keys are normalized to the 0.1 degree grid at load time, so a fixture
    written as ``"6.90,79.90,2015-05-13,17"`` answers any query whose
    coordinates round to that cell.
    """

    def __init__(self, entries: Mapping[str, str]):
        table: dict[tuple[tuple[int, int], dt.date, int], WeatherCondition] = {}
        for raw_key, descriptor in entries.items():
            parts = [p.strip() for p in str(raw_key).split(",")]
            if len(parts) != 4:
                raise ValueError(f"bad fixture key {raw_key!r}; expected 'lat,lon,date,hour'")
            lat, lon = float(parts[0]), float(parts[1])
            date = dt.date.fromisoformat(parts[2])
            hour = int(parts[3])
            if not 0 <= hour <= 23:
                raise ValueError(f"bad hour in fixture key {raw_key!r}")
            table[(grid_cell(lat, lon), date, hour)] = WeatherCondition.parse(descriptor)
        self._table = table

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureWeatherProvider":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError(f"{path}: weather fixture must be a JSON object")
        return cls(doc)

    def __len__(self) -> int:
        return len(self._table)

    def lookup(self, query: WeatherQuery) -> WeatherCondition | None:
        return self._table.get((query.cell, query.date, query.hour))


class HttpWeatherProvider:
    """Generic REST weather lookup.

    ``field_path`` is a dotted path into the JSON response; integer segments
    index lists and the literal segment ``{hour}`` is replaced by the query
    hour, e.g. ``"data.weather.0.hourly.{hour}.weatherDesc.0.value"``.
    Responses are cached per (cell, date, hour) and concurrent identical
    queries share a single request. Failures of any kind yield ``None``.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        *,
        field_path: str,
        key_param: str = "key",
        extra_params: Mapping[str, Any] | None = None,
        timeout: float = 5.0,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url
        self.api_key = api_key
        self.field_path = field_path
        self.key_param = key_param
        self.extra_params = dict(extra_params or {})
        self.timeout = timeout
        self._client = client or httpx.Client(timeout=timeout)
        self._lock = threading.Lock()
        self._cache: dict[tuple, Future] = {}
        self.requests_made = 0

    def lookup(self, query: WeatherQuery) -> WeatherCondition | None:
        key = (query.cell, query.date, query.hour)
        with self._lock:
            fut = self._cache.get(key)
            owner = fut is None
            if owner:
                fut = Future()
                self._cache[key] = fut
        if owner:
            try:
                fut.set_result(self._fetch(query))
            except BaseException as exc:
                fut.set_exception(exc)
                with self._lock:
                    self._cache.pop(key, None)
                raise
        return fut.result()

    def _fetch(self, query: WeatherQuery) -> WeatherCondition | None:
        lat, lon = query.cell
        params = dict(self.extra_params)
        params.update({"q": f"{lat / 10:.1f},{lon / 10:.1f}", "date": query.date.isoformat()})
        if self.api_key is not None:
            params[self.key_param] = self.api_key
        with self._lock:
            self.requests_made += 1
        try:
            resp = self._client.get(self.base_url, params=params, timeout=self.timeout)
            resp.raise_for_status()
            value = extract_path(resp.json(), self.field_path, hour=query.hour)
            return WeatherCondition.parse(value)
        except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
            logger.warning("weather lookup failed for %s: %s", query, exc)
            return None


def extract_path(doc: Any, path: str, hour: int | None = None) -> Any:
    node = doc
    for segment in path.split("."):
        if segment == "{hour}":
            segment = str(hour)
        if isinstance(node, list):
            node = node[int(segment)]
        else:
            node = node[segment]
    return node
