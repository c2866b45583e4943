"""Synthetic journeys and the historical-best savings estimate."""

from .generator import (
    STYLE_PRESETS,
    DriverStyle,
    FuelModel,
    GeneratorProfile,
    IdleStop,
    generate_journey,
    haversine_km,
    route_length_km,
    weather_fixture,
)
from .savings import (
    FUEL_TABLE_COLUMNS,
    ContextKey,
    SavingsReport,
    Substitution,
    build_best_index,
    context_key,
    efficiency_gain,
    simulate_savings,
    write_fuel_table,
)

__all__ = [
    "FUEL_TABLE_COLUMNS",
    "STYLE_PRESETS",
    "ContextKey",
    "DriverStyle",
    "FuelModel",
    "GeneratorProfile",
    "IdleStop",
    "SavingsReport",
    "Substitution",
    "build_best_index",
    "context_key",
    "efficiency_gain",
    "generate_journey",
    "haversine_km",
    "route_length_km",
    "simulate_savings",
    "weather_fixture",
    "write_fuel_table",
]
