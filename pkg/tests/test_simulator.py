import datetime as dt
import io
import json
import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecofeedback.config import PipelineConfig
from ecofeedback.errors import InvalidProfile, LengthMismatch
from ecofeedback.simulator import (
    FUEL_TABLE_COLUMNS,
    ContextKey,
    FuelModel,
    GeneratorProfile,
    build_best_index,
    context_key,
    efficiency_gain,
    generate_journey,
    route_length_km,
    simulate_savings,
    weather_fixture,
    write_fuel_table,
)
from ecofeedback.telemetry import MILEAGE_CAP, Label, aggregate_events, split_journeys, telemetry_to_string
from ecofeedback.weather import FixtureWeatherProvider, WeatherCondition

from factories import idle_event, make_event
from oracles import decision_for, hand_savings_fixture

FLAT = [[7.0, 80.0, 10.0], [7.0, 80.4, 10.0]]


def profile(style="smooth", **kw):
    doc = {"route": FLAT, "departure": "2015-05-13T04:30:00Z", "driver_style": style}
    doc.update(kw)
    return GeneratorProfile.from_dict(doc)


def fuel_per_km(records, after_s=300):
    start = records[0].timestamp
    steady = [r for r in records[:-1] if (r.timestamp - start).total_seconds() > after_s]
    return math.fsum(r.fuel_consumed for r in steady) / math.fsum(r.distance for r in steady)


# -- generator ---------------------------------------------------------------


def test_noise_free_driving_matches_closed_form_fuel_model():
    style = {"name": "smooth", "cruise_speed": 70.0, "response": 1.0, "speed_noise": 0.0}
    p = profile(style)
    recs = generate_journey(p, 0)
    assert all(r.speed == 70.0 for r in recs[1:-1])
    assert fuel_per_km(recs, after_s=30) == pytest.approx(p.fuel_model.liters_per_km_at(70.0), rel=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_smooth_driving_burns_less_per_km_than_aggressive(seed):
    smooth, aggressive = profile("smooth"), profile("aggressive")
    s = fuel_per_km(generate_journey(smooth, seed))
    a = fuel_per_km(generate_journey(aggressive, seed))
    fm = smooth.fuel_model
    s_ref = fm.liters_per_km_at(smooth.driver_style.cruise_speed)
    a_ref = fm.liters_per_km_at(aggressive.driver_style.cruise_speed)
    assert s_ref < a_ref
    # Speed and acceleration noise only add fuel on top of steady cruising.
    assert s >= s_ref and a >= a_ref
    assert s < a


def test_fuel_model_terms():
    fm = FuelModel()
    assert fm.liters(55.0, 0.0, 10) == pytest.approx(fm.base_rate * 10)
    assert fm.liters(65.0, 1000.0, 10) == pytest.approx((fm.base_rate + fm.k_v * 10 + fm.k_a * 1000) * 10)
    assert fm.liters(65.0, -1000.0, 10) == pytest.approx((fm.base_rate + fm.k_v * 10) * 10)
    assert fm.liters(0.0, 0.0, 10) == pytest.approx((fm.base_rate + fm.k_v * 55 + fm.idle_rate) * 10)
    assert fm.liters(40.0, 0.0, 10, ignition=False) == 0.0


def test_cadence_and_route_coverage():
    p = profile("mixed")
    recs = generate_journey(p, 1)
    gaps = [(b.timestamp - a.timestamp).total_seconds() for a, b in zip(recs, recs[1:])]
    assert min(gaps) >= 14 and max(gaps) <= 20
    assert 16 <= np.mean(gaps) <= 18
    assert math.fsum(r.distance for r in recs) == pytest.approx(route_length_km(p.route), rel=1e-9)
    assert recs[-1].longitude == pytest.approx(80.4)


def test_fuel_level_tracks_consumption():
    recs = generate_journey(profile("aggressive"), 2)
    burned = math.fsum(r.fuel_consumed for r in recs)
    assert recs[-1].fuel_level == pytest.approx(recs[0].fuel_level - burned, abs=1e-9)


def test_five_minute_idle_stop_yields_consecutive_idling_events():
    p = profile("smooth", idle_stops=[{"at_minute": 10, "duration_minutes": 5}])
    recs = generate_journey(p, 3)
    events = aggregate_events(split_journeys(recs)[0])
    run = best = 0
    for e in events:
        run = run + 1 if e.is_idling else 0
        best = max(best, run)
    assert best >= 4


def test_traffic_cap_limits_speed():
    p = profile("smooth", traffic_by_hour={str(h): 20.0 for h in range(24)})
    recs = generate_journey(p, 0)
    late = [r.speed for r in recs[1:] if (r.timestamp - recs[0].timestamp).total_seconds() > 600]
    assert np.mean(late) == pytest.approx(20.0, abs=2.0)


def test_generation_is_deterministic():
    p = profile("mixed")
    a = telemetry_to_string(generate_journey(p, 5))
    assert a == telemetry_to_string(generate_journey(p, 5))
    assert a != telemetry_to_string(generate_journey(p, 6))


def test_profile_round_trips_through_dict():
    p = GeneratorProfile.from_dict(
        {
            "route": FLAT,
            "departure": "2015-05-13T04:30:00Z",
            "driver_style": {"name": "mixed", "switch_minutes": 4},
            "weather_timeline": [{"from": "2015-05-13T05:00:00Z", "descriptor": "Mist"}],
            "idle_stops": [{"at_minute": 3, "duration_minutes": 2}],
            "utc_offset_hours": 5.5,
        }
    )
    assert GeneratorProfile.from_dict(p.to_dict()) == p


def test_weather_timeline_and_shift():
    p = profile(weather_timeline=[{"from": "2015-05-13T05:00:00Z", "descriptor": "Mist"}])
    t = dt.datetime(2015, 5, 13, 4, 59, tzinfo=dt.timezone.utc)
    assert p.weather_at(t) is WeatherCondition.CLEAR
    assert p.weather_at(t + dt.timedelta(minutes=1)) is WeatherCondition.MIST
    later = p.shifted(dt.timedelta(days=1))
    assert later.weather_at(t + dt.timedelta(days=1, minutes=1)) is WeatherCondition.MIST
    assert later.departure == p.departure + dt.timedelta(days=1)


@pytest.mark.parametrize(
    "changes",
    [
        {"route": [[7.0, 80.0, 1.0]]},
        {"route": [[7.0, 80.0, 1.0], [7.0, 80.0, 1.0]]},
        {"route": [[95.0, 80.0, 1.0], [7.0, 80.1, 1.0]]},
        {"driver_style": "reckless"},
        {"driver_style": {"name": "smooth", "speed_noise": -1}},
        {"driver_style": {"name": "smooth", "response": 0}},
        {"idle_stops": [{"at_minute": -1, "duration_minutes": 2}]},
        {"traffic_by_hour": {"25": 10}},
        {"fuel_model": {"base_rate": -0.1}},
        {"fuel_model": {"turbo": 1}},
        {"jitter_seconds": 20},
        {"departure": "yesterday"},
    ],
)
def test_invalid_profiles_rejected(changes):
    with pytest.raises(InvalidProfile):
        profile(**changes)


def test_profile_missing_route():
    with pytest.raises(InvalidProfile):
        GeneratorProfile.from_dict({"departure": "2015-05-13T04:30:00Z"})


def test_default_profile_loads():
    path = resources.files("ecofeedback.data").joinpath("profile.json")
    p = GeneratorProfile.from_dict(json.loads(path.read_text("utf-8")))
    # The bare CLI chain ingests with the config default, so the two must agree.
    assert p.utc_offset_hours == PipelineConfig().utc_offset_hours
    assert p.driver_style.name == "mixed"


class CountingProvider:
    def __init__(self, inner):
        self.inner, self.misses = inner, 0

    def lookup(self, query):
        got = self.inner.lookup(query)
        self.misses += got is None
        return got


def test_weather_fixture_covers_every_minute():
    p = profile(
        "mixed",
        utc_offset_hours=5.5,
        weather_timeline=[{"from": "2015-05-13T04:30:00Z", "descriptor": "Fog"}],
    )
    recs = generate_journey(p, 4)
    provider = CountingProvider(FixtureWeatherProvider(weather_fixture(p, recs)))
    events = aggregate_events(split_journeys(recs)[0], provider, utc_offset_hours=5.5)
    assert provider.misses == 0
    assert {e.weather for e in events} == {WeatherCondition.FOG}


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("style", ["smooth", "aggressive", "mixed"])
def test_aggregation_conserves_generated_totals(style, seed):
    recs = generate_journey(profile(style, idle_stops=[{"at_minute": 5, "duration_minutes": 3}]), seed)
    events = [e for j in split_journeys(recs) for e in aggregate_events(j)]
    for attr in ("distance", "fuel_consumed"):
        total = math.fsum(getattr(r, attr) for r in recs)
        assert math.fsum(getattr(e, attr) for e in events) == pytest.approx(total, rel=1e-9, abs=1e-12)


# -- best index --------------------------------------------------------------


def efficient(minute, mileage, **kw):
    return make_event(minute, fuel_consumed=0.8 / mileage, label=Label.EFFICIENT, **kw)


def test_index_keeps_the_best_mileage():
    index = build_best_index([efficient(0, 30.0), efficient(1, 45.0)])
    assert list(index.values()) == [pytest.approx(45.0)]


def test_index_skips_inefficient_and_idling_events():
    history = [
        make_event(0, fuel_consumed=0.01, label=Label.INEFFICIENT),
        idle_event(1, label=Label.EFFICIENT),
    ]
    assert build_best_index(history) == {}


def test_empty_history():
    assert build_best_index([]) == {}


def test_index_caps_mileage():
    index = build_best_index([make_event(0, fuel_consumed=1e-6, label=Label.EFFICIENT)])
    assert list(index.values()) == [MILEAGE_CAP]


def test_context_key_quantization():
    e = make_event(0, hour=9, weather=WeatherCondition.MIST, elevation_change=-0.1, location_anchor=(6.925, -79.875))
    assert context_key(e) == ContextKey(9, WeatherCondition.MIST, -1, (693, -7988))
    assert context_key(make_event(0, elevation_change=5.0)).elevation_bin == 1
    assert context_key(make_event(0, elevation_change=4.999)).elevation_bin == 0


# -- savings -----------------------------------------------------------------


def test_no_inefficient_decisions_changes_nothing():
    events = [make_event(i) for i in range(5)]
    report = simulate_savings(events, [decision_for(e, Label.EFFICIENT) for e in events], {})
    assert report.efficiency_gain_percent == 0.0
    assert report.adjusted_total_fuel == report.actual_total_fuel
    assert report.substitutions == ()


def test_single_substitution_arithmetic():
    bad = make_event(0, distance=1.0, fuel_consumed=0.1)
    rest = [make_event(i, distance=1.0, fuel_consumed=0.05) for i in (1, 2)]
    events = [bad] + rest
    decisions = [decision_for(bad, Label.INEFFICIENT)] + [decision_for(e, Label.EFFICIENT) for e in rest]
    report = simulate_savings(events, decisions, {context_key(bad): 20.0})
    assert report.per_event[0].adjusted_fuel == pytest.approx(0.05)
    assert [r.adjusted_fuel for r in report.per_event[1:]] == [0.05, 0.05]
    assert report.efficiency_gain_percent == pytest.approx(100 * (0.2 / 0.15 - 1))


def test_hand_built_journey_matches_manual_substitution():
    events, decisions, index, expected_fuel, gain = hand_savings_fixture()
    report = simulate_savings(events, decisions, index)
    assert [r.adjusted_fuel for r in report.per_event] == pytest.approx(expected_fuel, abs=1e-12)
    assert report.efficiency_gain_percent == pytest.approx(gain, abs=1e-9)
    assert report.unmatched_count == 4
    kinds = [s.to_dict()["kind"] for s in report.substitutions]
    assert kinds.count("idling") == 4 and kinds.count("historical_best") == 4


def test_length_mismatch():
    events = [make_event(i) for i in range(3)]
    decisions = [decision_for(e, Label.EFFICIENT) for e in events]
    with pytest.raises(LengthMismatch):
        simulate_savings(events, decisions[:2], {})
    with pytest.raises(LengthMismatch):
        simulate_savings(events, decisions[::-1], {})


def test_gain_degenerate_cases():
    assert efficiency_gain(0.0, 1.0, 0.5) == 0.0
    assert efficiency_gain(1.0, 0.0, 0.0) == 0.0
    assert efficiency_gain(1.0, 0.5, 0.0) is None
    assert efficiency_gain(2.0, 0.2, 0.1) == pytest.approx(100.0)


event_spec = st.tuples(
    st.booleans(),  # idling
    st.floats(0.05, 2.0),  # distance
    st.floats(0.005, 0.3),  # fuel
    st.sampled_from([Label.EFFICIENT, Label.INEFFICIENT]),
    st.integers(0, 3),  # cell
    st.one_of(st.none(), st.floats(1.0, 40.0)),  # best mileage for the cell
)


@settings(max_examples=300, deadline=None)
@given(st.lists(event_spec, min_size=1, max_size=25))
def test_savings_properties(specs):
    events, decisions, index = [], [], {}
    for i, (idle, dist, fuel, verdict, cell, best) in enumerate(specs):
        anchor = (6.9 + 0.05 * cell, 79.9)
        e = idle_event(i, fuel_consumed=fuel, location_anchor=anchor) if idle else make_event(
            i, distance=dist, fuel_consumed=fuel, location_anchor=anchor
        )
        if best is not None:
            index[context_key(e)] = best
        events.append(e)
        decisions.append(decision_for(e, verdict))
    report = simulate_savings(events, decisions, index)
    assert report.adjusted_total_fuel <= report.actual_total_fuel + 1e-12
    assert report.actual_distance == math.fsum(e.distance for e in events)
    assert [r.event for r in report.per_event] == events
    for r in report.per_event:
        assert r.adjusted_fuel <= r.actual_fuel
    if not report.substitutions:
        assert report.adjusted_total_fuel == report.actual_total_fuel
    gain = report.efficiency_gain_percent
    assert gain is None or gain >= 0


def test_fuel_table_columns():
    events, decisions, index, expected_fuel, _ = hand_savings_fixture()
    buf = io.StringIO()
    write_fuel_table(simulate_savings(events, decisions, index), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(FUEL_TABLE_COLUMNS)
    assert len(lines) == 21
    assert float(lines[2].split(",")[-1]) == pytest.approx(expected_fuel[1])


def test_report_to_dict():
    events, decisions, index, _, gain = hand_savings_fixture()
    d = simulate_savings(events, decisions, index).to_dict()
    assert d["efficiency_gain_percent"] == pytest.approx(gain)
    assert len(d["substitutions"]) == 8
