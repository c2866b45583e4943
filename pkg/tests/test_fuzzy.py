import copy
import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecofeedback.errors import FuzzyConfigError
from ecofeedback.fuzzy import (
    ACTION_SCALE,
    ControlAction,
    FuzzyConfig,
    Trapezoid,
    decide_action,
    defuzzify,
    fuzzify,
    infer,
    rule_strengths,
    to_action,
)

from oracles import centroid_fine

A = ControlAction
CFG = FuzzyConfig.default()
DOC = json.loads(resources.files("ecofeedback.data").joinpath("fuzzy.json").read_text("utf-8"))

# Crisp inputs lying fully inside one term.
SPEED = {"L": 5.0, "O": 50.0, "H": 100.0}
ACCEL = {"HD": -5000.0, "A": 0.0, "HA": 5000.0}

PUBLISHED_RULES = [
    ("L", "HD", A.ACCELERATE),
    ("L", "HA", A.ACCELERATE_SMOOTHLY),
    ("O", "HD", A.KEEP_THE_SPEED),
    ("O", "HA", A.KEEP_THE_SPEED),
    ("H", "HD", A.BREAK_SMOOTHLY),
    ("H", "A", A.BREAK),
    ("H", "HA", A.BREAK),
]
COMPLETED_RULES = [("L", "A", A.ACCELERATE_SMOOTHLY), ("O", "A", A.KEEP_THE_SPEED)]


def config_with(**changes):
    doc = copy.deepcopy(DOC)
    for path, value in changes.items():
        node = doc
        *head, last = path.split("__")
        for key in head:
            node = node[key]
        node[last] = value
    return FuzzyConfig.from_dict(doc)


# -- fuzzify -----------------------------------------------------------------


def test_zero_speed_is_fully_low():
    assert fuzzify(0, CFG.speed) == {"L": 1.0, "O": 0.0, "H": 0.0}


def test_ramp_midpoint_is_half():
    assert fuzzify(25, CFG.speed)["L"] == pytest.approx(0.5)


@pytest.mark.parametrize("value,term", [(-40, "L"), (500, "H")])
def test_out_of_universe_inputs_are_clamped(value, term):
    assert fuzzify(value, CFG.speed)[term] == 1.0


def test_acceleration_clamped_too():
    assert fuzzify(-1e9, CFG.acceleration)["HD"] == 1.0


@settings(max_examples=300)
@given(st.floats(-1e6, 1e6))
def test_degrees_in_unit_interval_and_some_term_active(x):
    for var in (CFG.speed, CFG.acceleration):
        mu = fuzzify(x, var)
        assert all(0.0 <= d <= 1.0 for d in mu.values())
        assert max(mu.values()) > 0


@pytest.mark.parametrize("points", [[0, 0, 15, 35], [25, 50, 75], [-3, 1, 1, 9]])
def test_trapezoid_matches_piecewise_formula(points):
    t = Trapezoid.from_points(points)
    a, b, c, d = t.as_list()
    for x in np.linspace(a - 5, d + 5, 301):
        if b <= x <= c:
            ref = 1.0
        elif a < x < b:
            ref = (x - a) / (b - a)
        elif c < x < d:
            ref = (d - x) / (d - c)
        else:
            ref = 0.0
        assert t.degree(x) == pytest.approx(ref)


# -- infer -------------------------------------------------------------------


def active_sets(aggregated, config):
    """Output sets whose shape, clipped at some level, reproduces part of the aggregate."""
    grid = config.grid
    out = {}
    for action, t in config.output_sets.items():
        mu = t.degree(grid)
        inside = mu > 0
        out[action] = float(np.max(aggregated[inside])) if inside.any() else 0.0
    return out


def test_low_speed_harsh_deceleration_fires_only_accelerate():
    strengths = rule_strengths(SPEED["L"], ACCEL["HD"], CFG)
    assert {p: s for p, s in strengths.items() if s > 0} == {("L", "HD"): 1.0}
    agg = infer(SPEED["L"], ACCEL["HD"], CFG)
    assert np.array_equal(agg, CFG.output_sets[A.ACCELERATE].degree(CFG.grid))


def test_high_speed_acceptable_fires_only_break():
    agg = infer(SPEED["H"], ACCEL["A"], CFG)
    assert np.array_equal(agg, CFG.output_sets[A.BREAK].degree(CFG.grid))


def test_half_low_half_optimum_clips_two_sets_at_half():
    cfg = config_with(speed__sets__L=[0, 0, 20, 40], speed__sets__O=[20, 40, 60, 80])
    mu = fuzzify(30, cfg.speed)
    assert mu["L"] == pytest.approx(0.5) and mu["O"] == pytest.approx(0.5)
    agg = infer(30, ACCEL["HD"], cfg)
    grid = cfg.grid
    expected = np.maximum(
        np.minimum(cfg.output_sets[A.ACCELERATE].degree(grid), 0.5),
        np.minimum(cfg.output_sets[A.KEEP_THE_SPEED].degree(grid), 0.5),
    )
    assert np.allclose(agg, expected)
    levels = active_sets(agg, cfg)
    assert levels[A.ACCELERATE] == pytest.approx(0.5)
    assert levels[A.KEEP_THE_SPEED] == pytest.approx(0.5)
    assert agg.max() == pytest.approx(0.5)


def test_infer_samples_output_universe():
    assert len(infer(50, 0, CFG)) == 1001
    assert CFG.grid[0] == 0 and CFG.grid[-1] == 100


# -- defuzzify ---------------------------------------------------------------


def test_centroid_of_symmetric_triangle():
    t = Trapezoid.triangle(50, 20)
    assert defuzzify(t.degree(CFG.grid), CFG.grid) == pytest.approx(50.0, abs=0.1)


def test_centroid_of_clipped_symmetric_set():
    t = Trapezoid.triangle(90, 8)
    agg = np.minimum(t.degree(CFG.grid), 0.6)
    assert defuzzify(agg, CFG.grid) == pytest.approx(90.0, abs=0.5)


def test_centroid_of_two_equal_sets_matches_fine_grid_oracle():
    lo, hi = CFG.output_sets[A.BREAK], CFG.output_sets[A.ACCELERATE]
    agg = np.maximum(np.minimum(lo.degree(CFG.grid), 0.7), np.minimum(hi.degree(CFG.grid), 0.7))
    got = defuzzify(agg, CFG.grid)

    def fn(x):
        return np.maximum(np.minimum(lo.degree(x), 0.7), np.minimum(hi.degree(x), 0.7))

    ref = centroid_fine(fn, 0, 100)
    assert got == pytest.approx(ref, abs=0.5)
    assert got == pytest.approx(50.0, abs=0.5)


@settings(max_examples=200)
@given(st.floats(0, 120), st.floats(-10000, 10000))
def test_centroid_inside_support_of_aggregate(speed, accel):
    agg = infer(speed, accel, CFG)
    crisp = defuzzify(agg, CFG.grid)
    support = CFG.grid[agg > 0]
    assert support[0] - 1e-9 <= crisp <= support[-1] + 1e-9


# -- to_action ---------------------------------------------------------------


@pytest.mark.parametrize(
    "crisp,action", [(90, A.ACCELERATE), (50, A.KEEP_THE_SPEED), (40, A.BREAK_SMOOTHLY), (10, A.BREAK)]
)
def test_to_action_examples(crisp, action):
    assert to_action(crisp, CFG) is action


# -- end to end --------------------------------------------------------------


@pytest.mark.parametrize("speed,accel,action", PUBLISHED_RULES + COMPLETED_RULES)
def test_rule_table_row_reproduced(speed, accel, action):
    assert decide_action(SPEED[speed], ACCEL[accel], CFG)[0] is action


def test_default_rule_table_is_exactly_the_nine_rows():
    assert dict(((s, a), act) for s, a, act in PUBLISHED_RULES + COMPLETED_RULES) == dict(CFG.rules)


def test_increasing_speed_never_moves_toward_accelerate():
    lo, hi = SPEED["L"], SPEED["H"]
    ranks = [ACTION_SCALE.index(decide_action(v, ACCEL["A"], CFG)[0]) for v in np.linspace(lo, hi, 100)]
    assert all(a >= b for a, b in zip(ranks, ranks[1:]))
    assert ranks[0] > ranks[-1]


@settings(max_examples=300)
@given(st.floats(-1e6, 1e6), st.floats(-1e7, 1e7))
def test_fuzzy_path_never_yields_stop_engine(speed, accel):
    action, crisp = decide_action(speed, accel, CFG)
    assert action is not A.STOP_ENGINE
    assert 0 <= crisp <= 100


# -- configuration -----------------------------------------------------------


def test_load_from_file(tmp_path):
    path = tmp_path / "f.json"
    path.write_text(json.dumps(DOC))
    assert FuzzyConfig.load(path).rules == CFG.rules


def test_invalid_json(tmp_path):
    path = tmp_path / "f.json"
    path.write_text("{")
    with pytest.raises(FuzzyConfigError):
        FuzzyConfig.load(path)


def test_incomplete_rule_table():
    doc = copy.deepcopy(DOC)
    doc["rules"] = doc["rules"][:-1]
    with pytest.raises(FuzzyConfigError, match="incomplete"):
        FuzzyConfig.from_dict(doc)


def test_duplicate_rule():
    doc = copy.deepcopy(DOC)
    doc["rules"].append(doc["rules"][0])
    with pytest.raises(FuzzyConfigError, match="duplicate"):
        FuzzyConfig.from_dict(doc)


@pytest.mark.parametrize(
    "changes",
    [
        {"speed__sets__L": [10, 5, 15, 35]},
        {"speed__sets__L": [0, 0, 10, 20]},
        {"speed__sets__O": [1, 2]},
        {"output__universe": [100, 0]},
        {"output__samples": 1},
    ],
)
def test_bad_sets_rejected(changes):
    with pytest.raises(FuzzyConfigError):
        config_with(**changes)


def test_stop_engine_output_set_rejected():
    doc = copy.deepcopy(DOC)
    doc["output"]["sets"]["StopEngine"] = [0, 0, 0, 1]
    with pytest.raises(FuzzyConfigError, match="idling"):
        FuzzyConfig.from_dict(doc)


def test_unknown_action_and_term():
    doc = copy.deepcopy(DOC)
    doc["rules"][0]["action"] = "Honk"
    with pytest.raises(FuzzyConfigError, match="Honk"):
        FuzzyConfig.from_dict(doc)
    doc = copy.deepcopy(DOC)
    doc["speed"]["sets"]["X"] = [0, 1, 2]
    with pytest.raises(FuzzyConfigError, match="unknown terms"):
        FuzzyConfig.from_dict(doc)


def test_missing_key():
    doc = copy.deepcopy(DOC)
    del doc["output"]
    with pytest.raises(FuzzyConfigError, match="missing"):
        FuzzyConfig.from_dict(doc)
