"""Mamdani fuzzy inference from (speed, acceleration) to a driver action."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import FuzzyConfigError


class ControlAction(str, enum.Enum):
    ACCELERATE = "Accelerate"
    ACCELERATE_SMOOTHLY = "AccelerateSmoothly"
    KEEP_THE_SPEED = "KeepTheSpeed"
    BREAK_SMOOTHLY = "BreakSmoothly"
    BREAK = "Break"
    STOP_ENGINE = "StopEngine"


# Braking side first; StopEngine sits outside the fuzzy scale.
ACTION_SCALE = (
    ControlAction.BREAK,
    ControlAction.BREAK_SMOOTHLY,
    ControlAction.KEEP_THE_SPEED,
    ControlAction.ACCELERATE_SMOOTHLY,
    ControlAction.ACCELERATE,
)
SPEED_TERMS = ("L", "O", "H")
ACCEL_TERMS = ("HD", "A", "HA")


@dataclass(frozen=True)
class Trapezoid:
    """Membership 0 at or below ``a`` and at or above ``d``, 1 on ``[b, c]``."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.a <= self.b <= self.c <= self.d):
            raise FuzzyConfigError(
                f"breakpoints must be non-decreasing, got {[self.a, self.b, self.c, self.d]}"
            )

    @classmethod
    def from_points(cls, points) -> "Trapezoid":
        pts = [float(p) for p in points]
        if len(pts) == 3:
            pts = [pts[0], pts[1], pts[1], pts[2]]
        if len(pts) != 4:
            raise FuzzyConfigError(f"need 3 (triangle) or 4 (trapezoid) breakpoints, got {points}")
        return cls(*pts)

    @classmethod
    def triangle(cls, center: float, half_width: float) -> "Trapezoid":
        return cls(center - half_width, center, center, center + half_width)

    @property
    def center(self) -> float:
        return (self.b + self.c) / 2.0

    def degree(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[(x >= self.b) & (x <= self.c)] = 1.0
        if self.b > self.a:
            m = (x > self.a) & (x < self.b)
            out[m] = (x[m] - self.a) / (self.b - self.a)
        if self.d > self.c:
            m = (x > self.c) & (x < self.d)
            out[m] = (self.d - x[m]) / (self.d - self.c)
        return out if out.ndim else float(out)

    def as_list(self) -> list[float]:
        return [self.a, self.b, self.c, self.d]


@dataclass(frozen=True)
class FuzzyVariable:
    universe: tuple[float, float]
    sets: Mapping[str, Trapezoid]

    def clamp(self, value: float) -> float:
        lo, hi = self.universe
        return min(max(float(value), lo), hi)


@dataclass(frozen=True)
class FuzzyConfig:
    speed: FuzzyVariable
    acceleration: FuzzyVariable
    output_universe: tuple[float, float]
    output_sets: Mapping[ControlAction, Trapezoid]
    rules: Mapping[tuple[str, str], ControlAction]
    samples: int = 1001

    @property
    def grid(self) -> np.ndarray:
        lo, hi = self.output_universe
        return np.linspace(lo, hi, self.samples)

    @classmethod
    def default(cls) -> "FuzzyConfig":
        text = resources.files("ecofeedback.data").joinpath("fuzzy.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "FuzzyConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FuzzyConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "FuzzyConfig":
        try:
            speed = _variable(doc["speed"], SPEED_TERMS, "speed")
            accel = _variable(doc["acceleration"], ACCEL_TERMS, "acceleration")
            out = doc["output"]
            universe = _universe(out["universe"], "output")
            samples = int(out.get("samples", 1001))
            sets = {}
            for name, spec in out["sets"].items():
                action = _action(name, "output set")
                if action is ControlAction.STOP_ENGINE:
                    raise FuzzyConfigError("StopEngine is decided by the idling check, not by fuzzy output")
                if isinstance(spec, Mapping):
                    sets[action] = Trapezoid.triangle(float(spec["center"]), float(spec["half_width"]))
                else:
                    sets[action] = Trapezoid.from_points(spec)
            rules = {}
            for i, r in enumerate(doc["rules"]):
                pair = (r["speed"], r["acceleration"])
                if pair[0] not in SPEED_TERMS or pair[1] not in ACCEL_TERMS:
                    raise FuzzyConfigError(f"rule {i}: unknown terms {pair}")
                if pair in rules:
                    raise FuzzyConfigError(f"rule {i}: duplicate entry for {pair}")
                action = _action(r["action"], f"rule {i}")
                if action not in sets:
                    raise FuzzyConfigError(f"rule {i}: action {action.value} has no output set")
                rules[pair] = action
        except KeyError as exc:
            raise FuzzyConfigError(f"fuzzy config is missing key {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, FuzzyConfigError):
                raise
            raise FuzzyConfigError(f"fuzzy config: {exc}") from None
        config = cls(speed, accel, universe, sets, rules, samples)
        config.validate()
        return config

    def validate(self) -> None:
        """Check rule completeness, input coverage and output-grid sanity."""
        missing = [(s, a) for s in SPEED_TERMS for a in ACCEL_TERMS if (s, a) not in self.rules]
        if missing:
            raise FuzzyConfigError(f"rule table is incomplete; missing {missing}")
        if self.samples < 2:
            raise FuzzyConfigError("output samples must be at least 2")
        for name, var in (("speed", self.speed), ("acceleration", self.acceleration)):
            lo, hi = var.universe
            pts = [lo, hi]
            for t in var.sets.values():
                pts += [p for p in t.as_list() if lo <= p <= hi]
            xs = np.unique(np.concatenate([np.linspace(lo, hi, 20001), pts]))
            cover = np.max([t.degree(xs) for t in var.sets.values()], axis=0)
            if (cover <= 0).any():
                gap = float(xs[np.argmax(cover <= 0)])
                raise FuzzyConfigError(f"{name} sets leave {gap:g} with zero membership in every term")
        grid = self.grid
        for action, t in self.output_sets.items():
            if not np.any(t.degree(grid) > 0):
                raise FuzzyConfigError(f"output set {action.value} has no area on the output universe")


def _universe(raw, where: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in raw)
    if not lo < hi:
        raise FuzzyConfigError(f"{where}: universe must be [low, high] with low < high")
    return lo, hi


def _variable(raw: Mapping, terms: tuple[str, ...], where: str) -> FuzzyVariable:
    universe = _universe(raw["universe"], where)
    sets = {}
    for term in terms:
        if term not in raw["sets"]:
            raise FuzzyConfigError(f"{where}: missing term {term!r}")
        try:
            sets[term] = Trapezoid.from_points(raw["sets"][term])
        except FuzzyConfigError as exc:
            raise FuzzyConfigError(f"{where} set {term!r}: {exc}") from None
    extra = set(raw["sets"]) - set(terms)
    if extra:
        raise FuzzyConfigError(f"{where}: unknown terms {sorted(extra)}; expected {list(terms)}")
    return FuzzyVariable(universe, sets)


def _action(name: str, where: str) -> ControlAction:
    try:
        return ControlAction(name)
    except ValueError:
        valid = [a.value for a in ControlAction]
        raise FuzzyConfigError(f"{where}: unknown action {name!r}; expected one of {valid}") from None


def fuzzify(value: float, variable: FuzzyVariable) -> dict[str, float]:
    """Membership degree of ``value`` (clamped to the universe) in each term."""
    x = variable.clamp(value)
    return {term: float(t.degree(x)) for term, t in variable.sets.items()}


def rule_strengths(speed: float, accel: float, config: FuzzyConfig) -> dict[tuple[str, str], float]:
    mu_s = fuzzify(speed, config.speed)
    mu_a = fuzzify(accel, config.acceleration)
    return {(s, a): min(mu_s[s], mu_a[a]) for (s, a) in config.rules}


def infer(speed: float, accel: float, config: FuzzyConfig) -> np.ndarray:
    """Aggregated output membership sampled on ``config.grid`` (min/clip/max)."""
    grid = config.grid
    aggregated = np.zeros_like(grid)
    fired = False
    for pair, strength in rule_strengths(speed, accel, config).items():
        if strength <= 0:
            continue
        fired = True
        clipped = np.minimum(config.output_sets[config.rules[pair]].degree(grid), strength)
        np.maximum(aggregated, clipped, out=aggregated)
    assert fired, "complete rule base must fire at least one rule"
    return aggregated


def defuzzify(aggregated: np.ndarray, grid: np.ndarray) -> float:
    """Centroid of the sampled output set."""
    total = float(np.sum(aggregated))
    assert total > 0, "aggregated output has zero area"
    return float(np.sum(grid * aggregated) / total)


def to_action(crisp: float, config: FuzzyConfig) -> ControlAction:
    """Action whose output set is highest at ``crisp``; ties go to the lower center."""
    ranked = sorted(config.output_sets.items(), key=lambda kv: kv[1].center)
    best, best_mu = ranked[0][0], -1.0
    for action, t in ranked:
        mu = float(t.degree(crisp))
        if mu > best_mu:
            best, best_mu = action, mu
    return best


def decide_action(speed: float, accel: float, config: FuzzyConfig) -> tuple[ControlAction, float]:
    crisp = defuzzify(infer(speed, accel, config), config.grid)
    return to_action(crisp, config), crisp
