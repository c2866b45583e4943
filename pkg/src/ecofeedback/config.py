"""Pipeline configuration file: paths, stage parameters and the single seed."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .classifier import ForestParams
from .clustering import ClusteringParams
from .errors import ConfigError

PATH_KEYS = (
    "telemetry",
    "weather_fixture",
    "label_rules",
    "fuzzy",
    "model",
    "profile",
    "overrides",
    "events",
    "labeled_events",
    "decisions",
    "history",
    "output_dir",
)

# Fixed names of the files each stage writes under the output directory.
OUTPUT_FILES = {
    "telemetry": "telemetry.csv",
    "weather_fixture": "weather_fixture.json",
    "events": "events.jsonl",
    "ingest_summary": "ingest_summary.json",
    "labeled_events": "labeled_events.jsonl",
    "cluster_report": "cluster_report.csv",
    "model": "model.json",
    "evaluation": "evaluation.json",
    "decisions": "decisions.jsonl",
    "savings": "savings.json",
    "fuel_table": "fuel_by_location.csv",
}


@dataclass(frozen=True)
class PipelineConfig:
    paths: Mapping[str, Path] = field(default_factory=dict)
    clustering: ClusteringParams = ClusteringParams()
    forest: ForestParams = ForestParams()
    folds: int = 10
    journeys: int = 1
    seed: int = 0
    utc_offset_hours: float = 0.0
    gap_threshold_minutes: float = 120.0
    tank_capacity: float = 250.0

    @property
    def output_dir(self) -> Path:
        return self.paths.get("output_dir", Path("out"))

    def output(self, name: str) -> Path:
        return self.output_dir / OUTPUT_FILES[name]

    def path(self, key: str) -> Path | None:
        return self.paths.get(key)

    def with_overrides(self, *, seed: int | None = None, output_dir: str | Path | None = None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed, forest=cfg.forest.with_seed(seed))
        if output_dir is not None:
            cfg = replace(cfg, paths={**cfg.paths, "output_dir": Path(output_dir)})
        return cfg

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: Path = Path(".")) -> "PipelineConfig":
        """Build from a parsed document; relative paths resolve against ``base_dir``."""
        unknown = set(doc) - {
            "paths",
            "clustering",
            "forest",
            "folds",
            "journeys",
            "seed",
            "utc_offset_hours",
            "gap_threshold_minutes",
            "tank_capacity",
        }
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            raw_paths = dict(doc.get("paths", {}))
            bad = set(raw_paths) - set(PATH_KEYS)
            if bad:
                raise ConfigError(f"unknown path keys {sorted(bad)}")
            paths = {k: base_dir / str(v) for k, v in raw_paths.items() if v is not None}
            seed = int(doc.get("seed", 0))
            if seed < 0:
                raise ConfigError("seed must be non-negative")
            cl = dict(doc.get("clustering", {}))
            if "height" in cl and cl["height"] is not None and "k" not in cl:
                cl["k"] = None
            clustering = ClusteringParams(**cl)
            forest = ForestParams(**{**doc.get("forest", {}), "seed": seed})
            cfg = cls(
                paths=paths,
                clustering=clustering,
                forest=forest,
                folds=int(doc.get("folds", 10)),
                journeys=int(doc.get("journeys", 1)),
                seed=seed,
                utc_offset_hours=float(doc.get("utc_offset_hours", 0.0)),
                gap_threshold_minutes=float(doc.get("gap_threshold_minutes", 120.0)),
                tank_capacity=float(doc.get("tank_capacity", 250.0)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad pipeline config: {exc}") from None
        if cfg.journeys < 1 or cfg.gap_threshold_minutes <= 0 or cfg.tank_capacity <= 0:
            raise ConfigError("journeys, gap_threshold_minutes and tank_capacity must be positive")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(doc, path.parent)
