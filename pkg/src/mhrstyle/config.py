"""Run configuration: one JSON file plus a root seed reproduces a run."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigurationError
from .policy import NetConfig
from .population import PopulationConfig
from .trainer import OptConfig


@dataclass(frozen=True)
class AnalysisConfig:
    probe_size: int = 4096
    seen_queries: int = 32
    consistency_players: int = 16
    consistency_splits: int = 4
    merge_pairs: int = 20
    interp_pairs: int = 10
    interp_lambdas: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    interp_games: int = 200
    round_robin_pool: int = 16
    round_robin_games: int = 20
    steer_attributes: tuple = ("aggression", "kick_rate")
    steer_threshold_std: float = 1.5
    steer_players: int = 32
    steer_strength: float = 1.0


SECTIONS = {"population": PopulationConfig, "net": NetConfig, "opt": OptConfig, "analysis": AnalysisConfig}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 7
    population: PopulationConfig = field(default_factory=PopulationConfig)
    net: NetConfig = field(default_factory=NetConfig)
    opt: OptConfig = field(default_factory=OptConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {"seed", *SECTIONS}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        for name, klass in SECTIONS.items():
            if name not in d:
                continue
            sect = d[name]
            if not isinstance(sect, dict):
                raise ConfigurationError(f"config section {name!r} must be an object")
            allowed = {f.name: f for f in fields(klass)}
            bad = set(sect) - set(allowed)
            if bad:
                raise ConfigurationError(f"unknown keys in {name!r}: {sorted(bad)}")
            vals = {k: tuple(v) if isinstance(v, list) else v for k, v in sect.items()}
            try:
                kw[name] = klass(**vals)
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"invalid {name!r} section: {e}") from e
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"malformed config {path}: {e}") from e
        if not isinstance(d, dict):
            raise ConfigurationError("config root must be an object")
        return cls.from_dict(d)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed))
