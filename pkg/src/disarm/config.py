"""Run configuration file (YAML or JSON).

Example::

    seed: 13
    runs: 1
    paths:
      manifest: data/manifest.jsonl       # relative paths resolve against this file
      lexicon: data/lexicon.json
      cache: data/contexts.jsonl
      instances: out/instances
      checkpoints: out/checkpoints
      reports: out/reports
    search_client: replay:data/search_replay.json
    encoders: {context: stub, image: stub, harm_text: stub}
    model: {rank: 256}                    # ModelDims overrides
    ct_nonlinear: true
    train: {max_epochs: 30, early_stop_patience: 5}

Command-line flags override the file; the file overrides built-in defaults.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigError
from .model import ModelDims
from .training import TrainConfig

PATH_KEYS = ("manifest", "lexicon", "cache", "instances", "checkpoints", "reports")
TOP_KEYS = {"seed", "runs", "paths", "search_client", "encoders", "model", "ct_nonlinear", "train"}
ENCODER_KEYS = {"context", "image", "harm_text"}


def derive_seed(seed: int, name: str) -> int:
    """Subsystem seed derived from the run seed."""
    h = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(h[:4], "little")


@dataclass
class RunConfig:
    base_dir: Path = Path(".")
    paths: dict[str, Optional[Path]] = field(default_factory=dict)
    search_client: Optional[str] = None
    encoders: dict[str, str] = field(default_factory=lambda: {k: "stub" for k in sorted(ENCODER_KEYS)})
    model: ModelDims = field(default_factory=ModelDims)
    ct_nonlinear: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    runs: int = 1

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path(".")) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(d) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw_paths = d.get("paths") or {}
        bad = set(raw_paths) - set(PATH_KEYS)
        if bad:
            raise ConfigError(f"unknown paths: {sorted(bad)}")
        paths = {k: (base_dir / raw_paths[k]) if raw_paths.get(k) else None for k in PATH_KEYS}
        encoders = {k: "stub" for k in sorted(ENCODER_KEYS)}
        enc = d.get("encoders") or {}
        if set(enc) - ENCODER_KEYS:
            raise ConfigError(f"unknown encoders: {sorted(set(enc) - ENCODER_KEYS)}")
        encoders.update(enc)
        seed = int(d.get("seed", 0))
        train = dict(d.get("train") or {})
        train.setdefault("seed", seed)
        try:
            cfg = cls(base_dir=base_dir, paths=paths, search_client=d.get("search_client"), encoders=encoders,
                      model=ModelDims.from_dict(d.get("model") or {}), ct_nonlinear=bool(d.get("ct_nonlinear", True)),
                      train=TrainConfig.from_dict(train), seed=seed, runs=int(d.get("runs", 1)))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if cfg.runs < 1:
            raise ConfigError("runs must be >= 1")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data, path.parent)

    def with_overrides(self, seed: Optional[int] = None, runs: Optional[int] = None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed, train=replace(cfg.train, seed=seed))
        if runs is not None:
            if runs < 1:
                raise ConfigError("--runs must be >= 1")
            cfg = replace(cfg, runs=runs)
        return cfg

    def path(self, key: str, must_exist: bool = False) -> Path:
        p = self.paths.get(key)
        if p is None:
            raise ConfigError(f"config is missing paths.{key}")
        if must_exist and not p.exists():
            raise ConfigError(f"paths.{key} does not exist: {p}")
        return p

    @property
    def encoder_seed(self) -> int:
        return derive_seed(self.seed, "encoders")

    def run_seed(self, i: int) -> int:
        return self.train.seed + i
