"""Application configuration read from a TOML file.

Every field has a default, so an empty file (or no file at all) is valid.
Unknown sections or keys are rejected.  Lookup order for the file: an
explicit path, then ``$ROSVD_CONFIG``, then built-in defaults.

Example with every default spelled out::

    [sim]
    rows = 64
    cols = 64
    fingerprint_rank = 5
    fingerprint_scale = 1.0
    fingerprint_decay = 0.5
    noise_sigma = 2e-4
    temp_coefficient = 0.01
    reference_temp = 25.0
    temp_min = -20.0
    temp_max = 85.0
    quadrant_offsets = [0.30, -0.20, 0.10, -0.25]
    separation_floor = 0.1

    [pipeline]
    k_head = 1
    k_removed = 7
    hash_alg = "sha256"

    [ledger]
    journal = "rosvd-ledger.tsv"
    default_tx_limit = 10

    [suite]
    alpha = 0.01
    tests = ["frequency", "runs", "rank", "fft", "nonoverlapping_template"]
    template = "000000001"

    [paths]
    output_dir = "."

Relative paths are resolved against the directory holding the config file.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import AnalysisError, ConfigError
from .nist import SuiteConfig
from .pipeline import PipelineParams
from .sim import SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_VAR = "ROSVD_CONFIG"


@dataclass(frozen=True)
class LedgerConfig:
    journal: Path = Path("rosvd-ledger.tsv")
    default_tx_limit: int = 10


@dataclass(frozen=True)
class PathsConfig:
    output_dir: Path = Path(".")


@dataclass(frozen=True)
class AppConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    pipeline: PipelineParams = field(default_factory=PipelineParams)
    ledger: LedgerConfig = field(default_factory=LedgerConfig)
    suite: SuiteConfig = field(default_factory=SuiteConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    source: Path | None = None


_SECTIONS = {
    "sim": SimConfig,
    "pipeline": PipelineParams,
    "ledger": LedgerConfig,
    "suite": SuiteConfig,
    "paths": PathsConfig,
}
_TUPLES = {"quadrant_offsets", "tests"}
_PATHS = {"journal", "output_dir"}


def _build(section: str, table, base: Path):
    cls = _SECTIONS[section]
    if not isinstance(table, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(table) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    kwargs = {}
    for key, value in table.items():
        default = getattr(cls(), key)
        if key in _TUPLES:
            if not isinstance(value, list):
                raise ConfigError(f"[{section}] {key} must be an array")
            value = tuple(value)
        elif key in _PATHS:
            if not isinstance(value, str):
                raise ConfigError(f"[{section}] {key} must be a string")
            value = Path(value) if Path(value).is_absolute() else base / value
        elif isinstance(default, bool) or type(value) is bool:
            raise ConfigError(f"[{section}] {key} has the wrong type")
        elif isinstance(default, float) and isinstance(value, int):
            value = float(value)
        elif not isinstance(value, type(default)):
            raise ConfigError(f"[{section}] {key} must be {type(default).__name__}, got {type(value).__name__}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except AnalysisError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def parse_config(text: str, base: Path = Path(".")) -> AppConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    parts = {name: _build(name, table, base) for name, table in doc.items()}
    cfg = AppConfig(**parts)
    if cfg.ledger.default_tx_limit < 0:
        raise ConfigError("[ledger] default_tx_limit must be nonnegative")
    if not 0 < cfg.suite.alpha < 1:
        raise ConfigError("[suite] alpha must lie in (0, 1)")
    cfg.pipeline.check_shape((cfg.sim.rows, cfg.sim.cols))
    return cfg


def load_config(path=None) -> AppConfig:
    """Load ``path``, else ``$ROSVD_CONFIG``, else the defaults.

    A path that was asked for but does not exist is a configuration error.
    """
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        cfg = AppConfig()
        cfg.pipeline.check_shape((cfg.sim.rows, cfg.sim.cols))
        return cfg
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from None
    cfg = parse_config(text, p.parent)
    return AppConfig(cfg.sim, cfg.pipeline, cfg.ledger, cfg.suite, cfg.paths, p)
