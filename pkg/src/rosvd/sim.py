"""Statistical stand-in for a ring-oscillator entropy source.

A simulated device carries a low-rank latent fingerprint (die-to-die
variation), four additive placement offsets (intra-die spatial structure) and
a temperature-dependent noise level.  Each sample is::

    response = fingerprint + quadrant offsets + temperature drift + noise

All randomness comes from Philox, a counter-based generator, keyed by a digest
of (seed, purpose, temperature, repetition), so a given sample can be redrawn
in any order and from any thread.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, EnvironmentRangeError, IngestionError

QUADRANTS = ("upper_left", "upper_right", "lower_left", "lower_right")


@dataclass(frozen=True)
class SimConfig:
    """Simulator parameters; frequency values are in arbitrary units.

    ``fingerprint_scale`` is the RMS per-entry amplitude of the strongest
    fingerprint component; further components decay geometrically by
    ``fingerprint_decay``.  ``noise_sigma`` applies at ``reference_temp`` and
    grows by ``temp_coefficient`` per degree of deviation, which also scales
    the fingerprint by ``1 + temp_coefficient * (T - reference_temp)``.
    """

    rows: int = 64
    cols: int = 64
    fingerprint_rank: int = 5
    fingerprint_scale: float = 1.0
    fingerprint_decay: float = 0.5
    noise_sigma: float = 2e-4
    temp_coefficient: float = 0.01
    reference_temp: float = 25.0
    temp_min: float = -20.0
    temp_max: float = 85.0
    quadrant_offsets: tuple[float, float, float, float] = (0.30, -0.20, 0.10, -0.25)
    separation_floor: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "quadrant_offsets", tuple(float(x) for x in self.quadrant_offsets))
        self.validate()

    def validate(self) -> None:
        if self.rows < 2 or self.cols < 2:
            raise ConfigError(f"matrix dimensions must be at least 2x2, got {self.rows}x{self.cols}")
        if not 1 <= self.fingerprint_rank <= min(self.rows, self.cols):
            raise ConfigError(
                f"fingerprint_rank must lie in [1, {min(self.rows, self.cols)}], got {self.fingerprint_rank}"
            )
        if self.noise_sigma < 0 or not math.isfinite(self.noise_sigma):
            raise ConfigError(f"noise_sigma must be finite and nonnegative, got {self.noise_sigma}")
        if not 0 < self.fingerprint_decay <= 1:
            raise ConfigError(f"fingerprint_decay must lie in (0, 1], got {self.fingerprint_decay}")
        if self.fingerprint_scale <= 0:
            raise ConfigError("fingerprint_scale must be positive")
        if len(self.quadrant_offsets) != 4:
            raise ConfigError("quadrant_offsets needs exactly four values")
        if not self.temp_min <= self.reference_temp <= self.temp_max:
            raise ConfigError("reference_temp must lie inside [temp_min, temp_max]")


@dataclass(frozen=True)
class EnvCondition:
    temperature_celsius: float = 25.0
    repetition_index: int = 0

    def __post_init__(self):
        if int(self.repetition_index) != self.repetition_index or self.repetition_index < 0:
            raise EnvironmentRangeError(f"repetition_index must be a nonnegative integer, got {self.repetition_index}")
        if not math.isfinite(self.temperature_celsius):
            raise EnvironmentRangeError("temperature must be finite")


@dataclass(frozen=True, eq=False)
class DeviceModel:
    device_id: str
    intrinsic_pattern: np.ndarray
    quadrant_offsets: tuple[float, float, float, float]
    noise_sigma: float
    temp_coefficient: float
    rng_seed: int
    reference_temp: float = 25.0
    temp_range: tuple[float, float] = (-20.0, 85.0)
    config: SimConfig = field(default_factory=SimConfig, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.intrinsic_pattern.shape

    def quadrant_matrix(self) -> np.ndarray:
        return quadrant_matrix(self.shape, self.quadrant_offsets)

    def same_as(self, other: "DeviceModel") -> bool:
        return (
            self.device_id == other.device_id
            and self.rng_seed == other.rng_seed
            and self.intrinsic_pattern.tobytes() == other.intrinsic_pattern.tobytes()
            and self.quadrant_offsets == other.quadrant_offsets
            and self.noise_sigma == other.noise_sigma
            and self.temp_coefficient == other.temp_coefficient
        )


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    values: np.ndarray
    source_device_id: str
    env: EnvCondition

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def _generator(seed: int, purpose: str, *extra: float) -> np.random.Generator:
    if not 0 <= seed < 2**64:
        raise ConfigError(f"rng_seed must fit in 64 unsigned bits, got {seed}")
    h = hashlib.sha256(b"rosvd-philox\0" + purpose.encode() + b"\0" + struct.pack("<Q", seed))
    for x in extra:
        h.update(struct.pack("<d", float(x)))
    key = int.from_bytes(h.digest()[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def quadrant_matrix(shape: tuple[int, int], offsets) -> np.ndarray:
    """Broadcast four offsets over the quadrants split at the row/col midpoints.

    For odd sizes the extra row (column) belongs to the lower (right) half.
    """
    m, n = shape
    top, left = m // 2, n // 2
    ul, ur, ll, lr = offsets
    out = np.empty((m, n))
    out[:top, :left] = ul
    out[:top, left:] = ur
    out[top:, :left] = ll
    out[top:, left:] = lr
    return out


def _fingerprint(config: SimConfig, rng_seed: int) -> np.ndarray:
    m, n, r = config.rows, config.cols, config.fingerprint_rank
    rng = _generator(rng_seed, "fingerprint", m, n, r)
    left, _ = np.linalg.qr(rng.standard_normal((m, r)))
    right, _ = np.linalg.qr(rng.standard_normal((n, r)))
    weights = config.fingerprint_scale * math.sqrt(m * n) * config.fingerprint_decay ** np.arange(r)
    return (left * weights) @ right.T


def new_device(config: SimConfig, rng_seed: int, device_id: str | None = None) -> DeviceModel:
    config.validate()
    pattern = _fingerprint(config, rng_seed)
    pattern.flags.writeable = False
    return DeviceModel(
        device_id=device_id or f"dev-{rng_seed:016x}",
        intrinsic_pattern=pattern,
        quadrant_offsets=config.quadrant_offsets,
        noise_sigma=config.noise_sigma,
        temp_coefficient=config.temp_coefficient,
        rng_seed=rng_seed,
        reference_temp=config.reference_temp,
        temp_range=(config.temp_min, config.temp_max),
        config=config,
    )


def noise_level(device: DeviceModel, temperature: float) -> float:
    return device.noise_sigma * max(0.0, 1.0 + device.temp_coefficient * abs(temperature - device.reference_temp))


def sample_response(device: DeviceModel, env: EnvCondition | None = None) -> ResponseMatrix:
    env = env or EnvCondition(temperature_celsius=device.reference_temp)
    lo, hi = device.temp_range
    if not lo <= env.temperature_celsius <= hi:
        raise EnvironmentRangeError(f"temperature {env.temperature_celsius} C outside simulator range [{lo}, {hi}]")
    X = device.intrinsic_pattern
    values = X + device.quadrant_matrix()
    dt = env.temperature_celsius - device.reference_temp
    if dt != 0.0:
        values = values + (device.temp_coefficient * dt) * X
    sigma = noise_level(device, env.temperature_celsius)
    if sigma > 0.0:
        rng = _generator(device.rng_seed, "noise", env.temperature_celsius, env.repetition_index)
        values = values + sigma * rng.standard_normal(X.shape)
    return ResponseMatrix(values=values, source_device_id=device.device_id, env=env)


def fingerprint_distance(a: DeviceModel, b: DeviceModel) -> float:
    """Frobenius distance between two fingerprints, normalised by their mean norm."""
    x, y = a.intrinsic_pattern, b.intrinsic_pattern
    scale = 0.5 * (np.linalg.norm(x) + np.linalg.norm(y))
    return float(np.linalg.norm(x - y) / scale) if scale else 0.0


# -- device descriptor files --------------------------------------------------

DEVICE_FORMAT = "rosvd-device"


def save_device(path, device: DeviceModel) -> None:
    """Write a JSON descriptor; the fingerprint is regenerated from the seed on load."""
    doc = {
        "format": DEVICE_FORMAT,
        "version": 1,
        "device_id": device.device_id,
        "rng_seed": device.rng_seed,
        "sim": asdict(device.config),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_device(path) -> DeviceModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read device file {path}: {exc}") from None
    if doc.get("format") != DEVICE_FORMAT:
        raise ConfigError(f"{path} is not a rosvd device descriptor")
    sim = dict(doc["sim"])
    sim["quadrant_offsets"] = tuple(sim["quadrant_offsets"])
    return new_device(SimConfig(**sim), int(doc["rng_seed"]), device_id=doc["device_id"])


# -- measured data ------------------------------------------------------------


@dataclass(frozen=True)
class CsvLayout:
    """How CSV cells map onto ``rows`` x ``cols`` response grids.

    ``records``:
      * ``"grid"`` -- the file holds one or more row-major grids stacked vertically;
      * ``"repetitions"`` -- each CSV row is one repetition of all ``rows*cols`` ROs;
      * ``"ros"`` -- each CSV row is one RO, each column one repetition.
    """

    rows: int
    cols: int
    records: str = "grid"
    device_id: str = "measured"
    temperature_celsius: float = 25.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("layout dimensions must be positive")
        if self.records not in ("grid", "repetitions", "ros"):
            raise ConfigError(f"unknown layout records mode {self.records!r}")


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestionError(f"non-numeric cell {text!r}", row, col) from None
    if not math.isfinite(value):
        raise IngestionError(f"non-finite cell {text!r}", row, col)
    return value


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def ingest_measurements(path, layout: CsvLayout) -> list[ResponseMatrix]:
    """Load measured RO frequencies from CSV into response matrices.

    Row and column numbers in errors are 1-based positions in the file.
    """
    with open(path, newline="") as fh:
        lines = [(i + 1, [c.strip() for c in r]) for i, r in enumerate(csv.reader(fh))]
    lines = [(i, r) for i, r in lines if any(r)]
    if lines and not any(_is_number(c) for c in lines[0][1]):
        lines = lines[1:]
    if not lines:
        raise IngestionError("no numeric rows")

    table = []
    width = len(lines[0][1])
    for lineno, cells in lines:
        if len(cells) != width:
            raise IngestionError(f"shape mismatch: expected {width} cells, found {len(cells)}", lineno)
        table.append([_parse_cell(c, lineno, j + 1) for j, c in enumerate(cells)])
    data = np.array(table)

    m, n = layout.rows, layout.cols
    if layout.records == "grid":
        if width != n:
            raise IngestionError(f"shape mismatch: rows have {width} values, layout wants {n}", lines[0][0])
        if len(data) % m:
            raise IngestionError(f"shape mismatch: {len(data)} rows is not a multiple of {m}", lines[-1][0])
        grids = data.reshape(-1, m, n)
    else:
        per_record = data if layout.records == "repetitions" else data.T
        if per_record.shape[1] != m * n:
            raise IngestionError(
                f"shape mismatch: {per_record.shape[1]} values per record, layout wants {m}x{n}={m * n}",
                lines[0][0],
            )
        grids = per_record.reshape(-1, m, n)

    return [
        ResponseMatrix(
            values=g.copy(),
            source_device_id=layout.device_id,
            env=EnvCondition(layout.temperature_celsius, k),
        )
        for k, g in enumerate(grids)
    ]


def with_overrides(config: SimConfig, **changes) -> SimConfig:
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
