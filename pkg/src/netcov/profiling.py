"""Training-time activation profiling: per-unit [low, high] ranges.

``low`` is the minimum and ``high`` the maximum activation a unit showed
over the profiling set. Merging two profiles takes elementwise min/max and
sums the input counts, so profiling can be sharded and recombined in any
order without changing the result.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .inference import ActivationTrace, forward
from .model import GRANULARITIES, Model

PROFILE_MANIFEST = "profile.json"
PROFILE_BIN = "profile.bin"
PROFILE_TAG = "netcov-profile"
PROFILE_VERSION = 1


def _layer_slices(unit_counts) -> list[slice]:
    out = []
    start = 0
    for n in unit_counts:
        out.append(slice(start, start + n))
        start += n
    return out


@dataclass(frozen=True)
class Profile:
    granularity: str
    training_count: int
    unit_counts: tuple[int, ...]
    low: np.ndarray   # float32, one entry per unit, layer-major order
    high: np.ndarray

    def __post_init__(self) -> None:
        if self.granularity not in GRANULARITIES:
            raise ConfigError(f"granularity must be one of {GRANULARITIES}")
        total = sum(self.unit_counts)
        if self.low.shape != (total,) or self.high.shape != (total,):
            raise ConfigError("profile bound arrays do not match the unit counts")
        if self.training_count < 1:
            raise ConfigError("profile needs at least one training input")
        if not bool(np.all(self.low <= self.high)):
            raise ConfigError("profile has low > high")

    @property
    def layer_slices(self) -> list[slice]:
        return _layer_slices(self.unit_counts)

    @property
    def total_units(self) -> int:
        return int(sum(self.unit_counts))

    def merge(self, other: "Profile") -> "Profile":
        if (other.granularity, other.unit_counts) != (self.granularity, self.unit_counts):
            raise ConfigError("cannot merge profiles with different shapes or granularity")
        return Profile(
            self.granularity,
            self.training_count + other.training_count,
            self.unit_counts,
            np.minimum(self.low, other.low),
            np.maximum(self.high, other.high),
        )


class ProfileBuilder:
    """Streaming min/max accumulator over activation traces."""

    def __init__(self, unit_counts, granularity: str):
        self.unit_counts = tuple(int(n) for n in unit_counts)
        self.granularity = granularity
        total = sum(self.unit_counts)
        self._slices = _layer_slices(self.unit_counts)
        self.low = np.full(total, np.inf, dtype=np.float32)
        self.high = np.full(total, -np.inf, dtype=np.float32)
        self.count = 0

    def add(self, trace: ActivationTrace) -> None:
        for sl, vals in zip(self._slices, trace.per_layer):
            np.minimum(self.low[sl], vals, out=self.low[sl])
            np.maximum(self.high[sl], vals, out=self.high[sl])
        self.count += 1

    def merge(self, other: "ProfileBuilder") -> None:
        if (other.granularity, other.unit_counts) != (self.granularity, self.unit_counts):
            raise ConfigError("cannot merge builders with different shapes or granularity")
        np.minimum(self.low, other.low, out=self.low)
        np.maximum(self.high, other.high, out=self.high)
        self.count += other.count

    def build(self) -> Profile:
        if self.count == 0:
            raise ConfigError("profiling saw no training inputs")
        low = self.low.copy()
        high = self.high.copy()
        low.flags.writeable = False
        high.flags.writeable = False
        return Profile(self.granularity, self.count, self.unit_counts, low, high)


def profile_dataset(model: Model, inputs: np.ndarray, granularity: str = "neuron") -> Profile:
    if len(inputs) == 0:
        raise ConfigError("cannot profile an empty training set")
    builder = ProfileBuilder(model.unit_counts(granularity), granularity)
    for i in range(len(inputs)):
        _, trace = forward(model, inputs[i], granularity, input_id=i)
        builder.add(trace)
    return builder.build()


@dataclass(frozen=True)
class SectionTable:
    """KMNC binning: K equal-width sections of each unit's [low, high].

    Section k covers [low + k*w, low + (k+1)*w) with the last section closed
    on the right, so an activation exactly at ``high`` lands in section K-1.
    A degenerate unit (low == high) keeps K obligations but only a value
    exactly equal to the bound can hit one, and it lands in section K-1 by
    the same right-edge rule.
    """

    k: int
    low: np.ndarray       # float64
    high: np.ndarray      # float64
    width: np.ndarray     # float64, (high - low) / k
    degenerate: np.ndarray  # bool

    @classmethod
    def from_profile(cls, profile: Profile, k: int) -> "SectionTable":
        if k < 1:
            raise ConfigError(f"section count must be >= 1, got {k}")
        low = profile.low.astype(np.float64)
        high = profile.high.astype(np.float64)
        width = (high - low) / k
        return cls(int(k), low, high, width, high == low)

    def section_of(self, values: np.ndarray, sl: slice):
        """Return ``(in_range, section)`` arrays for one layer's unit values."""
        a = values.astype(np.float64)
        lo = self.low[sl]
        hi = self.high[sl]
        deg = self.degenerate[sl]
        in_range = (a >= lo) & (a <= hi)
        section = np.zeros(a.shape, dtype=np.int64)
        normal = in_range & ~deg
        if normal.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                raw = np.floor((a - lo) / self.width[sl])
            section[normal] = np.minimum(raw[normal].astype(np.int64), self.k - 1)
        section[in_range & deg] = self.k - 1
        return in_range, section


def save_profile(profile: Profile, path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    pairs = np.empty((profile.total_units, 2), dtype="<f4")
    pairs[:, 0] = profile.low
    pairs[:, 1] = profile.high
    (out / PROFILE_BIN).write_bytes(pairs.tobytes(order="C"))
    manifest = {
        "format": PROFILE_TAG,
        "version": PROFILE_VERSION,
        "byte_order": "little",
        "dtype": "float32",
        "granularity": profile.granularity,
        "training_count": profile.training_count,
        "unit_counts": list(profile.unit_counts),
    }
    (out / PROFILE_MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out


def load_profile(path) -> Profile:
    root = Path(path)
    mpath = root / PROFILE_MANIFEST
    bpath = root / PROFILE_BIN
    if not mpath.is_file() or not bpath.is_file():
        raise FileNotFoundError(f"{root} does not hold {PROFILE_MANIFEST} + {PROFILE_BIN}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: malformed JSON at byte {exc.pos}: {exc.msg}") from None
    if manifest.get("format") != PROFILE_TAG or int(manifest.get("version", -1)) != PROFILE_VERSION:
        raise FormatError(f"{mpath}: not a {PROFILE_TAG} v{PROFILE_VERSION} manifest")
    unit_counts = tuple(int(n) for n in manifest["unit_counts"])
    total = sum(unit_counts)
    blob = bpath.read_bytes()
    want = total * 2 * 4
    if len(blob) != want:
        raise FormatError(f"{bpath}: expected {want} bytes for {total} units, got {len(blob)}")
    pairs = np.frombuffer(blob, dtype="<f4").reshape(total, 2)
    low = pairs[:, 0].copy()
    high = pairs[:, 1].copy()
    low.flags.writeable = False
    high.flags.writeable = False
    try:
        return Profile(
            str(manifest["granularity"]), int(manifest["training_count"]), unit_counts, low, high
        )
    except ConfigError as exc:
        raise FormatError(f"{root}: {exc}") from None
