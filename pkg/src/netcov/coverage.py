"""Single-pass mergeable collectors for the per-input coverage criteria.

NC, KMNC, TKNC, NBC and SNAC all read the same activation trace, so one
pass over the test set can feed every configured criterion at once. Each
criterion keeps an int64 hit count per obligation; a hit counts once per
test input. Merging two collector states is obligation-wise addition,
which makes sharded runs associative, commutative and bit-deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ConfigError, InputError
from .inference import ActivationTrace
from .profiling import Profile, SectionTable, _layer_slices


def format_num(x) -> str:
    """Canonical short spelling for numeric criterion parameters."""
    return format(float(x), "g")


def criterion_key(family: str, param=None) -> str:
    return family if param is None else f"{family}@{format_num(param)}"


@dataclass(frozen=True)
class Obligation:
    """One coverage obligation. ``section`` is used by KMNC only."""

    criterion: str
    layer: int
    unit: int
    section: int | None = None


@dataclass(frozen=True)
class CoverageResult:
    key: str
    family: str
    params: dict
    total: int
    covered: int
    percent: float
    unit_counts: tuple[int, ...]
    hit_counts: object = field(repr=False)  # ndarray, or list of matrices for mcdc

    def rows(self) -> Iterator[tuple[str, int, int, int | str, int]]:
        """Flatten hit counts to (criterion, layer, unit, section, hit_count) rows."""
        slices = _layer_slices(self.unit_counts)
        if self.family in ("nc", "tknc", "snac"):
            for layer, sl in enumerate(slices):
                seg = self.hit_counts[sl]
                for unit in range(len(seg)):
                    yield self.key, layer, unit, "", int(seg[unit])
        elif self.family == "kmnc":
            for layer, sl in enumerate(slices):
                seg = self.hit_counts[sl]
                for unit in range(seg.shape[0]):
                    for section in range(seg.shape[1]):
                        yield self.key, layer, unit, section, int(seg[unit, section])
        elif self.family == "nbc":
            for side, label in ((0, "nbc_lower"), (1, "nbc_upper")):
                for layer, sl in enumerate(slices):
                    seg = self.hit_counts[side, sl]
                    for unit in range(len(seg)):
                        yield label, layer, unit, "", int(seg[unit])
        elif self.family == "mcdc":
            # For pair obligations the unit column holds the condition unit
            # and the section column holds the decision unit of the next
            # coverage-relevant layer.
            for pair_idx, mat in enumerate(self.hit_counts):
                for i in range(mat.shape[0]):
                    for j in range(mat.shape[1]):
                        yield self.key, pair_idx, i, j, int(mat[i, j])
        else:  # pragma: no cover
            raise ConfigError(f"unknown criterion family {self.family!r}")


def _covered(arr) -> int:
    if isinstance(arr, list):
        return int(sum(np.count_nonzero(m) for m in arr))
    return int(np.count_nonzero(arr))


def _percent(covered: int, total: int) -> float:
    return 100.0 * covered / total if total else 0.0


class NeuronCoverage:
    """Hit-count state for the five per-input criteria.

    Construct with the criterion parameters to track; ``observe`` consumes
    one trace and updates every configured criterion. KMNC, NBC and SNAC
    need a profile whose granularity and unit counts match the traces.
    """

    def __init__(self, unit_counts, *, granularity: str, profile: Profile | None = None,
                 nc_thresholds=(), kmnc_k=(), tknc_k=(), boundary: bool = False):
        self.unit_counts = tuple(int(n) for n in unit_counts)
        if not self.unit_counts or any(n < 1 for n in self.unit_counts):
            raise ConfigError(f"unit counts must be positive, got {self.unit_counts}")
        self.granularity = granularity
        self.total_units = sum(self.unit_counts)
        self.slices = _layer_slices(self.unit_counts)
        self.profile = profile

        self.nc_thresholds = tuple(float(t) for t in nc_thresholds)
        for t in self.nc_thresholds:
            if not (0.0 <= t < 1.0):
                raise ConfigError(f"NC threshold must lie in [0, 1), got {t}")
        self.kmnc_k = tuple(int(k) for k in kmnc_k)
        self.tknc_k = tuple(int(k) for k in tknc_k)
        for k in self.kmnc_k + self.tknc_k:
            if k < 1:
                raise ConfigError(f"section/top-k counts must be >= 1, got {k}")
        self.boundary = bool(boundary)

        if self.kmnc_k or self.boundary:
            if profile is None:
                raise ConfigError("KMNC, NBC and SNAC need an activation profile")
            if profile.granularity != granularity:
                raise ConfigError(
                    f"profile granularity {profile.granularity!r} does not match run "
                    f"granularity {granularity!r}"
                )
            if profile.unit_counts != self.unit_counts:
                raise ConfigError("profile unit counts do not match the model units")

        self._sections = {k: SectionTable.from_profile(profile, k) for k in self.kmnc_k} \
            if self.kmnc_k else {}

        self.state: dict[str, np.ndarray] = {}
        self._keys: list[str] = []
        for t in self.nc_thresholds:
            self._add_state(criterion_key("nc", t), np.zeros(self.total_units, dtype=np.int64))
        for k in self.kmnc_k:
            self._add_state(criterion_key("kmnc", k),
                            np.zeros((self.total_units, k), dtype=np.int64))
        for k in self.tknc_k:
            self._add_state(criterion_key("tknc", k), np.zeros(self.total_units, dtype=np.int64))
        if self.boundary:
            self._add_state("nbc", np.zeros((2, self.total_units), dtype=np.int64))
            self._add_state("snac", np.zeros(self.total_units, dtype=np.int64))
        if not self._keys:
            raise ConfigError("no criteria configured")

        self.inputs_seen = 0
        self.timings = {key: 0.0 for key in self._keys}

    def _add_state(self, key: str, arr: np.ndarray) -> None:
        if key in self.state:
            raise ConfigError(f"criterion {key} configured twice")
        self.state[key] = arr
        self._keys.append(key)

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(self._keys)

    def universe(self) -> dict[str, int]:
        """Obligation totals per configured criterion."""
        totals = {}
        for t in self.nc_thresholds:
            totals[criterion_key("nc", t)] = self.total_units
        for k in self.kmnc_k:
            totals[criterion_key("kmnc", k)] = self.total_units * k
        for k in self.tknc_k:
            totals[criterion_key("tknc", k)] = self.total_units
        if self.boundary:
            totals["nbc"] = 2 * self.total_units
            totals["snac"] = self.total_units
        return totals

    def obligations(self) -> Iterator[Obligation]:
        for t in self.nc_thresholds:
            key = criterion_key("nc", t)
            for layer, n in enumerate(self.unit_counts):
                for unit in range(n):
                    yield Obligation(key, layer, unit)
        for k in self.kmnc_k:
            key = criterion_key("kmnc", k)
            for layer, n in enumerate(self.unit_counts):
                for unit in range(n):
                    for section in range(k):
                        yield Obligation(key, layer, unit, section)
        for k in self.tknc_k:
            key = criterion_key("tknc", k)
            for layer, n in enumerate(self.unit_counts):
                for unit in range(n):
                    yield Obligation(key, layer, unit)
        if self.boundary:
            for label in ("nbc_lower", "nbc_upper"):
                for layer, n in enumerate(self.unit_counts):
                    for unit in range(n):
                        yield Obligation(label, layer, unit)
            for layer, n in enumerate(self.unit_counts):
                for unit in range(n):
                    yield Obligation("snac", layer, unit)

    def _check_trace(self, trace: ActivationTrace) -> None:
        if len(trace.per_layer) != len(self.unit_counts):
            raise InputError(
                f"trace has {len(trace.per_layer)} layers, collector expects "
                f"{len(self.unit_counts)}"
            )
        for i, (vals, n) in enumerate(zip(trace.per_layer, self.unit_counts)):
            if len(vals) != n:
                raise InputError(f"trace layer {i} has {len(vals)} units, expected {n}")

    # Family observers. Each reads one trace and bumps one criterion's counts;
    # ``observe`` composes them and is the per-input entry point.

    def observe_nc(self, trace: ActivationTrace, threshold: float) -> None:
        key = criterion_key("nc", threshold)
        arr = self.state[key]
        # scaled activations are float32, so compare at float32 precision
        t = np.float32(threshold)
        for sl, raw, scaled in zip(self.slices, trace.per_layer, trace.per_layer_scaled):
            mask = raw > 0 if t == 0.0 else scaled > t
            seg = arr[sl]
            seg[mask] += 1

    def observe_kmnc(self, trace: ActivationTrace, k: int) -> None:
        arr = self.state[criterion_key("kmnc", k)]
        table = self._sections[int(k)]
        for sl, raw in zip(self.slices, trace.per_layer):
            in_range, section = table.section_of(raw, sl)
            units = np.nonzero(in_range)[0]
            if len(units):
                np.add.at(arr[sl], (units, section[units]), 1)

    def observe_tknc(self, trace: ActivationTrace, k: int) -> None:
        arr = self.state[criterion_key("tknc", k)]
        for sl, raw in zip(self.slices, trace.per_layer):
            seg = arr[sl]
            if len(raw) <= k:
                seg += 1
            else:
                top = np.argsort(-raw, kind="stable")[:k]
                seg[top] += 1

    def observe_boundary(self, trace: ActivationTrace) -> None:
        nbc = self.state["nbc"]
        snac = self.state["snac"]
        low, high = self.profile.low, self.profile.high
        for sl, raw in zip(self.slices, trace.per_layer):
            below = raw < low[sl]
            above = raw > high[sl]
            nbc[0, sl][below] += 1
            nbc[1, sl][above] += 1
            snac[sl][above] += 1

    def observe(self, trace: ActivationTrace) -> None:
        self._check_trace(trace)
        self.inputs_seen += 1
        for t in self.nc_thresholds:
            start = time.perf_counter()
            self.observe_nc(trace, t)
            self.timings[criterion_key("nc", t)] += time.perf_counter() - start
        for k in self.kmnc_k:
            start = time.perf_counter()
            self.observe_kmnc(trace, k)
            self.timings[criterion_key("kmnc", k)] += time.perf_counter() - start
        for k in self.tknc_k:
            start = time.perf_counter()
            self.observe_tknc(trace, k)
            self.timings[criterion_key("tknc", k)] += time.perf_counter() - start
        if self.boundary:
            start = time.perf_counter()
            self.observe_boundary(trace)
            elapsed = time.perf_counter() - start
            self.timings["nbc"] += elapsed
            self.timings["snac"] += elapsed

    def merge(self, other: "NeuronCoverage") -> None:
        """Fold another collector's counts into this one (obligation-wise sum)."""
        if self._keys != other._keys or self.unit_counts != other.unit_counts:
            raise ConfigError("cannot merge collectors with different configurations")
        for key in self._keys:
            self.state[key] += other.state[key]
            self.timings[key] += other.timings[key]
        self.inputs_seen += other.inputs_seen

    def copy(self) -> "NeuronCoverage":
        clone = NeuronCoverage(
            self.unit_counts, granularity=self.granularity, profile=self.profile,
            nc_thresholds=self.nc_thresholds, kmnc_k=self.kmnc_k, tknc_k=self.tknc_k,
            boundary=self.boundary,
        )
        for key in self._keys:
            clone.state[key][...] = self.state[key]
        clone.inputs_seen = self.inputs_seen
        clone.timings = dict(self.timings)
        return clone

    def percents(self) -> dict[str, float]:
        totals = self.universe()
        return {key: _percent(_covered(self.state[key]), totals[key]) for key in self._keys}

    def finalize(self) -> dict[str, CoverageResult]:
        totals = self.universe()
        results = {}
        for key in self._keys:
            arr = self.state[key].copy()
            arr.flags.writeable = False
            covered = _covered(arr)
            family = key.split("@", 1)[0]
            params = {}
            if family == "nc":
                params["threshold"] = float(key.split("@", 1)[1])
            elif family in ("kmnc", "tknc"):
                params["k"] = int(key.split("@", 1)[1])
            results[key] = CoverageResult(
                key=key, family=family, params=params, total=totals[key],
                covered=covered, percent=_percent(covered, totals[key]),
                unit_counts=self.unit_counts, hit_counts=arr,
            )
        return results
