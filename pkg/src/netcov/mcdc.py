"""Sign/value change coverage over pairs of adjacent coverage-relevant layers.

An obligation is a (condition unit, decision unit) pair between consecutive
coverage-relevant layers. An unordered pair of test inputs hits it when the
condition unit shows the variant's change kind, the decision unit shows the
variant's change kind, and no other unit of the condition layer changes
sign. A unit's sign is ``activation > 0``; a value change is a same-sign
move whose magnitude exceeds ``vc_ratio`` times the unit's profiled range.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .coverage import CoverageResult, _covered, _percent
from .errors import ConfigError, InputError
from .inference import ActivationTrace
from .profiling import Profile

VARIANTS = ("ss", "sv", "vs", "vv")
SIGN_ONLY_VARIANTS = ("ss",)


@dataclass(frozen=True)
class PairObligation:
    """Condition unit ``i`` of relevant layer ``pair`` and decision unit ``j``
    of relevant layer ``pair + 1``."""

    pair: int
    i: int
    j: int


def sign_change(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a > 0) != (b > 0)


def value_change(a: np.ndarray, b: np.ndarray, threshold: np.ndarray) -> np.ndarray:
    """Same sign on both sides and |a - b| strictly above the unit threshold."""
    same_sign = (a > 0) == (b > 0)
    delta = np.abs(a.astype(np.float64) - b.astype(np.float64))
    return same_sign & (delta > threshold)


def pair_order(n: int, budget: int | None = None, seed: int = 0) -> np.ndarray:
    """Unordered index pairs (i, j), i < j, sorted so the larger index grows.

    With a budget, a seeded sample of that many distinct pairs is drawn; the
    ordering rule is kept so growth checkpoints stay meaningful.
    """
    if n < 2:
        raise InputError("pair coverage needs at least 2 test inputs")
    total = n * (n - 1) // 2
    if budget is None or budget >= total:
        j = np.repeat(np.arange(1, n), np.arange(1, n))
        i = np.concatenate([np.arange(m) for m in range(1, n)])
        return np.stack([i, j], axis=1)
    if budget < 1:
        raise ConfigError(f"pair budget must be >= 1, got {budget}")
    rng = np.random.default_rng(seed)
    linear = np.sort(rng.choice(total, size=budget, replace=False))
    base = np.arange(n, dtype=np.int64)
    cum = base * (base - 1) // 2  # first linear index whose larger element is j
    j = np.searchsorted(cum, linear, side="right") - 1
    i = linear - cum[j]
    return np.stack([i, j], axis=1)


class McdcCoverage:
    """Hit-count matrices per variant per adjacent relevant-layer pair."""

    def __init__(self, unit_counts, *, variants: Sequence[str] = VARIANTS,
                 profile: Profile | None = None, vc_ratio: float = 0.1,
                 granularity: str | None = None):
        self.unit_counts = tuple(int(n) for n in unit_counts)
        if len(self.unit_counts) < 2:
            raise ConfigError(
                "MC/DC needs at least two coverage-relevant layers to form pairs"
            )
        self.variants = tuple(dict.fromkeys(v.lower() for v in variants))
        if not self.variants:
            raise ConfigError("no MC/DC variants configured")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown MC/DC variant {v!r}; pick from {VARIANTS}")
        if vc_ratio <= 0:
            raise ConfigError(f"vc_ratio must be > 0, got {vc_ratio}")
        self.vc_ratio = float(vc_ratio)

        self.needs_value = any("v" in v for v in self.variants)
        if self.needs_value:
            if profile is None:
                raise ConfigError("MC/DC value-change variants need an activation profile")
            if granularity is not None and profile.granularity != granularity:
                raise ConfigError(
                    f"profile granularity {profile.granularity!r} does not match run "
                    f"granularity {granularity!r}"
                )
            if profile.unit_counts != self.unit_counts:
                raise ConfigError("profile unit counts do not match the model units")
        self.profile = profile

        self.adjacent = [(i, i + 1) for i in range(len(self.unit_counts) - 1)]
        self.state = {
            v: [np.zeros((self.unit_counts[a], self.unit_counts[b]), dtype=np.int64)
                for a, b in self.adjacent]
            for v in self.variants
        }
        if self.needs_value:
            low = profile.low.astype(np.float64)
            high = profile.high.astype(np.float64)
            thr = self.vc_ratio * (high - low)
            slices = []
            start = 0
            for n in self.unit_counts:
                slices.append(thr[start:start + n])
                start += n
            self._thr = slices
        else:
            self._thr = None
        self.pairs_seen = 0

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(f"mcdc_{v}" for v in self.variants)

    def universe(self) -> dict[str, int]:
        total = sum(self.unit_counts[a] * self.unit_counts[b] for a, b in self.adjacent)
        return {key: total for key in self.keys}

    def obligations(self) -> Iterable[PairObligation]:
        for pair_idx, (a, b) in enumerate(self.adjacent):
            for i in range(self.unit_counts[a]):
                for j in range(self.unit_counts[b]):
                    yield PairObligation(pair_idx, i, j)

    def observe_pair(self, t1: ActivationTrace, t2: ActivationTrace) -> None:
        self.pairs_seen += 1
        layers = len(self.unit_counts)
        sc = [sign_change(t1.per_layer[l], t2.per_layer[l]) for l in range(layers)]
        vc = None
        if self.needs_value:
            vc = [value_change(t1.per_layer[l], t2.per_layer[l], self._thr[l])
                  for l in range(layers)]
        for pair_idx, (a, b) in enumerate(self.adjacent):
            n_sign = int(np.count_nonzero(sc[a]))
            if n_sign == 1:
                # Exactly one sign flip in the condition layer: that unit is
                # the condition, every other condition unit held its sign.
                i = int(np.nonzero(sc[a])[0][0])
                if "ss" in self.state:
                    self.state["ss"][pair_idx][i, sc[b]] += 1
                if "sv" in self.state:
                    self.state["sv"][pair_idx][i, vc[b]] += 1
            elif n_sign == 0:
                # No sign flips at all, so value-change conditions qualify.
                if "vs" in self.state and vc[a].any() and sc[b].any():
                    self.state["vs"][pair_idx][np.ix_(vc[a], sc[b])] += 1
                if "vv" in self.state and vc[a].any() and vc[b].any():
                    self.state["vv"][pair_idx][np.ix_(vc[a], vc[b])] += 1

    def merge(self, other: "McdcCoverage") -> None:
        if (self.variants, self.unit_counts, self.vc_ratio) != \
                (other.variants, other.unit_counts, other.vc_ratio):
            raise ConfigError("cannot merge MC/DC collectors with different configurations")
        for v in self.variants:
            for mine, theirs in zip(self.state[v], other.state[v]):
                mine += theirs
        self.pairs_seen += other.pairs_seen

    def percents(self) -> dict[str, float]:
        totals = self.universe()
        return {
            f"mcdc_{v}": _percent(_covered(self.state[v]), totals[f"mcdc_{v}"])
            for v in self.variants
        }

    def finalize(self) -> dict[str, CoverageResult]:
        totals = self.universe()
        results = {}
        for v in self.variants:
            key = f"mcdc_{v}"
            mats = [m.copy() for m in self.state[v]]
            for m in mats:
                m.flags.writeable = False
            covered = _covered(mats)
            results[key] = CoverageResult(
                key=key, family="mcdc",
                params={"variant": v, "vc_ratio": self.vc_ratio} if "v" in v
                else {"variant": v},
                total=totals[key], covered=covered,
                percent=_percent(covered, totals[key]),
                unit_counts=self.unit_counts, hit_counts=mats,
            )
        return results


def run_mcdc(traces: Sequence[ActivationTrace], unit_counts, *,
             variants: Sequence[str] = VARIANTS, profile: Profile | None = None,
             vc_ratio: float = 0.1, pair_budget: int | None = None, seed: int = 0,
             checkpoints: Sequence[int] = ()):
    """Evaluate pair coverage over a test set.

    ``checkpoints`` is an ascending list of input counts; the returned growth
    mapping holds, for each checkpoint n, the coverage over exactly the pairs
    drawn from the first n inputs. Returns ``(results, growth, collector)``.
    """
    n = len(traces)
    collector = McdcCoverage(unit_counts, variants=variants, profile=profile,
                             vc_ratio=vc_ratio)
    pairs = pair_order(n, pair_budget, seed)
    marks = [int(c) for c in checkpoints]
    growth: dict[str, list[tuple[int, float]]] = {key: [] for key in collector.keys}

    def snapshot(count: int) -> None:
        for key, pct in collector.percents().items():
            growth[key].append((count, pct))

    mark_pos = 0
    for i, j in pairs:
        # Pairs arrive sorted by their larger index, so every checkpoint n
        # fires after all pairs within the first n inputs are in.
        while mark_pos < len(marks) and j >= marks[mark_pos]:
            snapshot(marks[mark_pos])
            mark_pos += 1
        collector.observe_pair(traces[int(i)], traces[int(j)])
    while mark_pos < len(marks):
        snapshot(marks[mark_pos])
        mark_pos += 1
    return collector.finalize(), growth, collector
