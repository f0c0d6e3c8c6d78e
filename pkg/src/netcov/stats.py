"""Per-obligation hit-count statistics and coverage growth curves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coverage import CoverageResult
from .errors import ConfigError, ValidationError


@dataclass(frozen=True)
class ObligationStats:
    """Population statistics over every obligation's hit count, zeros included."""

    min: float
    max: float
    avg: float
    std: float
    var: float


def _flat_counts(result: CoverageResult) -> np.ndarray:
    if isinstance(result.hit_counts, list):
        if not result.hit_counts:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([m.reshape(-1) for m in result.hit_counts])
    return np.asarray(result.hit_counts).reshape(-1)


def summarize(result: CoverageResult) -> ObligationStats:
    counts = _flat_counts(result)
    if counts.size == 0:
        raise ConfigError(f"criterion {result.key} has an empty obligation universe")
    var = float(np.var(counts))
    return ObligationStats(
        min=float(counts.min()),
        max=float(counts.max()),
        avg=float(np.mean(counts)),
        std=math.sqrt(var),
        var=var,
    )


@dataclass(frozen=True)
class GrowthCurve:
    """Coverage percent after each checkpoint of test inputs, dataset order."""

    key: str
    points: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        last_n = 0
        last_pct = -1.0
        for n, pct in self.points:
            if n < last_n:
                raise ValidationError(
                    f"growth checkpoints must ascend, got {n} after {last_n}"
                )
            if pct < last_pct - 1e-9:
                raise ValidationError(
                    f"growth curve for {self.key} decreases at n={n}: {pct} < {last_pct}"
                )
            last_n, last_pct = n, pct

    def final_percent(self) -> float:
        return self.points[-1][1] if self.points else 0.0


def checkpoint_marks(n_inputs: int, stride: int) -> list[int]:
    """Every stride-th input count plus the full set, ascending."""
    if stride < 1:
        raise ConfigError(f"checkpoint stride must be >= 1, got {stride}")
    if n_inputs < 1:
        return []
    marks = list(range(stride, n_inputs + 1, stride))
    if not marks or marks[-1] != n_inputs:
        marks.append(n_inputs)
    return marks
