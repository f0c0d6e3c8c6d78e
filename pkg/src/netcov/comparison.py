"""Normalized coverage differences between datasets and mixture building.

For each criterion, every dataset's delta is its coverage minus the
baseline's, in percentage points. The normalized difference divides each
delta by (max delta - min delta), where the baseline's own zero delta
participates in the max and min; that pins the baseline at 0 and keeps all
values inside [-1, 1]. If every delta is equal the denominator is zero and
all normalized values are reported as 0 with a degeneracy flag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coverage import NeuronCoverage
from .data import Dataset
from .errors import ConfigError, InputError
from .inference import trace_dataset
from .mcdc import VARIANTS, run_mcdc
from .model import Model
from .profiling import Profile


@dataclass(frozen=True)
class ComparisonRun:
    baseline: str
    dataset_names: tuple[str, ...]            # baseline first, then the others in call order
    coverages: dict                           # name -> {criterion key -> percent}
    deltas: dict                              # name -> {criterion key -> percentage points}
    ncoverages: dict                          # name -> {criterion key -> normalized}
    degenerate: dict                          # criterion key -> bool


def normalized_differences(coverages: dict, baseline: str,
                           dataset_names: Sequence[str]) -> ComparisonRun:
    """Pure arithmetic step: coverage percents in, deltas and normalized out."""
    if baseline not in coverages:
        raise ConfigError(f"baseline {baseline!r} missing from coverages")
    keys = sorted(coverages[baseline])
    for name in dataset_names:
        if sorted(coverages[name]) != keys:
            raise ConfigError(f"dataset {name!r} was measured under different criteria")

    deltas = {
        name: {k: coverages[name][k] - coverages[baseline][k] for k in keys}
        for name in dataset_names
    }
    ncoverages: dict = {name: {} for name in dataset_names}
    degenerate = {}
    for k in keys:
        values = [deltas[name][k] for name in dataset_names]
        span = max(values) - min(values)
        degenerate[k] = span == 0.0
        for name in dataset_names:
            v = 0.0 if degenerate[k] else deltas[name][k] / span
            if not -1.0 - 1e-9 <= v <= 1.0 + 1e-9:
                raise AssertionError(f"normalized coverage {v} escaped [-1, 1]")
            ncoverages[name][k] = v
    return ComparisonRun(
        baseline=baseline,
        dataset_names=tuple(dataset_names),
        coverages={n: dict(coverages[n]) for n in dataset_names},
        deltas=deltas,
        ncoverages=ncoverages,
        degenerate=degenerate,
    )


def compare(model: Model, profile: Profile | None, baseline: Dataset,
            others: Sequence[Dataset], *, granularity: str = "neuron",
            nc_thresholds=(), kmnc_k=(), tknc_k=(), boundary: bool = False,
            mcdc_variants: Sequence[str] = (), vc_ratio: float = 0.1,
            pair_budget: int | None = None, seed: int = 0) -> ComparisonRun:
    """Measure every dataset under one criteria configuration and compare."""
    if not others:
        raise ConfigError("comparison needs at least one dataset besides the baseline")
    datasets = [baseline, *others]
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ConfigError(f"comparison dataset names must be unique, got {names}")

    unit_counts = model.unit_counts(granularity)
    coverages: dict = {}
    for ds in datasets:
        if ds.input_shape != model.input_shape:
            raise InputError(
                f"dataset {ds.name!r} inputs {list(ds.input_shape)} do not match model "
                f"input {list(model.input_shape)}"
            )
        traces = trace_dataset(model, ds.inputs, granularity)
        percents: dict[str, float] = {}
        if nc_thresholds or kmnc_k or tknc_k or boundary:
            collector = NeuronCoverage(
                unit_counts, granularity=granularity, profile=profile,
                nc_thresholds=nc_thresholds, kmnc_k=kmnc_k, tknc_k=tknc_k, boundary=boundary,
            )
            for trace in traces:
                collector.observe(trace)
            percents.update(collector.percents())
        if mcdc_variants:
            results, _, _ = run_mcdc(
                traces, unit_counts, variants=mcdc_variants, profile=profile,
                vc_ratio=vc_ratio, pair_budget=pair_budget, seed=seed,
            )
            percents.update({k: r.percent for k, r in results.items()})
        if not percents:
            raise ConfigError("comparison has no criteria configured")
        coverages[ds.name] = percents

    return normalized_differences(coverages, baseline.name, names)


def build_mixture(clean: Dataset, replacement: Dataset, beta_percent: int,
                  seed: int = 0) -> Dataset:
    """Replace beta percent of the clean inputs with replacement inputs.

    The output keeps the clean dataset's size and order; which positions are
    replaced and which donors fill them are drawn without replacement from a
    generator seeded with ``seed``, so a mixture is reproducible.
    """
    beta = int(beta_percent)
    if not 0 <= beta <= 100:
        raise ConfigError(f"beta must be a percentage in [0, 100], got {beta_percent}")
    if clean.input_shape != replacement.input_shape:
        raise InputError(
            f"replacement inputs {list(replacement.input_shape)} do not match clean "
            f"inputs {list(clean.input_shape)}"
        )
    n = len(clean)
    count = n * beta // 100
    if count > len(replacement):
        raise InputError(
            f"mixture needs {count} replacement inputs, pool {replacement.name!r} has "
            f"{len(replacement)}"
        )
    inputs = clean.inputs.copy()
    has_labels = clean.labels is not None and replacement.labels is not None
    labels = clean.labels.copy() if has_labels else None
    if count:
        rng = np.random.default_rng(seed)
        positions = rng.choice(n, size=count, replace=False)
        donors = rng.choice(len(replacement), size=count, replace=False)
        inputs[positions] = replacement.inputs[donors]
        if has_labels:
            labels[positions] = replacement.labels[donors]
    return Dataset(f"{clean.name}+{beta}pct-{replacement.name}", inputs, labels)
