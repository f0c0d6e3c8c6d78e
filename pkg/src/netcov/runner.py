"""Orchestration: load inputs, profile, collect, and emit the report bundle.

The default path computes each activation trace once and feeds every
configured criterion from it. ``sequential=True`` instead runs one full
pass over the test set per criterion, which exists only to measure how
much the shared pass saves. Work is split into checkpoint-aligned blocks;
``jobs > 1`` evaluates blocks concurrently and folds the mergeable
collector states back in dataset order, so results are identical for any
job count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .comparison import compare
from .config import RunConfig
from .coverage import NeuronCoverage, criterion_key
from .data import Dataset, load_idx, load_raw
from .errors import ConfigError, InputError
from .inference import predict_labels, trace_dataset
from .mcdc import SIGN_ONLY_VARIANTS, run_mcdc
from .model import Model, load_model
from .profiling import Profile, ProfileBuilder, load_profile, save_profile
from .report import ReportBundle, emit_reports
from .stats import GrowthCurve, checkpoint_marks, summarize


def _load_test_dataset(config: RunConfig) -> Dataset:
    if config.idx_images is not None:
        ds = load_idx(config.idx_images, config.idx_labels, limit=config.test_limit)
    else:
        ds = load_raw(config.test_raw, limit=config.test_limit)
    if len(ds) == 0:
        raise InputError("test dataset is empty")
    return ds


def _load_train_dataset(config: RunConfig) -> Dataset | None:
    if config.train_idx_images is not None:
        return load_idx(config.train_idx_images, config.train_idx_labels,
                        limit=config.train_limit)
    if config.train_raw is not None:
        return load_raw(config.train_raw, limit=config.train_limit)
    return None


def _check_shape(model: Model, ds: Dataset) -> None:
    shape = ds.input_shape
    if shape != model.input_shape and (1,) + shape != model.input_shape:
        raise InputError(
            f"dataset {ds.name!r} inputs {list(shape)} do not match model "
            f"input {list(model.input_shape)}"
        )


def _blocks(marks: list[int]) -> list[tuple[int, int]]:
    out = []
    prev = 0
    for m in marks:
        out.append((prev, m))
        prev = m
    return out


def _map_blocks(work, blocks, jobs: int):
    if jobs == 1 or len(blocks) == 1:
        return [work(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(work, blocks))


def _profile_blocks(model: Model, inputs, granularity: str, marks, jobs: int) -> Profile:
    unit_counts = model.unit_counts(granularity)

    def work(block):
        a, b = block
        builder = ProfileBuilder(unit_counts, granularity)
        for trace in trace_dataset(model, inputs[a:b], granularity, start_id=a):
            builder.add(trace)
        return builder

    builders = _map_blocks(work, _blocks(marks), jobs)
    head = builders[0]
    for other in builders[1:]:
        head.merge(other)
    return head.build()


def _collect_simultaneous(model: Model, inputs, granularity: str, factory, marks,
                          jobs: int, timings: dict):
    """One shared pass: returns (collector, traces, growth points per criterion)."""

    def work(block):
        a, b = block
        t0 = time.perf_counter()
        traces = trace_dataset(model, inputs[a:b], granularity, start_id=a)
        forward_s = time.perf_counter() - t0
        collector = factory()
        for trace in traces:
            collector.observe(trace)
        return traces, collector, forward_s

    results = _map_blocks(work, _blocks(marks), jobs)
    master = factory()
    traces_all = []
    growth = {key: [] for key in master.keys}
    for (traces, collector, forward_s), mark in zip(results, marks):
        master.merge(collector)
        traces_all.extend(traces)
        timings["forward"] = timings.get("forward", 0.0) + forward_s
        for key, pct in master.percents().items():
            growth[key].append((mark, pct))
    return master, traces_all, growth


def _collect_sequential(model: Model, inputs, granularity: str, profile, config: RunConfig,
                        unit_counts, marks, timings: dict):
    """One full pass per criterion; only worthwhile as a timing baseline."""
    instances: list[tuple[str, dict]] = []
    for t in config.nc_thresholds:
        instances.append((criterion_key("nc", t), {"nc_thresholds": (t,)}))
    if profile is not None:
        for k in config.kmnc_k:
            instances.append((criterion_key("kmnc", k), {"kmnc_k": (k,)}))
    for k in config.tknc_k:
        instances.append((criterion_key("tknc", k), {"tknc_k": (k,)}))
    if profile is not None:
        instances.append(("nbc", {"boundary": True}))
        instances.append(("snac", {"boundary": True}))

    merged_results = {}
    growth = {}
    for key, kwargs in instances:
        start = time.perf_counter()
        collector = NeuronCoverage(unit_counts, granularity=granularity, profile=profile,
                                   **kwargs)
        points = {k: [] for k in collector.keys}
        done = 0
        for a, b in _blocks(marks):
            for trace in trace_dataset(model, inputs[a:b], granularity, start_id=a):
                collector.observe(trace)
            done = b
            for k, pct in collector.percents().items():
                points[k].append((done, pct))
        elapsed = time.perf_counter() - start
        results = collector.finalize()
        if kwargs.get("boundary"):
            # a boundary pass fills both nbc and snac; keep only the named one
            results = {key: results[key]}
            points = {key: points[key]}
        merged_results.update(results)
        growth.update(points)
        timings[key] = elapsed
    return merged_results, growth


def run(config: RunConfig):
    """Execute a configured run. Returns ``(bundle, paths)``."""
    config.validate()
    timings: dict[str, float] = {}
    warnings: list[str] = []

    model = load_model(config.model)
    granularity = config.granularity
    unit_counts = model.unit_counts(granularity)

    test_ds = _load_test_dataset(config)
    _check_shape(model, test_ds)
    n_test = len(test_ds)

    mcdc_variants = config.mcdc_variants if config.wants_mcdc else ()
    if config.wants_mcdc and n_test < 2:
        raise ConfigError("MC/DC compares input pairs and needs at least 2 test inputs")

    # Profile: load, compute from the training source, or degrade explicitly.
    stride = config.stride or max(1, -(-n_test // 50))
    test_marks = checkpoint_marks(n_test, stride)

    profile: Profile | None = None
    if config.load_profile is not None:
        profile = load_profile(config.load_profile)
        if profile.granularity != granularity:
            raise ConfigError(
                f"loaded profile granularity {profile.granularity!r} does not match "
                f"--granularity {granularity!r}"
            )
        if profile.unit_counts != unit_counts:
            raise ConfigError("loaded profile does not match this model's unit counts")
    else:
        train_ds = _load_train_dataset(config)
        if train_ds is not None:
            _check_shape(model, train_ds)
            if len(train_ds) == 0:
                raise InputError("training dataset is empty")
            t0 = time.perf_counter()
            train_marks = checkpoint_marks(len(train_ds), max(1, -(-len(train_ds) // 50)))
            profile = _profile_blocks(model, train_ds.inputs, granularity, train_marks,
                                      config.jobs)
            timings["profile"] = time.perf_counter() - t0

    kmnc_k = config.kmnc_k
    boundary = config.wants_neuron_criteria
    if profile is None:
        blockers = []
        if config.wants_neuron_criteria and (config.kmnc_k or boundary):
            blockers.append("KMNC, NBC and SNAC")
        value_variants = tuple(v for v in mcdc_variants if "v" in v)
        if value_variants:
            blockers.append("MC/DC value-change variants "
                            f"({', '.join(value_variants)})")
        if blockers:
            if not config.allow_missing_profile:
                raise ConfigError(
                    f"{'; '.join(blockers)} need a training set or a saved profile; "
                    "pass --input-train/--train-idx-images, --load-profile, or "
                    "--allow-missing-profile to skip them"
                )
            kmnc_k = ()
            boundary = False
            mcdc_variants = tuple(v for v in mcdc_variants if v in SIGN_ONLY_VARIANTS)
            warnings.append(
                "no training set or profile: skipped " + "; ".join(blockers)
            )
            if config.wants_mcdc and not mcdc_variants:
                raise ConfigError(
                    "every requested MC/DC variant needs a profile; nothing left to compute"
                )

    if config.save_profile is not None:
        if profile is None:
            raise ConfigError("--save-profile given but no profile was computed or loaded")
        save_profile(profile, config.save_profile)

    results: dict = {}
    growth_points: dict[str, list[tuple[int, float]]] = {}
    traces = None

    if config.wants_neuron_criteria:
        if config.sequential:
            seq_results, seq_growth = _collect_sequential(
                model, test_ds.inputs, granularity, profile if (kmnc_k or boundary) else None,
                config, unit_counts, test_marks, timings,
            )
            results.update(seq_results)
            growth_points.update(seq_growth)
        else:
            def factory() -> NeuronCoverage:
                return NeuronCoverage(
                    unit_counts, granularity=granularity, profile=profile,
                    nc_thresholds=config.nc_thresholds, kmnc_k=kmnc_k,
                    tknc_k=config.tknc_k, boundary=boundary,
                )

            t0 = time.perf_counter()
            collector, traces, growth_points_new = _collect_simultaneous(
                model, test_ds.inputs, granularity, factory, test_marks, config.jobs, timings,
            )
            timings["coverage_total"] = time.perf_counter() - t0
            results.update(collector.finalize())
            growth_points.update(growth_points_new)
            timings.update({f"observe:{k}": v for k, v in collector.timings.items()})
    if config.sequential and config.wants_neuron_criteria:
        timings["coverage_total"] = sum(
            timings.get(k, 0.0) for k in list(results)
        )

    if mcdc_variants:
        t0 = time.perf_counter()
        if traces is None:
            traces = trace_dataset(model, test_ds.inputs, granularity)
        mcdc_results, mcdc_growth, _ = run_mcdc(
            traces, unit_counts, variants=mcdc_variants, profile=profile,
            vc_ratio=config.vc_ratio, pair_budget=config.pair_budget, seed=config.seed,
            checkpoints=test_marks,
        )
        timings["mcdc"] = time.perf_counter() - t0
        results.update(mcdc_results)
        growth_points.update(mcdc_growth)

    growth = {key: GrowthCurve(key, tuple(points)) for key, points in growth_points.items()}
    stats = {key: summarize(result) for key, result in results.items() if result.total > 0}

    accuracy = None
    if test_ds.labels is not None and model.task == "classification":
        t0 = time.perf_counter()
        _, accuracy = predict_labels(model, test_ds)
        timings["accuracy"] = time.perf_counter() - t0

    comparison = None
    if config.compare_baseline is not None:
        t0 = time.perf_counter()
        baseline = load_raw(config.compare_baseline)
        others = [load_raw(p) for p in config.compare_datasets]
        comparison = compare(
            model, profile, baseline, others, granularity=granularity,
            nc_thresholds=config.nc_thresholds if config.wants_neuron_criteria else (),
            kmnc_k=kmnc_k if config.wants_neuron_criteria else (),
            tknc_k=config.tknc_k if config.wants_neuron_criteria else (),
            boundary=boundary and config.wants_neuron_criteria,
            mcdc_variants=mcdc_variants, vc_ratio=config.vc_ratio,
            pair_budget=config.pair_budget, seed=config.seed,
        )
        timings["comparison"] = time.perf_counter() - t0
        flagged = sorted(k for k, v in comparison.degenerate.items() if v)
        if flagged:
            warnings.append(
                "comparison deltas are all equal for: " + ", ".join(flagged)
            )

    bundle = ReportBundle(
        model_info={
            "name": model.name,
            "task": model.task,
            "input_shape": list(model.input_shape),
            "layer_kinds": [spec.kind for spec in model.layers],
            "relevant_layers": model.describe_relevant(),
            "unit_counts": list(unit_counts),
            "total_units": int(sum(unit_counts)),
        },
        config=config.echo(),
        granularity=granularity,
        results=results,
        stats=stats,
        growth=growth,
        profile_info=None if profile is None else {
            "granularity": profile.granularity,
            "training_count": profile.training_count,
        },
        accuracy=accuracy,
        comparison=comparison,
        timings=timings,
        warnings=warnings,
    )
    paths = emit_reports(bundle, config.outputs)
    return bundle, paths
