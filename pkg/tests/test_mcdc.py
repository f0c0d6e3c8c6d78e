import numpy as np
import pytest

from netcov.errors import ConfigError, InputError
from netcov.inference import ActivationTrace, trace_dataset
from netcov.mcdc import (VARIANTS, McdcCoverage, pair_order, run_mcdc, sign_change,
                         value_change)
from netcov.profiling import profile_dataset
from netcov.synth import random_dense_model, random_inputs

from oracles import ref_mcdc, ref_pairs, trace_vectors


def _mk_trace(input_id, *layers):
    frozen = []
    for vals in layers:
        a = np.array(vals, dtype=np.float32)
        a.flags.writeable = False
        frozen.append(a)
    return ActivationTrace(input_id=input_id, per_layer=tuple(frozen),
                           per_layer_scaled=tuple(frozen))


def _result_hits(results):
    """Engine results -> {variant: {(pair, i, j): count}} with zero rows dropped."""
    out = {}
    for key, res in results.items():
        variant = key.removeprefix("mcdc_")
        table = {}
        for _, pair_idx, i, j, count in res.rows():
            if count:
                table[(pair_idx, i, j)] = count
        out[variant] = table
    return out


def _bounds(profile):
    slices = profile.layer_slices
    lows = [profile.low[sl] for sl in slices]
    highs = [profile.high[sl] for sl in slices]
    return lows, highs


def test_pair_order_full_enumeration():
    for n in (2, 3, 7, 12):
        got = [tuple(p) for p in pair_order(n)]
        assert got == ref_pairs(n)


def test_pair_order_budget_subset_and_deterministic():
    full = set(ref_pairs(30))
    a = pair_order(30, budget=50, seed=4)
    b = pair_order(30, budget=50, seed=4)
    c = pair_order(30, budget=50, seed=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    pairs = [tuple(p) for p in a]
    assert len(pairs) == 50
    assert len(set(pairs)) == 50  # sampling without replacement
    assert set(pairs) <= full
    # canonical order: by larger index, then smaller
    assert pairs == sorted(pairs, key=lambda p: (p[1], p[0]))


def test_pair_order_budget_at_least_total_is_full():
    assert np.array_equal(pair_order(6, budget=100), pair_order(6))


def test_sign_and_value_change_primitives():
    assert sign_change(np.float32(-1.0), np.float32(2.0))
    assert not sign_change(np.float32(1.0), np.float32(2.0))
    assert not sign_change(np.float32(0.0), np.float32(-1.0))  # 0 is inactive
    assert sign_change(np.float32(0.0), np.float32(0.5))
    assert value_change(np.float32(1.0), np.float32(2.0), 0.5)
    assert not value_change(np.float32(1.0), np.float32(2.0), 1.0)  # strict >
    assert not value_change(np.float32(-1.0), np.float32(2.0), 0.5)  # sign flip excludes


def test_engine_matches_brute_force(dense_model, dense_traces, dense_profile):
    vecs = [trace_vectors(t) for t in dense_traces]
    lows, highs = _bounds(dense_profile)
    results, _, _ = run_mcdc(dense_traces, dense_model.unit_counts("neuron"),
                             variants=VARIANTS, profile=dense_profile, vc_ratio=0.1,
                             pair_budget=None, seed=0)
    want = ref_mcdc(vecs, ref_pairs(len(vecs)), lows, highs, 0.1)
    got = _result_hits(results)
    for variant in VARIANTS:
        assert got[variant] == want[variant], variant


def test_engine_matches_brute_force_other_ratio(dense_model, dense_traces, dense_profile):
    vecs = [trace_vectors(t) for t in dense_traces]
    lows, highs = _bounds(dense_profile)
    results, _, _ = run_mcdc(dense_traces, dense_model.unit_counts("neuron"),
                             variants=("sv", "vv"), profile=dense_profile, vc_ratio=0.35,
                             pair_budget=None, seed=0)
    want = ref_mcdc(vecs, ref_pairs(len(vecs)), lows, highs, 0.35)
    got = _result_hits(results)
    assert got["sv"] == want["sv"]
    assert got["vv"] == want["vv"]


def test_single_sign_flip_feeds_ss():
    # layer A: unit 1 flips sign, others hold; layer B: unit 0 flips
    t1 = _mk_trace(0, [1.0, -1.0, 2.0], [3.0, -1.0])
    t2 = _mk_trace(1, [2.0, 1.0, 2.0], [-3.0, -1.0])
    cov = McdcCoverage((3, 2), variants=("ss",))
    cov.observe_pair(t1, t2)
    res = cov.finalize()["mcdc_ss"]
    hits = {(p, i, j): c for _, p, i, j, c in res.rows() if c}
    assert hits == {(0, 1, 0): 1}


def test_two_sign_flips_block_everything():
    t1 = _mk_trace(0, [1.0, -1.0, 2.0], [3.0, -1.0])
    t2 = _mk_trace(1, [-1.0, 1.0, 2.0], [-3.0, 1.0])
    cov = McdcCoverage((3, 2), variants=("ss",))
    cov.observe_pair(t1, t2)
    assert cov.finalize()["mcdc_ss"].covered == 0


def test_zero_sign_flips_feed_value_variants():
    from netcov.profiling import Profile
    prof = Profile(granularity="neuron", training_count=2, unit_counts=(2, 2),
                   low=np.zeros(4, dtype=np.float32),
                   high=np.full(4, 10.0, dtype=np.float32))
    # vc threshold = 0.1 * 10 = 1; condition unit 0 moves by 5, decision unit 1 flips
    t1 = _mk_trace(0, [1.0, 2.0], [1.0, 0.5])
    t2 = _mk_trace(1, [6.0, 2.5], [1.2, -0.5])
    cov = McdcCoverage((2, 2), variants=("vs", "vv"), profile=prof, vc_ratio=0.1)
    cov.observe_pair(t1, t2)
    res = cov.finalize()
    vs = {(p, i, j): c for _, p, i, j, c in res["mcdc_vs"].rows() if c}
    assert vs == {(0, 0, 1): 1}
    vv = {(p, i, j): c for _, p, i, j, c in res["mcdc_vv"].rows() if c}
    assert vv == {}  # the only big decision move is a sign change, not a value change


def test_observe_pair_is_symmetric(dense_model, dense_traces, dense_profile):
    uc = dense_model.unit_counts("neuron")
    a = McdcCoverage(uc, variants=VARIANTS, profile=dense_profile, vc_ratio=0.1)
    b = McdcCoverage(uc, variants=VARIANTS, profile=dense_profile, vc_ratio=0.1)
    rng = np.random.default_rng(33)
    for _ in range(60):
        i, j = rng.integers(0, len(dense_traces), size=2)
        a.observe_pair(dense_traces[i], dense_traces[j])
        b.observe_pair(dense_traces[j], dense_traces[i])
    ra, rb = a.finalize(), b.finalize()
    for key in ra:
        for ma, mb in zip(ra[key].hit_counts, rb[key].hit_counts):
            assert np.array_equal(ma, mb)


def test_universe_size(dense_model, dense_profile):
    uc = dense_model.unit_counts("neuron")
    cov = McdcCoverage(uc, variants=("ss",))
    want = sum(uc[i] * uc[i + 1] for i in range(len(uc) - 1))
    assert cov.finalize()["mcdc_ss"].total == want


def test_merge_equals_single(dense_model, dense_traces, dense_profile):
    uc = dense_model.unit_counts("neuron")
    pairs = ref_pairs(len(dense_traces))
    whole = McdcCoverage(uc, variants=VARIANTS, profile=dense_profile, vc_ratio=0.1)
    for i, j in pairs:
        whole.observe_pair(dense_traces[i], dense_traces[j])
    a = McdcCoverage(uc, variants=VARIANTS, profile=dense_profile, vc_ratio=0.1)
    b = McdcCoverage(uc, variants=VARIANTS, profile=dense_profile, vc_ratio=0.1)
    for i, j in pairs[:100]:
        a.observe_pair(dense_traces[i], dense_traces[j])
    for i, j in pairs[100:]:
        b.observe_pair(dense_traces[i], dense_traces[j])
    a.merge(b)
    ra, rw = a.finalize(), whole.finalize()
    for key in rw:
        for ma, mw in zip(ra[key].hit_counts, rw[key].hit_counts):
            assert np.array_equal(ma, mw)


def test_run_mcdc_checkpoints_are_prefixes(dense_model, dense_traces, dense_profile):
    uc = dense_model.unit_counts("neuron")
    _, growth, _ = run_mcdc(dense_traces, uc, variants=("ss", "vv"), profile=dense_profile,
                            vc_ratio=0.1, pair_budget=None, seed=0,
                            checkpoints=(5, 12, len(dense_traces)))
    for n in (5, 12, len(dense_traces)):
        prefix, _, _ = run_mcdc(dense_traces[:n], uc, variants=("ss", "vv"),
                                profile=dense_profile, vc_ratio=0.1, pair_budget=None, seed=0)
        for key in ("mcdc_ss", "mcdc_vv"):
            point = dict(growth[key])[n]
            assert point == prefix[key].percent, (key, n)


def test_run_mcdc_budget_respected(dense_model, dense_traces, dense_profile):
    uc = dense_model.unit_counts("neuron")
    _, _, coll = run_mcdc(dense_traces, uc, variants=("ss",), profile=None,
                          vc_ratio=0.1, pair_budget=37, seed=1)
    assert coll.pairs_seen == 37


def test_run_mcdc_validation(dense_model, dense_traces, dense_profile):
    uc = dense_model.unit_counts("neuron")
    with pytest.raises(InputError):
        run_mcdc(dense_traces[:1], uc, variants=("ss",), profile=None,
                 vc_ratio=0.1, pair_budget=None, seed=0)
    with pytest.raises(ConfigError):
        run_mcdc(dense_traces, uc, variants=("ss",), profile=None,
                 vc_ratio=0.1, pair_budget=0, seed=0)
    with pytest.raises(ConfigError):
        McdcCoverage(uc, variants=("vv",))  # value variant without profile
    with pytest.raises(ConfigError):
        McdcCoverage(uc, variants=("zz",))
    with pytest.raises(ConfigError):
        McdcCoverage(uc, variants=("sv",), profile=dense_profile, vc_ratio=0.0)


def test_single_layer_model_has_no_pairs():
    with pytest.raises(ConfigError):
        McdcCoverage((4,), variants=("ss",))


def test_hand_net_2_2_1_exhaustive():
    """Tiny 2-2-1 relu net; the output layer is marked coverable so a pair exists."""
    from netcov.model import Model, dense, relu
    rng = np.random.default_rng(34)
    m = Model(
        layers=[dense(rng.normal(size=(2, 2)), rng.normal(size=2)), relu(),
                dense(rng.normal(size=(1, 2)), rng.normal(size=1), coverage_relevant=True)],
        input_shape=(2,),
    )
    xs = random_inputs(np.random.default_rng(35), 12, (2,)).inputs
    traces = trace_dataset(m, xs, "neuron")
    prof = profile_dataset(m, xs, "neuron")
    vecs = [trace_vectors(t) for t in traces]
    lows, highs = _bounds(prof)
    results, _, _ = run_mcdc(traces, m.unit_counts("neuron"), variants=VARIANTS,
                             profile=prof, vc_ratio=0.1, pair_budget=None, seed=0)
    want = ref_mcdc(vecs, ref_pairs(len(vecs)), lows, highs, 0.1)
    assert _result_hits(results) == want
