import numpy as np
import pytest

from netcov.errors import InputError, NumericError
from netcov.inference import forward, predict_labels, trace_dataset
from netcov.model import Model, batchnorm, conv2d, dense, flatten, maxpool2d, relu
from netcov.synth import random_dense_model, random_inputs

from oracles import ref_channel_means, ref_forward, ref_scale


def test_dense_forward_matches_loop_reference(dense_model):
    rng = np.random.default_rng(10)
    for _ in range(10):
        x = rng.normal(size=4).astype(np.float32)
        out, trace = forward(dense_model, x)
        ref_out, _ = ref_forward(dense_model, x)
        np.testing.assert_allclose(out, ref_out, rtol=2e-5, atol=1e-5)


def test_conv_pipeline_matches_loop_reference(demo_model):
    rng = np.random.default_rng(11)
    x = rng.random((1, 10, 10), dtype=np.float32)
    out, trace = forward(demo_model, x, "channel")
    ref_out, ref_outs = ref_forward(demo_model, x)
    np.testing.assert_allclose(out, ref_out, rtol=2e-5, atol=1e-5)
    # first relevant layer is the relu after conv1; channel means must agree
    np.testing.assert_allclose(
        trace.per_layer[0],
        ref_channel_means(np.maximum(ref_outs[0], 0.0)),
        rtol=2e-5, atol=1e-5,
    )


def test_strided_padded_conv_matches_reference():
    rng = np.random.default_rng(12)
    m = Model(
        layers=[conv2d(rng.normal(size=(4, 2, 3, 3)), rng.normal(size=4), strides=2, padding=1),
                relu()],
        input_shape=(2, 7, 7),
    )
    x = rng.normal(size=(2, 7, 7)).astype(np.float32)
    out, _ = forward(m, x)
    ref_out, _ = ref_forward(m, x)
    assert out.shape == tuple(ref_out.shape)
    np.testing.assert_allclose(out, ref_out, rtol=2e-5, atol=1e-5)


def test_maxpool_and_batchnorm_match_reference():
    rng = np.random.default_rng(13)
    m = Model(
        layers=[
            conv2d(rng.normal(size=(3, 1, 2, 2)), rng.normal(size=3)),
            relu(),
            maxpool2d((2, 3), strides=(1, 2)),
            flatten(),
            batchnorm(rng.normal(size=9) + 2.0, rng.normal(size=9),
                      rng.normal(size=9), rng.random(9) + 0.5),
            dense(rng.normal(size=(2, 9)), rng.normal(size=2)),
        ],
        input_shape=(1, 5, 5),
    )
    x = rng.normal(size=(1, 5, 5)).astype(np.float32)
    out, _ = forward(m, x)
    ref_out, _ = ref_forward(m, x)
    np.testing.assert_allclose(out, ref_out, rtol=2e-5, atol=1e-5)


def test_scaled_values_match_reference_exactly(dense_traces):
    for trace in dense_traces:
        for raw, scaled in zip(trace.per_layer, trace.per_layer_scaled):
            expect = np.array(ref_scale(raw), dtype=np.float32)
            assert np.array_equal(scaled, expect)


def test_scaling_constant_layer_is_zero():
    m = Model(layers=[dense(np.zeros((3, 2)), np.full(3, 4.0)), relu()], input_shape=(2,))
    _, trace = forward(m, np.ones(2, dtype=np.float32))
    assert np.array_equal(trace.per_layer_scaled[0], np.zeros(3, dtype=np.float32))


def test_channel_granularity_means(demo_model):
    rng = np.random.default_rng(14)
    x = rng.random((1, 10, 10), dtype=np.float32)
    _, tn = forward(demo_model, x, "neuron")
    _, tc = forward(demo_model, x, "channel")
    assert tn.per_layer[0].shape == (6 * 8 * 8,)
    assert tc.per_layer[0].shape == (6,)
    want = [np.mean(tn.per_layer[0].reshape(6, -1)[c].astype(np.float64)) for c in range(6)]
    np.testing.assert_allclose(tc.per_layer[0], want, rtol=1e-6)
    # dense tail is rank-1 so both granularities agree exactly
    assert np.array_equal(tn.per_layer[2], tc.per_layer[2])


def test_rank2_input_bridge(demo_model):
    rng = np.random.default_rng(15)
    img = rng.random((10, 10), dtype=np.float32)
    out2, _ = forward(demo_model, img)
    out3, _ = forward(demo_model, img[None])
    assert np.array_equal(out2, out3)


def test_forward_input_errors(dense_model):
    with pytest.raises(InputError):
        forward(dense_model, np.zeros(5, dtype=np.float32))
    with pytest.raises(InputError):
        forward(dense_model, np.array([1.0, np.nan, 0.0, 0.0], dtype=np.float32))
    with pytest.raises(InputError):
        forward(dense_model, np.zeros(4, dtype=np.float32), granularity="pixel")


def test_numeric_blowup_names_layer():
    big = np.full((4, 4), 1e30, dtype=np.float32)
    m = Model(layers=[dense(big, np.zeros(4)), relu(), dense(big, np.zeros(4)), relu()],
              input_shape=(4,))
    with pytest.raises(NumericError) as err:
        forward(m, np.ones(4, dtype=np.float32))
    assert "layer" in str(err.value)


def test_traces_are_frozen(dense_traces):
    t = dense_traces[0]
    with pytest.raises(ValueError):
        t.per_layer[0][0] = 1.0


def test_trace_dataset_ids(dense_model):
    xs = random_inputs(np.random.default_rng(16), 5, (4,)).inputs
    traces = trace_dataset(dense_model, xs, "neuron", start_id=7)
    assert [t.input_id for t in traces] == [7, 8, 9, 10, 11]


def test_predict_labels_counts_argmax_matches():
    w = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], dtype=np.float32)
    m = Model(layers=[dense(w, np.zeros(3)), relu()], input_shape=(2,))
    inputs = np.array([[3.0, 1.0], [1.0, 5.0], [2.0, 2.0]], dtype=np.float32)
    labels = np.array([0, 1, 0])  # third output never wins; tie at input 2 goes to index 0
    from netcov.data import Dataset
    ds = Dataset(name="d", inputs=inputs, labels=labels)
    preds, acc = predict_labels(m, ds)
    assert preds.tolist() == [0, 1, 0]
    assert acc == 100.0


def test_predict_labels_errors(dense_model):
    from netcov.data import Dataset
    xs = random_inputs(np.random.default_rng(17), 4, (4,)).inputs
    with pytest.raises(InputError):
        predict_labels(dense_model, Dataset(name="d", inputs=xs))  # no labels
    bad = Dataset(name="d", inputs=xs, labels=np.array([0.5, 1, 2, 0]))
    with pytest.raises(InputError):
        predict_labels(dense_model, bad)  # fractional labels
