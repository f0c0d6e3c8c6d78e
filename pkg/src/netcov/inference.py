"""Forward evaluation with activation capture at coverage-relevant layers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InputError, NumericError
from .model import GRANULARITIES, LayerSpec, Model, Tensor

if TYPE_CHECKING:  # pragma: no cover
    from .data import Dataset


@dataclass(frozen=True)
class ActivationTrace:
    """Per-input activations of the coverage-relevant layers.

    ``per_layer`` holds the raw unit values (channel granularity reduces a
    feature map to its spatial mean); ``per_layer_scaled`` holds the same
    values min-max scaled to [0, 1] within each layer, with an all-equal
    layer mapping to all zeros.
    """

    input_id: int
    per_layer: tuple[np.ndarray, ...]
    per_layer_scaled: tuple[np.ndarray, ...]


def _dense(spec: LayerSpec, x: np.ndarray) -> np.ndarray:
    return spec.params["weight"] @ x + spec.params["bias"]


def _conv2d(spec: LayerSpec, x: np.ndarray) -> np.ndarray:
    k = spec.params["kernel"]
    if x.ndim == 2:  # single-channel image without an explicit channel axis
        x = x[None, :, :]
    sh, sw = spec.attrs["strides"]
    ph, pw = spec.attrs["padding"]
    if ph or pw:
        x = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(x, (k.shape[2], k.shape[3]), axis=(1, 2))[:, ::sh, ::sw]
    out = np.tensordot(k, win, axes=((1, 2, 3), (0, 3, 4)))
    out += spec.params["bias"][:, None, None]
    return out


def _maxpool2d(spec: LayerSpec, x: np.ndarray) -> np.ndarray:
    kh, kw = spec.attrs["pool"]
    sh, sw = spec.attrs["strides"]
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    return win.max(axis=(3, 4))


def _batchnorm(spec: LayerSpec, x: np.ndarray) -> np.ndarray:
    p = spec.params
    scale, shift = p["scale"], p["shift"]
    mean, var = p["mean"], p["variance"]
    denom = np.sqrt(var + np.float32(spec.attrs["epsilon"]))
    if x.ndim == 3:
        return (x - mean[:, None, None]) / denom[:, None, None] * scale[:, None, None] \
            + shift[:, None, None]
    return (x - mean) / denom * scale + shift


_EVAL = {
    "dense": _dense,
    "conv2d": _conv2d,
    "maxpool2d": _maxpool2d,
    "relu": lambda spec, x: np.maximum(x, np.float32(0)),
    "flatten": lambda spec, x: x.reshape(-1),
    "batchnorm": _batchnorm,
}


def _unit_values(y: np.ndarray, granularity: str) -> np.ndarray:
    if y.ndim == 3 and granularity == "channel":
        # Spatial means accumulate in float64 before narrowing back.
        return np.mean(y.reshape(y.shape[0], -1), axis=1, dtype=np.float64).astype(np.float32)
    return np.array(y.reshape(-1), dtype=np.float32)


def _minmax_scale(v: np.ndarray) -> np.ndarray:
    lo = v.min()
    hi = v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def forward(model: Model, x, granularity: str = "neuron", input_id: int = 0):
    """Evaluate one input. Returns ``(output, ActivationTrace)``."""
    if granularity not in GRANULARITIES:
        raise InputError(f"granularity must be one of {GRANULARITIES}, got {granularity!r}")
    arr = x.array() if isinstance(x, Tensor) else np.asarray(x)
    shape = tuple(arr.shape)
    # image files often omit a single channel axis; accept [h, w] for [1, h, w]
    if shape != model.input_shape and (1,) + shape == model.input_shape:
        arr = arr.reshape(model.input_shape)
        shape = model.input_shape
    if shape != model.input_shape:
        raise InputError(
            f"input shape {list(shape)} does not match model input {list(model.input_shape)}"
        )
    cur = arr.astype(np.float32, copy=False)
    if not np.all(np.isfinite(cur)):
        raise InputError("input contains non-finite values")

    relevant = model.coverage_relevant
    per_layer: list[np.ndarray] = []
    per_scaled: list[np.ndarray] = []
    for i, spec in enumerate(model.layers):
        # overflow surfaces as the NumericError below, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            cur = _EVAL[spec.kind](spec, cur)
        if not np.all(np.isfinite(cur)):
            raise NumericError(f"layer {i} ({spec.kind}) produced non-finite values")
        if relevant[i]:
            vals = _unit_values(cur, granularity)
            vals.flags.writeable = False
            scaled = _minmax_scale(vals)
            scaled.flags.writeable = False
            per_layer.append(vals)
            per_scaled.append(scaled)

    out = np.array(cur, dtype=np.float32)
    out.flags.writeable = False
    return out, ActivationTrace(input_id, tuple(per_layer), tuple(per_scaled))


def trace_dataset(model: Model, inputs: np.ndarray, granularity: str = "neuron",
                  start_id: int = 0) -> list[ActivationTrace]:
    """Forward every input, keeping traces only. Ids follow dataset order."""
    traces = []
    for i in range(len(inputs)):
        _, trace = forward(model, inputs[i], granularity, input_id=start_id + i)
        traces.append(trace)
    return traces


def predict_labels(model: Model, dataset: "Dataset"):
    """Argmax predictions and accuracy percent against the dataset labels.

    Ties pick the lowest class index. Raises rather than reporting a score
    for an empty dataset.
    """
    if model.task != "classification":
        raise InputError(f"predict_labels needs a classification model, task is {model.task!r}")
    if dataset.labels is None:
        raise InputError(f"dataset {dataset.name!r} has no ground-truth labels")
    n = len(dataset.inputs)
    if n == 0:
        raise InputError("cannot score an empty dataset")
    if not np.issubdtype(dataset.labels.dtype, np.integer):
        raise InputError("classification labels must be integers")
    preds = np.empty(n, dtype=np.int64)
    for i in range(n):
        out, _ = forward(model, dataset.inputs[i], input_id=i)
        if out.ndim != 1:
            raise InputError(
                f"model output shape {list(out.shape)} is not a class-score vector"
            )
        preds[i] = int(np.argmax(out))
    correct = int(np.count_nonzero(preds == dataset.labels))
    return preds, 100.0 * correct / n
