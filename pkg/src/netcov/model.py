"""Feedforward model representation and the NNCM on-disk bundle format.

A model is an ordered tuple of layer specifications plus an input shape.
Weights travel in a companion ``weights.bin`` blob of raw little-endian
float32 values; ``manifest.json`` records every parameter tensor's byte
offset and length so a bundle can be audited byte by byte and round-trips
bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CapabilityError, FormatError, ValidationError

SUPPORTED_KINDS = ("dense", "conv2d", "maxpool2d", "relu", "flatten", "batchnorm")
GRANULARITIES = ("neuron", "channel")
TASKS = ("classification", "regression")

MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"
FORMAT_TAG = "nncm"
FORMAT_VERSION = 1

# Canonical parameter order per kind; save_model packs weights.bin this way.
_PARAM_ORDER = {
    "dense": ("weight", "bias"),
    "conv2d": ("kernel", "bias"),
    "batchnorm": ("scale", "shift", "mean", "variance"),
    "maxpool2d": (),
    "relu": (),
    "flatten": (),
}


def _freeze_f32(arr, name: str) -> np.ndarray:
    if isinstance(arr, Tensor):
        arr = arr.array()
    out = np.array(arr, dtype=np.float32, order="C")
    if not np.all(np.isfinite(out)):
        raise ValidationError(f"parameter {name!r} contains non-finite values")
    out.flags.writeable = False
    return out


def _pair(value, name: str) -> tuple[int, int]:
    if isinstance(value, (int, np.integer)):
        value = (int(value), int(value))
    try:
        a, b = (int(v) for v in value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be an int or a pair of ints, got {value!r}") from None
    return (a, b)


@dataclass(frozen=True)
class Tensor:
    """Dense row-major float32 array tagged with its logical shape."""

    shape: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self) -> None:
        shape = tuple(int(d) for d in self.shape)
        if not shape or any(d <= 0 for d in shape):
            raise ValidationError(f"tensor shape must have positive dims, got {shape}")
        data = np.array(self.data, dtype=np.float32).reshape(-1)
        if data.size != math.prod(shape):
            raise ValidationError(
                f"tensor data has {data.size} elements, shape {shape} needs {math.prod(shape)}"
            )
        if not np.all(np.isfinite(data)):
            raise ValidationError("tensor contains non-finite values")
        data.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr) -> "Tensor":
        a = np.asarray(arr)
        return cls(tuple(a.shape), a.reshape(-1))

    def array(self) -> np.ndarray:
        return self.data.reshape(self.shape)


@dataclass(frozen=True)
class Unit:
    """One coverable unit: ``layer`` indexes the coverage-relevant layer list."""

    layer: int
    index: int


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict
    attrs: dict
    coverage_relevant: bool | None = None  # None means the default rule decides


def _checked(spec: LayerSpec) -> LayerSpec:
    _validate_layer(spec, spec.kind)
    return spec


def dense(weight, bias, coverage_relevant: bool | None = None) -> LayerSpec:
    return _checked(LayerSpec(
        "dense",
        {"weight": _freeze_f32(weight, "weight"), "bias": _freeze_f32(bias, "bias")},
        {},
        coverage_relevant,
    ))


def conv2d(kernel, bias, strides=1, padding=0, coverage_relevant: bool | None = None) -> LayerSpec:
    return _checked(LayerSpec(
        "conv2d",
        {"kernel": _freeze_f32(kernel, "kernel"), "bias": _freeze_f32(bias, "bias")},
        {"strides": _pair(strides, "strides"), "padding": _pair(padding, "padding")},
        coverage_relevant,
    ))


def maxpool2d(pool, strides=None, coverage_relevant: bool | None = None) -> LayerSpec:
    pool_hw = _pair(pool, "pool")
    stride_hw = pool_hw if strides is None else _pair(strides, "strides")
    return _checked(
        LayerSpec("maxpool2d", {}, {"pool": pool_hw, "strides": stride_hw}, coverage_relevant)
    )


def relu(coverage_relevant: bool | None = None) -> LayerSpec:
    return LayerSpec("relu", {}, {}, coverage_relevant)


def flatten(coverage_relevant: bool | None = None) -> LayerSpec:
    return LayerSpec("flatten", {}, {}, coverage_relevant)


def batchnorm(scale, shift, mean, variance, epsilon=1e-5,
              coverage_relevant: bool | None = None) -> LayerSpec:
    return _checked(LayerSpec(
        "batchnorm",
        {
            "scale": _freeze_f32(scale, "scale"),
            "shift": _freeze_f32(shift, "shift"),
            "mean": _freeze_f32(mean, "mean"),
            "variance": _freeze_f32(variance, "variance"),
        },
        {"epsilon": float(epsilon)},
        coverage_relevant,
    ))


def _validate_layer(spec: LayerSpec, where: str) -> None:
    kind = spec.kind
    if kind not in SUPPORTED_KINDS:
        raise CapabilityError(
            f"{where}: unsupported layer kind {kind!r}; supported kinds are {', '.join(SUPPORTED_KINDS)}"
        )
    p = spec.params
    if kind == "dense":
        w, b = p["weight"], p["bias"]
        if w.ndim != 2:
            raise ValidationError(f"{where}: dense weight must be 2-D, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValidationError(
                f"{where}: dense bias shape {b.shape} does not match {w.shape[0]} output units"
            )
    elif kind == "conv2d":
        k, b = p["kernel"], p["bias"]
        if k.ndim != 4:
            raise ValidationError(f"{where}: conv2d kernel must be 4-D, got shape {k.shape}")
        if b.shape != (k.shape[0],):
            raise ValidationError(
                f"{where}: conv2d bias shape {b.shape} does not match {k.shape[0]} output channels"
            )
        sh, sw = spec.attrs["strides"]
        ph, pw = spec.attrs["padding"]
        if sh < 1 or sw < 1:
            raise ValidationError(f"{where}: conv2d strides must be >= 1, got {(sh, sw)}")
        if ph < 0 or pw < 0:
            raise ValidationError(f"{where}: conv2d padding must be >= 0, got {(ph, pw)}")
    elif kind == "maxpool2d":
        kh, kw = spec.attrs["pool"]
        sh, sw = spec.attrs["strides"]
        if kh < 1 or kw < 1 or sh < 1 or sw < 1:
            raise ValidationError(f"{where}: maxpool2d pool and strides must be >= 1")
    elif kind == "batchnorm":
        lens = {name: p[name].shape for name in ("scale", "shift", "mean", "variance")}
        if any(p[name].ndim != 1 for name in lens):
            raise ValidationError(f"{where}: batchnorm parameters must be 1-D, got {lens}")
        if len({p[name].shape[0] for name in lens}) != 1:
            raise ValidationError(f"{where}: batchnorm parameter lengths differ: {lens}")
        if not np.all(p["variance"] > 0):
            raise ValidationError(f"{where}: batchnorm variance must be strictly positive")
        if spec.attrs["epsilon"] <= 0:
            raise ValidationError(f"{where}: batchnorm epsilon must be > 0")


def _layer_output_shape(spec: LayerSpec, in_shape: tuple[int, ...], where: str) -> tuple[int, ...]:
    kind = spec.kind
    if kind == "dense":
        w = spec.params["weight"]
        if len(in_shape) != 1 or in_shape[0] != w.shape[1]:
            raise ValidationError(
                f"{where}: dense expects input shape [{w.shape[1]}], got {list(in_shape)}"
            )
        return (int(w.shape[0]),)
    if kind == "conv2d":
        k = spec.params["kernel"]
        out_ch, in_ch, kh, kw = (int(d) for d in k.shape)
        # A rank-2 input is read as a single-channel image when in_ch == 1,
        # so image files that omit the channel axis compose directly.
        if len(in_shape) == 2 and in_ch == 1:
            in_shape = (1,) + in_shape
        if len(in_shape) != 3 or in_shape[0] != in_ch:
            raise ValidationError(
                f"{where}: conv2d expects input shape [{in_ch}, h, w], got {list(in_shape)}"
            )
        sh, sw = spec.attrs["strides"]
        ph, pw = spec.attrs["padding"]
        oh = (in_shape[1] + 2 * ph - kh) // sh + 1
        ow = (in_shape[2] + 2 * pw - kw) // sw + 1
        if oh < 1 or ow < 1:
            raise ValidationError(
                f"{where}: conv2d kernel {(kh, kw)} does not fit input {list(in_shape)}"
            )
        return (out_ch, oh, ow)
    if kind == "maxpool2d":
        if len(in_shape) != 3:
            raise ValidationError(f"{where}: maxpool2d expects a rank-3 input, got {list(in_shape)}")
        kh, kw = spec.attrs["pool"]
        sh, sw = spec.attrs["strides"]
        oh = (in_shape[1] - kh) // sh + 1
        ow = (in_shape[2] - kw) // sw + 1
        if oh < 1 or ow < 1:
            raise ValidationError(
                f"{where}: maxpool2d window {(kh, kw)} does not fit input {list(in_shape)}"
            )
        return (in_shape[0], oh, ow)
    if kind == "relu":
        return in_shape
    if kind == "flatten":
        return (math.prod(in_shape),)
    if kind == "batchnorm":
        n = spec.params["scale"].shape[0]
        channels = in_shape[0] if len(in_shape) == 3 else in_shape[0] if len(in_shape) == 1 else None
        if channels != n:
            raise ValidationError(
                f"{where}: batchnorm has {n} channels, input shape {list(in_shape)} does not match"
            )
        return in_shape
    raise CapabilityError(f"{where}: unsupported layer kind {kind!r}")


def default_coverage_relevant(layers: Sequence[LayerSpec]) -> tuple[bool, ...]:
    """Default coverable-layer rule.

    The final layer produces the decision values and is never coverable by
    default. Within the remaining prefix, relu outputs are coverable, and a
    dense or conv2d layer is coverable itself only when no relu inside the
    prefix immediately follows it. Pooling, flatten and batchnorm outputs are
    not coverable unless the manifest overrides them.
    """
    n = len(layers)
    flags = [False] * n
    for i in range(n - 1):
        kind = layers[i].kind
        if kind == "relu":
            flags[i] = True
        elif kind in ("dense", "conv2d"):
            successor_inner_relu = layers[i + 1].kind == "relu" and (i + 1) < n - 1
            flags[i] = not successor_inner_relu
    return tuple(flags)


@dataclass(frozen=True)
class Model:
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]
    name: str = "model"
    task: str = "classification"
    output_shapes: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    coverage_relevant: tuple[bool, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ValidationError("model must have at least one layer")
        if self.task not in TASKS:
            raise ValidationError(f"task must be one of {TASKS}, got {self.task!r}")
        input_shape = tuple(int(d) for d in self.input_shape)
        if not input_shape or any(d <= 0 for d in input_shape):
            raise ValidationError(f"input shape must have positive dims, got {input_shape}")

        shapes = []
        cur = input_shape
        for i, spec in enumerate(layers):
            where = f"layer {i} ({spec.kind})"
            _validate_layer(spec, where)
            cur = _layer_output_shape(spec, cur, where)
            shapes.append(cur)

        defaults = default_coverage_relevant(layers)
        flags = tuple(
            spec.coverage_relevant if spec.coverage_relevant is not None else defaults[i]
            for i, spec in enumerate(layers)
        )
        if not any(flags):
            raise ValidationError(
                "model has no coverage-relevant layer; mark one explicitly in the manifest"
            )
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_shape", input_shape)
        object.__setattr__(self, "output_shapes", tuple(shapes))
        object.__setattr__(self, "coverage_relevant", flags)

    @property
    def relevant_indices(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.coverage_relevant) if f)

    @property
    def relevant_shapes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(self.output_shapes[i] for i in self.relevant_indices)

    def unit_counts(self, granularity: str) -> tuple[int, ...]:
        return unit_counts(self, granularity)

    def describe_relevant(self) -> list[dict]:
        out = []
        for ordinal, idx in enumerate(self.relevant_indices):
            out.append(
                {
                    "ordinal": ordinal,
                    "model_layer": idx,
                    "kind": self.layers[idx].kind,
                    "output_shape": list(self.output_shapes[idx]),
                }
            )
        return out


def unit_counts(model: Model, granularity: str) -> tuple[int, ...]:
    """Coverable units per coverage-relevant layer.

    Rank-3 outputs count one unit per channel under channel granularity and
    one per scalar under neuron granularity; lower-rank outputs count one
    unit per scalar under both.
    """
    if granularity not in GRANULARITIES:
        raise ValidationError(f"granularity must be one of {GRANULARITIES}, got {granularity!r}")
    counts = []
    for shape in model.relevant_shapes:
        if len(shape) == 3 and granularity == "channel":
            counts.append(int(shape[0]))
        else:
            counts.append(int(math.prod(shape)))
    return tuple(counts)


def _manifest_param_entry(arr: np.ndarray, offset: int) -> tuple[dict, bytes]:
    blob = arr.astype("<f4").tobytes(order="C")
    entry = {"shape": [int(d) for d in arr.shape], "offset": offset, "nbytes": len(blob)}
    return entry, blob


def save_model(model: Model, path) -> Path:
    """Write ``manifest.json`` + ``weights.bin`` under ``path``. Returns the dir."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    blobs: list[bytes] = []
    offset = 0
    layer_entries = []
    for spec in model.layers:
        entry: dict = {"kind": spec.kind}
        if spec.attrs:
            entry["attrs"] = {
                k: (list(v) if isinstance(v, tuple) else v) for k, v in spec.attrs.items()
            }
        params = {}
        for name in _PARAM_ORDER[spec.kind]:
            pentry, blob = _manifest_param_entry(spec.params[name], offset)
            params[name] = pentry
            blobs.append(blob)
            offset += len(blob)
        if params:
            entry["params"] = params
        if spec.coverage_relevant is not None:
            entry["coverage_relevant"] = bool(spec.coverage_relevant)
        layer_entries.append(entry)
    manifest = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "byte_order": "little",
        "dtype": "float32",
        "name": model.name,
        "task": model.task,
        "input_shape": [int(d) for d in model.input_shape],
        "layers": layer_entries,
    }
    (out / WEIGHTS_NAME).write_bytes(b"".join(blobs))
    (out / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out


def _read_param(name: str, entry: dict, blob: bytes, where: str) -> np.ndarray:
    try:
        shape = tuple(int(d) for d in entry["shape"])
        offset = int(entry["offset"])
        nbytes = int(entry["nbytes"])
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{where}: parameter {name!r} needs shape/offset/nbytes") from None
    want = math.prod(shape) * 4
    if nbytes != want:
        raise FormatError(
            f"{where}: parameter {name!r} declares {nbytes} bytes, shape {list(shape)} needs {want}"
        )
    if offset < 0 or offset + nbytes > len(blob):
        raise FormatError(
            f"{where}: parameter {name!r} spans bytes [{offset}, {offset + nbytes}) "
            f"but weights.bin has {len(blob)} bytes"
        )
    arr = np.frombuffer(blob, dtype="<f4", count=math.prod(shape), offset=offset)
    return arr.reshape(shape).copy()


def load_model(path) -> Model:
    """Load an NNCM bundle directory into a validated Model."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    weights_path = root / WEIGHTS_NAME
    # a path that is not there is an I/O problem, not a malformed bundle
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} under {root}")
    if not weights_path.is_file():
        raise FileNotFoundError(f"no {WEIGHTS_NAME} under {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: malformed JSON at byte {exc.pos}: {exc.msg}") from None

    if manifest.get("format") != FORMAT_TAG or int(manifest.get("version", -1)) != FORMAT_VERSION:
        raise FormatError(
            f"{manifest_path}: expected format {FORMAT_TAG!r} version {FORMAT_VERSION}, "
            f"got {manifest.get('format')!r} version {manifest.get('version')!r}"
        )
    if manifest.get("byte_order") != "little":
        raise CapabilityError(f"only little-endian weights are supported, got {manifest.get('byte_order')!r}")
    if manifest.get("dtype") != "float32":
        raise CapabilityError(f"only float32 weights are supported, got {manifest.get('dtype')!r}")
    for key in ("input_shape", "layers"):
        if key not in manifest:
            raise FormatError(f"{manifest_path}: missing required key {key!r}")

    blob = weights_path.read_bytes()
    layers = []
    for i, entry in enumerate(manifest["layers"]):
        where = f"layer {i}"
        kind = entry.get("kind")
        if kind not in SUPPORTED_KINDS:
            raise CapabilityError(
                f"{where}: unsupported layer kind {kind!r}; supported kinds are {', '.join(SUPPORTED_KINDS)}"
            )
        attrs = entry.get("attrs", {})
        params = entry.get("params", {})
        missing = [n for n in _PARAM_ORDER[kind] if n not in params]
        if missing:
            raise FormatError(f"{where}: {kind} is missing parameters {missing}")
        arrays = {n: _read_param(n, params[n], blob, where) for n in _PARAM_ORDER[kind]}
        rel = entry.get("coverage_relevant")
        rel = None if rel is None else bool(rel)
        if kind == "dense":
            spec = dense(arrays["weight"], arrays["bias"], rel)
        elif kind == "conv2d":
            spec = conv2d(
                arrays["kernel"], arrays["bias"],
                strides=attrs.get("strides", 1), padding=attrs.get("padding", 0),
                coverage_relevant=rel,
            )
        elif kind == "maxpool2d":
            if "pool" not in attrs:
                raise FormatError(f"{where}: maxpool2d needs a pool attr")
            spec = maxpool2d(attrs["pool"], attrs.get("strides"), rel)
        elif kind == "relu":
            spec = relu(rel)
        elif kind == "flatten":
            spec = flatten(rel)
        else:
            spec = batchnorm(
                arrays["scale"], arrays["shift"], arrays["mean"], arrays["variance"],
                epsilon=attrs.get("epsilon", 1e-5), coverage_relevant=rel,
            )
        layers.append(spec)

    return Model(
        layers=tuple(layers),
        input_shape=tuple(manifest["input_shape"]),
        name=str(manifest.get("name", root.name)),
        task=str(manifest.get("task", "classification")),
    )
