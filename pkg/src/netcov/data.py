"""Dataset container plus the IDX and raw on-disk input formats."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CapabilityError, FormatError, ValidationError

IDX_IMAGE_MAGIC = 0x00000803  # 2051
IDX_LABEL_MAGIC = 0x00000801  # 2049

RAW_MANIFEST = "data.json"
RAW_BIN = "data.bin"


@dataclass(frozen=True)
class Dataset:
    """Stacked float32 inputs ``(n, *shape)`` with optional per-input labels."""

    name: str
    inputs: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs)
        if inputs.ndim < 2:
            raise ValidationError(
                f"dataset {self.name!r}: inputs must be (n, *shape), got rank {inputs.ndim}"
            )
        inputs = inputs.astype(np.float32, copy=False)
        if not np.all(np.isfinite(inputs)):
            raise ValidationError(f"dataset {self.name!r}: inputs contain non-finite values")
        inputs = np.ascontiguousarray(inputs)
        inputs.flags.writeable = False
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (inputs.shape[0],):
                raise ValidationError(
                    f"dataset {self.name!r}: {labels.shape[0] if labels.ndim else 0} labels "
                    f"for {inputs.shape[0]} inputs"
                )
            labels = np.ascontiguousarray(labels)
            labels.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(self.inputs.shape[1:])

    def head(self, n: int) -> "Dataset":
        labels = None if self.labels is None else self.labels[:n]
        return Dataset(self.name, self.inputs[:n], labels)


def _read_be_u32(buf: bytes, offset: int, path, what: str) -> int:
    if offset + 4 > len(buf):
        raise FormatError(f"{path}: truncated while reading {what} at byte {offset}")
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(images_path, labels_path=None, *, limit: int | None = None,
             name: str | None = None) -> Dataset:
    """Read big-endian IDX image (and optional label) files.

    Pixels are bytes scaled to [0, 1] by dividing by 255; each image keeps
    its [rows, cols] shape. ``limit`` truncates in file order.
    """
    images_path = Path(images_path)
    buf = images_path.read_bytes()
    magic = _read_be_u32(buf, 0, images_path, "magic")
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(
            f"{images_path}: magic 0x{magic:08X}, expected 0x{IDX_IMAGE_MAGIC:08X} for images"
        )
    count = _read_be_u32(buf, 4, images_path, "count")
    rows = _read_be_u32(buf, 8, images_path, "rows")
    cols = _read_be_u32(buf, 12, images_path, "cols")
    want = 16 + count * rows * cols
    if len(buf) != want:
        raise FormatError(
            f"{images_path}: {count} images of {rows}x{cols} need {want} bytes, file has {len(buf)}"
        )
    keep = count if limit is None else min(int(limit), count)
    pixels = np.frombuffer(buf, dtype=np.uint8, count=keep * rows * cols, offset=16)
    inputs = (pixels.astype(np.float32) / np.float32(255)).reshape(keep, rows, cols)

    labels = None
    if labels_path is not None:
        labels_path = Path(labels_path)
        lbuf = labels_path.read_bytes()
        lmagic = _read_be_u32(lbuf, 0, labels_path, "magic")
        if lmagic != IDX_LABEL_MAGIC:
            raise FormatError(
                f"{labels_path}: magic 0x{lmagic:08X}, expected 0x{IDX_LABEL_MAGIC:08X} for labels"
            )
        lcount = _read_be_u32(lbuf, 4, labels_path, "count")
        if lcount != count:
            raise FormatError(
                f"{labels_path}: {lcount} labels for {count} images in {images_path.name}"
            )
        if len(lbuf) != 8 + lcount:
            raise FormatError(
                f"{labels_path}: {lcount} labels need {8 + lcount} bytes, file has {len(lbuf)}"
            )
        labels = np.frombuffer(lbuf, dtype=np.uint8, count=keep, offset=8).astype(np.int64)

    return Dataset(name or images_path.stem, inputs, labels)


def load_raw(path, *, limit: int | None = None) -> Dataset:
    """Read a raw dataset dir: ``data.json`` manifest + little-endian float32 blob."""
    root = Path(path)
    mpath = root / RAW_MANIFEST
    bpath = root / RAW_BIN
    if not mpath.is_file() or not bpath.is_file():
        raise FileNotFoundError(f"{root} does not hold {RAW_MANIFEST} + {RAW_BIN}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: malformed JSON at byte {exc.pos}: {exc.msg}") from None
    if manifest.get("dtype", "float32") != "float32":
        raise CapabilityError(f"only float32 raw datasets are supported, got {manifest.get('dtype')!r}")
    try:
        shape = tuple(int(d) for d in manifest["shape"])
        count = int(manifest["count"])
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{mpath}: needs integer 'count' and a 'shape' list") from None
    per = math.prod(shape)
    blob = bpath.read_bytes()
    want = count * per * 4
    if len(blob) != want:
        raise FormatError(
            f"{bpath}: {count} inputs of shape {list(shape)} need {want} bytes, file has {len(blob)}"
        )
    keep = count if limit is None else min(int(limit), count)
    inputs = np.frombuffer(blob, dtype="<f4", count=keep * per).reshape((keep,) + shape).copy()

    labels = None
    labels_file = manifest.get("labels_file")
    if labels_file:
        lpath = root / str(labels_file)
        if not lpath.is_file():
            raise FormatError(f"{mpath} names labels file {labels_file!r} but {lpath} is missing")
        try:
            values = json.loads(lpath.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{lpath}: malformed JSON at byte {exc.pos}: {exc.msg}") from None
        if not isinstance(values, list) or len(values) != count:
            raise FormatError(f"{lpath}: expected a list of {count} labels")
        if all(isinstance(v, int) for v in values):
            labels = np.asarray(values[:keep], dtype=np.int64)
        else:
            labels = np.asarray(values[:keep], dtype=np.float64)

    return Dataset(str(manifest.get("name", root.name)), inputs, labels)


def save_raw(dataset: Dataset, path) -> Path:
    """Write a dataset as a raw dir. Round-trips load_raw bit-exactly."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "name": dataset.name,
        "dtype": "float32",
        "count": len(dataset),
        "shape": list(dataset.input_shape),
    }
    if dataset.labels is not None:
        manifest["labels_file"] = "labels.json"
        values = [
            int(v) if np.issubdtype(dataset.labels.dtype, np.integer) else float(v)
            for v in dataset.labels
        ]
        (root / "labels.json").write_text(json.dumps(values) + "\n", encoding="utf-8")
    (root / RAW_BIN).write_bytes(dataset.inputs.astype("<f4").tobytes(order="C"))
    (root / RAW_MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return root
