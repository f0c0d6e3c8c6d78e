import json
import struct

import numpy as np
import pytest

from netcov.data import Dataset, load_idx, load_raw, save_raw
from netcov.errors import CapabilityError, FormatError, InputError, ValidationError


def _write_idx(tmp_path, images, labels=None):
    n, rows, cols = images.shape
    ip = tmp_path / "images.idx"
    with open(ip, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.tobytes())
    lp = None
    if labels is not None:
        lp = tmp_path / "labels.idx"
        with open(lp, "wb") as f:
            f.write(struct.pack(">II", 0x00000801, len(labels)))
            f.write(labels.tobytes())
    return ip, lp


def test_dataset_validation():
    with pytest.raises(ValidationError):
        Dataset(name="d", inputs=np.zeros(4, dtype=np.float32))  # rank 1
    with pytest.raises(ValidationError):
        Dataset(name="d", inputs=np.array([[np.nan]], dtype=np.float32))
    with pytest.raises(ValidationError):
        Dataset(name="d", inputs=np.zeros((2, 3), dtype=np.float32),
                labels=np.zeros(3))  # label count mismatch


def test_dataset_frozen_and_head():
    ds = Dataset(name="d", inputs=np.arange(12, dtype=np.float32).reshape(4, 3),
                 labels=np.array([0, 1, 2, 3]))
    with pytest.raises(ValueError):
        ds.inputs[0, 0] = 9.0
    h = ds.head(2)
    assert len(h) == 2
    assert np.array_equal(h.inputs, ds.inputs[:2])
    assert h.labels.tolist() == [0, 1]
    assert len(ds.head(100)) == 4


def test_idx_roundtrip_and_scaling(tmp_path):
    rng = np.random.default_rng(40)
    images = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
    labels = np.array([3, 1, 4, 1, 5], dtype=np.uint8)
    ip, lp = _write_idx(tmp_path, images, labels)
    ds = load_idx(ip, lp)
    assert ds.inputs.shape == (5, 4, 3)
    assert ds.inputs.dtype == np.float32
    assert np.array_equal(ds.inputs, images.astype(np.float32) / np.float32(255.0))
    assert ds.labels.tolist() == [3, 1, 4, 1, 5]
    assert ds.inputs.min() >= 0.0 and ds.inputs.max() <= 1.0


def test_idx_limit_truncates_in_order(tmp_path):
    rng = np.random.default_rng(41)
    images = rng.integers(0, 256, size=(6, 2, 2), dtype=np.uint8)
    labels = np.arange(6, dtype=np.uint8)
    ip, lp = _write_idx(tmp_path, images, labels)
    ds = load_idx(ip, lp, limit=4)
    assert len(ds) == 4
    assert ds.labels.tolist() == [0, 1, 2, 3]
    assert np.array_equal(ds.inputs[2], images[2].astype(np.float32) / np.float32(255.0))


def test_idx_bad_magic(tmp_path):
    p = tmp_path / "bad.idx"
    p.write_bytes(struct.pack(">IIII", 0x00000701, 1, 2, 2) + b"\x00" * 4)
    with pytest.raises(FormatError):
        load_idx(p)


def test_idx_truncated_pixels(tmp_path):
    images = np.zeros((2, 2, 2), dtype=np.uint8)
    ip, _ = _write_idx(tmp_path, images)
    ip.write_bytes(ip.read_bytes()[:-3])
    with pytest.raises(FormatError):
        load_idx(ip)


def test_idx_label_count_mismatch(tmp_path):
    images = np.zeros((3, 2, 2), dtype=np.uint8)
    labels = np.zeros(2, dtype=np.uint8)
    ip, lp = _write_idx(tmp_path, images, labels)
    with pytest.raises(FormatError):
        load_idx(ip, lp)


def test_idx_label_count_checked_before_limit(tmp_path):
    images = np.zeros((4, 2, 2), dtype=np.uint8)
    labels = np.zeros(3, dtype=np.uint8)
    ip, lp = _write_idx(tmp_path, images, labels)
    with pytest.raises(FormatError):
        load_idx(ip, lp, limit=2)  # mismatch is a file defect even under limit


def test_raw_roundtrip(tmp_path):
    ds = Dataset(name="blob", inputs=np.random.default_rng(42).random((7, 3, 2)).astype(np.float32),
                 labels=np.arange(7))
    save_raw(ds, tmp_path / "d")
    clone = load_raw(tmp_path / "d")
    assert clone.name == "blob"
    assert np.array_equal(clone.inputs, ds.inputs)
    assert clone.labels.tolist() == list(range(7))
    assert clone.inputs.dtype == np.float32


def test_raw_limit(tmp_path):
    ds = Dataset(name="blob", inputs=np.arange(12, dtype=np.float32).reshape(6, 2))
    save_raw(ds, tmp_path / "d")
    clone = load_raw(tmp_path / "d", limit=2)
    assert np.array_equal(clone.inputs, ds.inputs[:2])


def test_raw_byte_count_checked(tmp_path):
    ds = Dataset(name="blob", inputs=np.zeros((3, 2), dtype=np.float32))
    save_raw(ds, tmp_path / "d")
    blob = (tmp_path / "d" / "data.bin").read_bytes()
    (tmp_path / "d" / "data.bin").write_bytes(blob[:-4])
    with pytest.raises(FormatError):
        load_raw(tmp_path / "d")


def test_raw_rejects_other_dtypes(tmp_path):
    ds = Dataset(name="blob", inputs=np.zeros((3, 2), dtype=np.float32))
    save_raw(ds, tmp_path / "d")
    man = tmp_path / "d" / "data.json"
    doc = json.loads(man.read_text())
    doc["dtype"] = "float16"
    man.write_text(json.dumps(doc))
    with pytest.raises(CapabilityError):
        load_raw(tmp_path / "d")


def test_raw_label_length_mismatch(tmp_path):
    ds = Dataset(name="blob", inputs=np.zeros((3, 2), dtype=np.float32),
                 labels=np.array([1, 2, 3]))
    save_raw(ds, tmp_path / "d")
    (tmp_path / "d" / "labels.json").write_text("[1, 2]")
    with pytest.raises(FormatError):
        load_raw(tmp_path / "d")
