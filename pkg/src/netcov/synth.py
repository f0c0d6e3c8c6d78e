"""Synthetic models and datasets for fixtures, demos and tests."""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .model import Model, conv2d, dense, flatten, maxpool2d, relu


def gaussian_images(n: int, shape: tuple[int, ...], seed: int, spread: float = 1.0,
                    name: str = "gaussian") -> Dataset:
    """Images drawn around mid-gray; spread scales the pixel deviation."""
    rng = np.random.default_rng(seed)
    base = 0.5 + 0.25 * spread * rng.standard_normal((n, *shape))
    inputs = np.clip(base, 0.0, 1.0).astype(np.float32)
    labels = rng.integers(0, 4, size=n, dtype=np.int64)
    return Dataset(name=name, inputs=inputs, labels=labels)


def build_demo_convnet(seed: int = 7) -> Model:
    """Small untrained convnet used by the bundled fixture and the demo.

    Channel biases are staggered across negative and positive offsets so
    that sign activity differs between channels instead of saturating.
    """
    rng = np.random.default_rng(seed)

    k1 = rng.normal(0.0, 0.8, size=(6, 1, 3, 3))
    b1 = np.linspace(-0.35, 0.25, 6)
    k2 = rng.normal(0.0, 0.5, size=(8, 6, 3, 3))
    b2 = np.linspace(-0.3, 0.3, 8)
    w3 = rng.normal(0.0, 0.45, size=(10, 32))
    b3 = np.linspace(-0.25, 0.25, 10)
    w4 = rng.normal(0.0, 0.6, size=(4, 10))
    b4 = rng.normal(0.0, 0.1, size=4)

    layers = [
        conv2d(k1, b1),
        relu(),
        maxpool2d(2),
        conv2d(k2, b2),
        relu(),
        flatten(),
        dense(w3, b3),
        relu(),
        dense(w4, b4),
    ]
    return Model(layers=layers, input_shape=(1, 10, 10), name="smallconv")


def random_dense_model(rng: np.random.Generator, n_inputs: int, hidden: tuple[int, ...],
                       n_outputs: int = 2, name: str = "randnet") -> Model:
    """Random dense/relu stack; every hidden layer is coverage relevant."""
    layers = []
    fan_in = n_inputs
    for width in hidden:
        w = rng.normal(0.0, 1.0, size=(width, fan_in))
        b = rng.normal(0.0, 0.5, size=width)
        layers.append(dense(w, b))
        layers.append(relu())
        fan_in = width
    w = rng.normal(0.0, 1.0, size=(n_outputs, fan_in))
    b = rng.normal(0.0, 0.5, size=n_outputs)
    layers.append(dense(w, b))
    return Model(layers=layers, input_shape=(n_inputs,), name=name)


def random_inputs(rng: np.random.Generator, n: int, shape: tuple[int, ...],
                  name: str = "randinputs") -> Dataset:
    inputs = rng.normal(0.0, 1.0, size=(n, *shape)).astype(np.float32)
    return Dataset(name=name, inputs=inputs)
