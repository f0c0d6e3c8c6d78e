import numpy as np
import pytest

from netcov.inference import trace_dataset
from netcov.profiling import profile_dataset
from netcov.synth import build_demo_convnet, gaussian_images, random_dense_model, random_inputs


@pytest.fixture(scope="session")
def demo_model():
    return build_demo_convnet()


@pytest.fixture(scope="session")
def demo_data():
    train = gaussian_images(120, (1, 10, 10), seed=101, name="train")
    test = gaussian_images(30, (1, 10, 10), seed=202, spread=0.95, name="test")
    return train, test


@pytest.fixture(scope="session")
def dense_model():
    return random_dense_model(np.random.default_rng(5), 4, (6, 5), 3)


@pytest.fixture(scope="session")
def dense_traces(dense_model):
    inputs = random_inputs(np.random.default_rng(8), 25, (4,))
    return tuple(trace_dataset(dense_model, inputs.inputs, "neuron"))


@pytest.fixture(scope="session")
def dense_profile(dense_model):
    inputs = random_inputs(np.random.default_rng(9), 60, (4,))
    return profile_dataset(dense_model, inputs.inputs, "neuron")
