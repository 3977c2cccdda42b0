import os

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")

import numpy as np
import pytest

from spillscope.backbones import BackboneSpec
from spillscope.frames import Frame


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def thermal_frame(rng):
    return Frame(rng.integers(0, 256, (192, 256, 3), dtype=np.uint8), "thermal")


@pytest.fixture
def rgb_frame(rng):
    return Frame(rng.integers(0, 256, (360, 640, 3), dtype=np.uint8), "rgb")


@pytest.fixture
def stub_spec():
    """Small fake backbone for training-loop tests that skip real CNNs."""
    return BackboneSpec("StubNet", (32, 32), "none")


def tiny_model_builder(config):
    """Flatten + sigmoid head; enough to learn the synthetic blob signal."""
    import keras

    model = keras.Sequential([
        keras.Input((32, 32, 3)),
        keras.layers.Flatten(name="head_flatten"),
        keras.layers.Dense(1, activation="sigmoid", name="head_dense"),
    ])
    return model, None
