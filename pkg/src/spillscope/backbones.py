"""Registry of pretrained classification backbones and their preprocessing.

Adding a backbone means adding one registry row; no training code
changes. Each family's preprocessing is a small data-driven procedure
keyed by preprocess_id, matching the published pipelines (the VGG/
ResNet "caffe" convention is BGR channel order plus ImageNet mean
subtraction).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class WeightsUnavailable(RuntimeError):
    """Pretrained weights are neither cached nor downloadable."""


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    native_input: tuple[int, int]          # (w, h)
    preprocess_id: str                     # caffe | tf | torch | none
    cache_fname: str = ""                  # weights file keras caches under ~/.keras/models

    def __post_init__(self):
        if self.native_input[0] < 32 or self.native_input[1] < 32:
            raise ValueError("native_input must be at least 32x32")
        if self.preprocess_id not in PREPROCESS_FNS:
            raise ValueError(f"unknown preprocess_id {self.preprocess_id!r}")


def _preprocess_caffe(x: np.ndarray) -> np.ndarray:
    x = x[..., ::-1].astype(np.float32)    # RGB -> BGR
    return x - np.array([103.939, 116.779, 123.68], dtype=np.float32)


def _preprocess_tf(x: np.ndarray) -> np.ndarray:
    return x.astype(np.float32) / 127.5 - 1.0


def _preprocess_torch(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float32) / 255.0
    mean = np.array([0.485, 0.456, 0.406], dtype=np.float32)
    std = np.array([0.229, 0.224, 0.225], dtype=np.float32)
    return (x - mean) / std


def _preprocess_none(x: np.ndarray) -> np.ndarray:
    return x.astype(np.float32)


PREPROCESS_FNS = {
    "caffe": _preprocess_caffe,
    "tf": _preprocess_tf,
    "torch": _preprocess_torch,
    "none": _preprocess_none,
}

_REGISTRY = (
    BackboneSpec("VGG19", (224, 224), "caffe",
                 "vgg19_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    BackboneSpec("ResNet50", (224, 224), "caffe",
                 "resnet50_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    BackboneSpec("ResNet50V2", (224, 224), "tf",
                 "resnet50v2_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    BackboneSpec("EfficientNetB3", (300, 300), "none",
                 "efficientnetb3_notop.h5"),
    BackboneSpec("InceptionV3", (299, 299), "tf",
                 "inception_v3_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    BackboneSpec("InceptionResNetV2", (299, 299), "tf",
                 "inception_resnet_v2_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    BackboneSpec("Xception", (299, 299), "tf",
                 "xception_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    BackboneSpec("DenseNet121", (224, 224), "torch",
                 "densenet121_weights_tf_dim_ordering_tf_kernels_notop.h5"),
    BackboneSpec("NASNetMobile", (224, 224), "tf",
                 "nasnet_mobile_no_top.h5"),
    BackboneSpec("EfficientNetV2B3", (300, 300), "none",
                 "efficientnetv2-b3_notop.h5"),
    BackboneSpec("ConvNeXtBase", (224, 224), "none",
                 "convnext_base_notop.h5"),
)

_BY_NAME = {spec.name: spec for spec in _REGISTRY}


def list_backbones() -> list[BackboneSpec]:
    return list(_REGISTRY)


def get_backbone(name: str) -> BackboneSpec:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise KeyError(
            f"unknown backbone {name!r}; known: {', '.join(_BY_NAME)}"
        ) from None


def weights_cached(spec: BackboneSpec) -> bool:
    cache = Path(os.environ.get("KERAS_HOME", Path.home() / ".keras")) / "models"
    return (cache / spec.cache_fname).exists()


def cached_backbones() -> list[BackboneSpec]:
    return [s for s in _REGISTRY if weights_cached(s)]


def make_base_model(spec: BackboneSpec, pretrained: bool = True):
    """Instantiate the headless backbone (lazy keras import)."""
    import keras

    ctor = getattr(keras.applications, spec.name)
    weights = "imagenet" if pretrained else None
    w, h = spec.native_input
    try:
        return ctor(include_top=False, weights=weights, input_shape=(h, w, 3))
    except Exception as exc:
        if pretrained and not weights_cached(spec):
            raise WeightsUnavailable(
                f"pretrained weights for {spec.name} are not cached and could not "
                f"be downloaded; prefetch {spec.cache_fname} into ~/.keras/models "
                f"(see scripts/fetch_weights.py)"
            ) from exc
        raise
