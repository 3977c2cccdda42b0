#!/usr/bin/env python3
"""Prefetch pretrained backbone weights into the keras cache.

Tries the framework's canonical download first; for networks that block
it, the original GitHub release assets are equivalent (bit-identical
files), and --mirror <base-url> rewrites those URLs through a proxy
that exposes github.com paths.
"""

import argparse
import os
import sys
import urllib.request
from pathlib import Path

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from spillscope.backbones import list_backbones, make_base_model, weights_cached

# public release assets identical to the canonical keras-cache files
GITHUB_RELEASE_PATHS = {
    "VGG19": "fchollet/deep-learning-models/releases/download/v0.1/"
             "vgg19_weights_tf_dim_ordering_tf_kernels_notop.h5",
    "ResNet50": "keras-team/keras-applications/releases/download/resnet/"
                "resnet50_weights_tf_dim_ordering_tf_kernels_notop.h5",
    "ResNet50V2": "keras-team/keras-applications/releases/download/resnet/"
                  "resnet50v2_weights_tf_dim_ordering_tf_kernels_notop.h5",
    "InceptionV3": "fchollet/deep-learning-models/releases/download/v0.5/"
                   "inception_v3_weights_tf_dim_ordering_tf_kernels_notop.h5",
    "InceptionResNetV2": "fchollet/deep-learning-models/releases/download/v0.7/"
                         "inception_resnet_v2_weights_tf_dim_ordering_tf_kernels_notop.h5",
    "Xception": "fchollet/deep-learning-models/releases/download/v0.4/"
                "xception_weights_tf_dim_ordering_tf_kernels_notop.h5",
    "DenseNet121": "keras-team/keras-applications/releases/download/densenet/"
                   "densenet121_weights_tf_dim_ordering_tf_kernels_notop.h5",
    "NASNetMobile": "titu1994/Keras-NASNet/releases/download/v1.2/"
                    "NASNet-mobile-no-top.h5",
}


def cache_dir() -> Path:
    d = Path(os.environ.get("KERAS_HOME", Path.home() / ".keras")) / "models"
    d.mkdir(parents=True, exist_ok=True)
    return d


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--backbone", action="append",
                        help="registry name; repeatable (default: all)")
    parser.add_argument("--mirror", default="https://github.com",
                        help="base URL serving github.com release paths")
    args = parser.parse_args()

    wanted = set(args.backbone) if args.backbone else None
    failures = []
    for spec in list_backbones():
        if wanted and spec.name not in wanted:
            continue
        if weights_cached(spec):
            print(f"{spec.name}: cached ({spec.cache_fname})")
            continue
        path = GITHUB_RELEASE_PATHS.get(spec.name)
        if path:
            url = f"{args.mirror.rstrip('/')}/{path}"
            target = cache_dir() / spec.cache_fname
            try:
                print(f"{spec.name}: fetching {url}")
                urllib.request.urlretrieve(url, target)
            except OSError as exc:
                print(f"{spec.name}: mirror fetch failed ({exc})")
                target.unlink(missing_ok=True)
        try:
            # instantiating validates the cached file's hash, or falls
            # back to keras's own canonical download
            make_base_model(spec, pretrained=True)
            print(f"{spec.name}: ready")
        except Exception as exc:
            failures.append(spec.name)
            print(f"{spec.name}: UNAVAILABLE ({exc})")
    if failures:
        print(f"\nweights unavailable for: {', '.join(failures)}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
