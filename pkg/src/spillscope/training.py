"""Fine-tuning harness: freeze-all-but-tail transfer learning with
RMSprop, binary cross-entropy, augmentation on the training split only,
and early stopping on validation loss with best-weight restore.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass, field, asdict
from pathlib import Path

import cv2
import numpy as np

from .backbones import PREPROCESS_FNS, BackboneSpec, make_base_model
from .dataset import DatasetManifest
from .frames import Frame, load_png

logger = logging.getLogger(__name__)

POSITIVE_CLASS = "spill"           # sigmoid output 1.0 means spill
MODEL_FILENAME = "model.keras"
HISTORY_FILENAME = "history.csv"
PROVENANCE_FILENAME = "provenance.json"


@dataclass(frozen=True)
class AugmentConfig:
    horizontal_flip: bool = True
    rotation_factor: float = 0.01      # fraction of a full turn -> +/- 3.6 deg
    contrast_factor: float = 0.01      # scale sampled in [1 - c, 1 + c]

    def __post_init__(self):
        if self.rotation_factor < 0 or self.contrast_factor < 0:
            raise ValueError("augmentation factors must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    backbone: BackboneSpec
    learning_rate: float = 1e-5
    optimizer: str = "rmsprop"         # fixed by the recipe
    loss: str = "binary_crossentropy"  # fixed by the recipe
    patience: int = 5
    max_epochs: int = 50
    batch_train: int = 8
    batch_val: int = 8
    batch_test: int = 2
    trainable_tail_layers: int = 5
    aug: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.patience < 1 or self.max_epochs < 1:
            raise ValueError("patience and max_epochs must be >= 1")
        if min(self.batch_train, self.batch_val, self.batch_test) < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.optimizer != "rmsprop":
            raise ValueError("the training recipe fixes the optimizer to rmsprop")
        if self.loss != "binary_crossentropy":
            raise ValueError("the training recipe fixes the loss to binary_crossentropy")

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["backbone"] = {
            "name": self.backbone.name,
            "native_input": list(self.backbone.native_input),
            "preprocess_id": self.backbone.preprocess_id,
            "cache_fname": self.backbone.cache_fname,
        }
        return d


@dataclass(frozen=True)
class EarlyStopState:
    best_val_loss: float = math.inf
    best_epoch: int = 0
    epochs_since_improvement: int = 0


def early_stop_update(state: EarlyStopState, epoch: int, val_loss: float,
                      patience: int) -> tuple[EarlyStopState, str]:
    """Advance the early-stop state machine; returns (state, continue|stop).

    Improvement is strict (<, min_delta 0); ties count against patience.
    """
    if math.isnan(val_loss):
        logger.warning("val_loss is NaN at epoch %d; stopping", epoch)
        return state, "stop"
    if val_loss < state.best_val_loss:
        return EarlyStopState(best_val_loss=val_loss, best_epoch=epoch,
                              epochs_since_improvement=0), "continue"
    bumped = EarlyStopState(
        best_val_loss=state.best_val_loss,
        best_epoch=state.best_epoch,
        epochs_since_improvement=state.epochs_since_improvement + 1,
    )
    return bumped, ("stop" if bumped.epochs_since_improvement >= patience else "continue")


def augment(frame: Frame, cfg: AugmentConfig, rng: np.random.Generator) -> Frame:
    """Train-split augmentation: random flip, small rotation, contrast jitter."""
    px = frame.pixels
    if cfg.horizontal_flip and rng.random() < 0.5:
        px = np.fliplr(px)
    if cfg.rotation_factor > 0:
        angle = rng.uniform(-cfg.rotation_factor * 360.0, cfg.rotation_factor * 360.0)
        if angle != 0.0:
            h, w = px.shape[:2]
            m = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), angle, 1.0)
            px = cv2.warpAffine(px, m, (w, h), flags=cv2.INTER_LINEAR,
                                borderMode=cv2.BORDER_REFLECT_101)
    if cfg.contrast_factor > 0:
        scale = rng.uniform(1.0 - cfg.contrast_factor, 1.0 + cfg.contrast_factor)
        if scale != 1.0:
            mean = float(px.mean())
            adjusted = mean + (px.astype(np.float32) - mean) * scale
            px = np.clip(np.rint(adjusted), 0, 255).astype(np.uint8)
    if px is frame.pixels:
        return frame
    return Frame(np.ascontiguousarray(px), frame.modality,
                 frame.timestamp_ms, frame.source_id)


def preprocess(frame: Frame, spec: BackboneSpec) -> np.ndarray:
    """Resize to the backbone's native input, then its family preprocessing."""
    w, h = spec.native_input
    px = frame.pixels
    if (px.shape[1], px.shape[0]) != (w, h):
        if w <= px.shape[1] and h <= px.shape[0]:
            interp = cv2.INTER_AREA
        else:
            interp = cv2.INTER_LINEAR
        px = cv2.resize(px, (w, h), interpolation=interp)
    return PREPROCESS_FNS[spec.preprocess_id](px)


@dataclass(frozen=True)
class FreezeReport:
    backbone_layers: int
    trainable_backbone_layers: tuple[str, ...]
    head_layers: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "backbone_layers": self.backbone_layers,
            "trainable_backbone_layers": list(self.trainable_backbone_layers),
            "head_layers": list(self.head_layers),
        }


def build_classifier(spec: BackboneSpec, trainable_tail_layers: int = 5,
                     pretrained: bool = True):
    """Headless backbone + global-average-pool + 1-unit sigmoid head.

    All backbone layers are frozen except the last `trainable_tail_layers`
    in the framework's layer enumeration; the head is always trainable.
    Returns (model, FreezeReport).
    """
    import keras

    base = make_base_model(spec, pretrained=pretrained)
    for layer in base.layers:
        layer.trainable = False
    tail = base.layers[-trainable_tail_layers:] if trainable_tail_layers > 0 else []
    for layer in tail:
        layer.trainable = True

    x = keras.layers.GlobalAveragePooling2D(name="head_pool")(base.output)
    out = keras.layers.Dense(1, activation="sigmoid", name="head_dense")(x)
    model = keras.Model(base.input, out)

    report = FreezeReport(
        backbone_layers=len(base.layers),
        trainable_backbone_layers=tuple(l.name for l in tail),
        head_layers=("head_pool", "head_dense"),
    )
    return model, report


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    restored_epoch: int = 0

    def __len__(self) -> int:
        return len(self.val_loss)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
            for i in range(len(self.val_loss)):
                writer.writerow([i + 1, self.train_loss[i], self.val_loss[i],
                                 self.train_acc[i], self.val_acc[i]])

    @classmethod
    def load_csv(cls, path) -> "TrainHistory":
        hist = cls()
        with open(path, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                hist.train_loss.append(float(row["train_loss"]))
                hist.val_loss.append(float(row["val_loss"]))
                hist.train_acc.append(float(row["train_acc"]))
                hist.val_acc.append(float(row["val_acc"]))
        return hist


@dataclass(frozen=True)
class TrainedModel:
    backbone_name: str
    weights_path: str
    input_shape: tuple[int, int, int]
    trained_on: dict
    size_bytes: int


def _binary_metrics(scores: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    eps = 1e-7
    p = np.clip(scores.astype(np.float64), eps, 1.0 - eps)
    y = labels.astype(np.float64)
    loss = float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())
    acc = float(((scores >= 0.5).astype(np.float64) == y).mean())
    return loss, acc


def _load_split_frames(manifest: DatasetManifest, split: str) -> tuple[list[Frame], np.ndarray]:
    entries = sorted(manifest.only_split(split), key=lambda e: e.path)
    frames = [load_png(Path(manifest.root) / e.path, e.modality) for e in entries]
    labels = np.array([1.0 if e.class_label == POSITIVE_CLASS else 0.0 for e in entries],
                      dtype=np.float32)
    return frames, labels


def train(config: TrainConfig, manifest: DatasetManifest, out_dir,
          model_builder=None, val_metric_hook=None):
    """Run the fine-tuning recipe on a split, single-modality manifest.

    model_builder and val_metric_hook exist for tests: the former swaps
    in a stub model, the latter intercepts the computed per-epoch
    validation loss before the early-stop update sees it.

    Returns (TrainedModel, TrainHistory).
    """
    import keras

    modalities = {e.modality for e in manifest.entries}
    if len(modalities) != 1:
        raise ValueError(f"training manifest must be single-modality, got {modalities}")
    modality = modalities.pop()

    train_frames, y_train = _load_split_frames(manifest, "train")
    val_frames, y_val = _load_split_frames(manifest, "val")
    if not train_frames or not val_frames:
        raise ValueError("train and val splits must both be non-empty")

    keras.utils.set_random_seed(config.seed)
    if model_builder is not None:
        model, freeze_report = model_builder(config)
    else:
        model, freeze_report = build_classifier(
            config.backbone, config.trainable_tail_layers
        )
    model.compile(
        optimizer=keras.optimizers.RMSprop(learning_rate=config.learning_rate),
        loss=keras.losses.BinaryCrossentropy(),
        metrics=[keras.metrics.BinaryAccuracy(name="acc")],
    )

    spec = config.backbone
    x_val = np.stack([preprocess(f, spec) for f in val_frames])

    def predict_all(x: np.ndarray, batch: int) -> np.ndarray:
        outs = [
            np.asarray(model(x[i:i + batch], training=False))
            for i in range(0, len(x), batch)
        ]
        return np.concatenate(outs).reshape(-1)

    history = TrainHistory()
    state = EarlyStopState()
    best_weights = None
    order_rng = random.Random(config.seed)
    stopped_epoch = config.max_epochs

    for epoch in range(1, config.max_epochs + 1):
        order = list(range(len(train_frames)))
        order_rng.shuffle(order)

        # loss/acc trackers run epoch means; reset so train_on_batch's
        # last return is the per-epoch figure
        model.reset_metrics()
        out = {}
        for start in range(0, len(order), config.batch_train):
            idx = order[start:start + config.batch_train]
            batch_frames = []
            for j in idx:
                rng = np.random.default_rng([config.seed, epoch, j])
                batch_frames.append(preprocess(augment(train_frames[j], config.aug, rng), spec))
            xb = np.stack(batch_frames)
            yb = y_train[idx]
            out = model.train_on_batch(xb, yb, return_dict=True)
        train_loss = float(out["loss"])
        train_acc = float(out["acc"])

        val_scores = predict_all(x_val, config.batch_val)
        val_loss, val_acc = _binary_metrics(val_scores, y_val)
        if val_metric_hook is not None:
            val_loss = float(val_metric_hook(epoch, val_loss))

        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.train_acc.append(train_acc)
        history.val_acc.append(val_acc)

        state, decision = early_stop_update(state, epoch, val_loss, config.patience)
        if state.best_epoch == epoch:
            best_weights = [w.copy() for w in model.get_weights()]
        logger.info("epoch %d: train_loss=%.4f val_loss=%.4f val_acc=%.3f (%s)",
                    epoch, train_loss, val_loss, val_acc, decision)
        if decision == "stop":
            stopped_epoch = epoch
            break

    if best_weights is not None:
        model.set_weights(best_weights)
    history.stopped_epoch = stopped_epoch
    history.restored_epoch = state.best_epoch

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    weights_path = out_dir / MODEL_FILENAME
    model.save(weights_path)
    history.save_csv(out_dir / HISTORY_FILENAME)

    rooms = {e.room for e in manifest.entries}
    liquids = {e.liquid for e in manifest.entries}
    trained_on = {
        "modality": modality,
        "room": rooms.pop() if len(rooms) == 1 else "all",
        "liquid": liquids.pop() if len(liquids) == 1 else "all",
        "manifest_hash": manifest.content_hash(),
        "seed": config.seed,
    }
    provenance = {
        "config": config.to_json_dict(),
        "trained_on": trained_on,
        "freeze_report": freeze_report.to_json_dict() if freeze_report else None,
        "input_shape": [spec.native_input[1], spec.native_input[0], 3],
        "positive_class": POSITIVE_CLASS,
    }
    (out_dir / PROVENANCE_FILENAME).write_text(
        json.dumps(provenance, indent=2) + "\n", encoding="utf-8"
    )

    trained = TrainedModel(
        backbone_name=spec.name,
        weights_path=str(weights_path),
        input_shape=(spec.native_input[1], spec.native_input[0], 3),
        trained_on=trained_on,
        size_bytes=weights_path.stat().st_size,
    )
    return trained, history


class LoadedModel:
    """A trained classifier ready for scoring frames."""

    def __init__(self, model, spec: BackboneSpec, provenance: dict):
        self.model = model
        self.spec = spec
        self.provenance = provenance

    @property
    def modality(self) -> str:
        return self.provenance["trained_on"]["modality"]

    @property
    def backbone_name(self) -> str:
        return self.provenance["config"]["backbone"]["name"]

    @classmethod
    def load(cls, model_dir) -> "LoadedModel":
        import keras

        model_dir = Path(model_dir)
        provenance = json.loads((model_dir / PROVENANCE_FILENAME).read_text(encoding="utf-8"))
        model = keras.models.load_model(model_dir / MODEL_FILENAME)
        b = provenance["config"]["backbone"]
        spec = BackboneSpec(
            name=b["name"],
            native_input=tuple(b["native_input"]),
            preprocess_id=b["preprocess_id"],
            cache_fname=b.get("cache_fname", ""),
        )
        return cls(model, spec, provenance)

    def score_frame(self, frame: Frame) -> float:
        x = preprocess(frame, self.spec)[None, ...]
        return float(np.asarray(self.model(x, training=False)).reshape(-1)[0])

    def score_frames(self, frames: list[Frame], batch: int = 8) -> np.ndarray:
        xs = np.stack([preprocess(f, self.spec) for f in frames])
        outs = [
            np.asarray(self.model(xs[i:i + batch], training=False))
            for i in range(0, len(xs), batch)
        ]
        return np.concatenate(outs).reshape(-1)
