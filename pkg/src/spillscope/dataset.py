"""Manifest construction, stratified 70-20-10 splitting, and subset selection."""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, replace
from pathlib import Path

from .frames import CLASS_LABELS, MODALITIES
from .sources import read_meta_sidecar

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")

_PAIR_FILE_RE = re.compile(r"^pair_(\d{6})_(thermal|rgb|combined)\.png$")


@dataclass(frozen=True)
class ManifestEntry:
    path: str                      # relative to the dataset root
    modality: str
    class_label: str
    room: str = "unknown"
    liquid: str = "unknown"
    split: str = "unassigned"

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"bad modality {self.modality!r}")
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"bad class_label {self.class_label!r}")
        if self.split not in SPLITS + ("unassigned",):
            raise ValueError(f"bad split {self.split!r}")

    @property
    def pair_index(self) -> int | None:
        m = _PAIR_FILE_RE.match(Path(self.path).name)
        return int(m.group(1)) if m else None

    def cell(self) -> tuple[str, str, str, str]:
        return (self.room, self.liquid, self.modality, self.class_label)


@dataclass(frozen=True)
class SplitRatios:
    train: float = 0.7
    val: float = 0.2
    test: float = 0.1

    def __post_init__(self):
        for name, v in (("train", self.train), ("val", self.val), ("test", self.test)):
            if not 0 < v < 1:
                raise ValueError(f"{name} ratio must be in (0, 1), got {v}")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError("ratios must sum to 1")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.train, self.val, self.test)


@dataclass(frozen=True)
class DatasetManifest:
    root: str
    entries: tuple[ManifestEntry, ...]
    seed: int | None = None
    ignored: tuple[str, ...] = ()

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        if len(paths) != len(set(paths)):
            raise ValueError("manifest contains duplicate paths")
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "ignored", tuple(self.ignored))

    def __len__(self) -> int:
        return len(self.entries)

    def split_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in SPLITS + ("unassigned",)}
        for e in self.entries:
            counts[e.split] += 1
        return counts

    def only_split(self, split: str) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.split == split)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for e in self.entries:
                f.write(json.dumps({
                    "path": e.path, "modality": e.modality,
                    "class_label": e.class_label, "room": e.room,
                    "liquid": e.liquid, "split": e.split,
                }) + "\n")

    @classmethod
    def load(cls, path, root: str | None = None) -> "DatasetManifest":
        entries = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    entries.append(ManifestEntry(**json.loads(line)))
        if root is None:
            root = str(Path(path).resolve().parent)
        return cls(root=root, entries=tuple(entries))

    def content_hash(self) -> str:
        import hashlib

        digest = hashlib.sha256()
        for e in self.entries:
            digest.update(
                f"{e.path}|{e.modality}|{e.class_label}|{e.room}|{e.liquid}|{e.split}\n".encode()
            )
        return digest.hexdigest()


def build_manifest(root) -> DatasetManifest:
    """Index a capture root (modality/class/pair_*.png) into a manifest.

    Files outside the recognized layout are collected in `ignored`
    rather than silently skipped. Room/liquid come from the meta.jsonl
    sidecar written at capture time, when present.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    sidecar = read_meta_sidecar(root)

    entries: list[ManifestEntry] = []
    ignored: list[str] = []
    for p in sorted(root.rglob("*")):
        if p.is_dir():
            continue
        rel = p.relative_to(root)
        if rel.name == "meta.jsonl" or rel.name == "manifest.jsonl":
            continue
        parts = rel.parts
        m = _PAIR_FILE_RE.match(rel.name)
        if (len(parts) == 3 and parts[0] in MODALITIES
                and parts[1] in CLASS_LABELS and m and m.group(2) == parts[0]):
            meta = sidecar.get(int(m.group(1)), {})
            entries.append(ManifestEntry(
                path=str(rel),
                modality=parts[0],
                class_label=parts[1],
                room=meta.get("room", "unknown"),
                liquid=meta.get("liquid", "unknown"),
            ))
        else:
            ignored.append(str(rel))

    if not entries:
        logger.warning("no images found under %s", root)
    entries.sort(key=lambda e: e.path)
    return DatasetManifest(root=str(root), entries=tuple(entries), ignored=tuple(ignored))


def _cell_rng(seed: int, cell: tuple[str, str, str, str]) -> random.Random:
    # string seeding is sha512-based in CPython: stable across runs/platforms
    return random.Random(f"{seed}|{'|'.join(cell)}")


def _apportion(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    """Largest-remainder seat allocation; ties favor train, then val."""
    quotas = [r * n for r in ratios]
    floors = [int(q) for q in quotas]
    remaining = n - sum(floors)
    order = sorted(range(3), key=lambda i: (-(quotas[i] - floors[i]), i))
    for i in order[:remaining]:
        floors[i] += 1
    return tuple(floors)


def split_manifest(manifest: DatasetManifest, ratios: SplitRatios | None = None,
                   seed: int = 0) -> DatasetManifest:
    """Assign train/val/test stratified per (room, liquid, modality, class).

    Within each cell, entries are shuffled by a PRNG seeded from
    (seed, cell key) and allocated by largest-remainder apportionment,
    so the same seed reproduces the identical assignment regardless of
    input order. Cells with fewer than 3 entries go entirely to train.
    """
    ratios = ratios or SplitRatios()
    if any(e.split != "unassigned" for e in manifest.entries):
        raise ValueError("manifest is already split")

    cells: dict[tuple, list[ManifestEntry]] = {}
    for e in manifest.entries:
        cells.setdefault(e.cell(), []).append(e)

    assignment: dict[str, str] = {}
    for cell_key, members in cells.items():
        members = sorted(members, key=lambda e: e.path)
        if len(members) < 3:
            logger.warning(
                "cell %s has %d entries; cannot populate all splits, assigning to train",
                cell_key, len(members),
            )
            for e in members:
                assignment[e.path] = "train"
            continue
        _cell_rng(seed, cell_key).shuffle(members)
        n_train, n_val, n_test = _apportion(len(members), ratios.as_tuple())
        for i, e in enumerate(members):
            if i < n_train:
                assignment[e.path] = "train"
            elif i < n_train + n_val:
                assignment[e.path] = "val"
            else:
                assignment[e.path] = "test"

    new_entries = tuple(replace(e, split=assignment[e.path]) for e in manifest.entries)
    return DatasetManifest(root=manifest.root, entries=new_entries,
                           seed=seed, ignored=manifest.ignored)


@dataclass(frozen=True)
class BalanceReport:
    per_modality: dict
    per_class: dict
    balanced: bool
    max_delta: int
    orphans: tuple[str, ...]

    def summary(self) -> str:
        lines = [
            f"balanced: {self.balanced} (max delta {self.max_delta})",
            "per modality: " + ", ".join(f"{k}={v}" for k, v in sorted(self.per_modality.items())),
            "per class: " + ", ".join(f"{k}={v}" for k, v in sorted(self.per_class.items())),
            f"orphans: {len(self.orphans)}",
        ]
        return "\n".join(lines)


def validate_dataset(manifest: DatasetManifest) -> BalanceReport:
    """Report modality/class balance and RGB<->thermal pairing health."""
    per_modality: dict[str, int] = {}
    per_class: dict[str, int] = {}
    for e in manifest.entries:
        per_modality[e.modality] = per_modality.get(e.modality, 0) + 1
        per_class[e.class_label] = per_class.get(e.class_label, 0) + 1

    deltas = []
    for counts in (per_modality, per_class):
        vals = list(counts.values())
        if len(vals) > 1:
            deltas.append(max(vals) - min(vals))
    max_delta = max(deltas) if deltas else 0

    thermal_idx = {(e.pair_index, e.class_label)
                   for e in manifest.entries
                   if e.modality == "thermal" and e.pair_index is not None}
    orphans = tuple(
        e.path for e in manifest.entries
        if e.modality == "rgb" and e.pair_index is not None
        and (e.pair_index, e.class_label) not in thermal_idx
    )
    return BalanceReport(
        per_modality=per_modality,
        per_class=per_class,
        balanced=(max_delta == 0),
        max_delta=max_delta,
        orphans=orphans,
    )


def select_subset(manifest: DatasetManifest, modality: str,
                  room: str | None = None, liquid: str | None = None) -> DatasetManifest:
    """Entries matching the filter; split labels are preserved."""
    if modality not in MODALITIES:
        raise ValueError(f"filter modality is mandatory, got {modality!r}")
    selected = tuple(
        e for e in manifest.entries
        if e.modality == modality
        and (room is None or e.room == room)
        and (liquid is None or e.liquid == liquid)
    )
    if not selected:
        raise ValueError(
            f"empty subset for modality={modality} room={room} liquid={liquid}"
        )
    return DatasetManifest(root=manifest.root, entries=selected,
                           seed=manifest.seed, ignored=())
