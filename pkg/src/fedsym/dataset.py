"""Labeled datasets: IDX (MNIST format) loading and a seeded Gaussian-blob synthesizer."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagic, CountMismatch, InvalidDataset, TruncatedFile

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class SampleStore:
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    n_classes: int

    def __post_init__(self):
        if self.features.ndim != 2:
            raise InvalidDataset(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise InvalidDataset("labels must be 1-D with one entry per feature row")
        if not np.isfinite(self.features).all():
            raise InvalidDataset("features must be finite")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise InvalidDataset(f"labels must lie in [0, {self.n_classes})")

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dims(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices) -> "SampleStore":
        idx = np.asarray(indices, dtype=np.int64)
        return SampleStore(self.features[idx], self.labels[idx], self.n_classes)


@dataclass(frozen=True)
class DatasetIndex:
    labels: np.ndarray
    l: int
    by_class: list = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    def class_sizes(self) -> np.ndarray:
        return np.array([len(ix) for ix in self.by_class], dtype=np.int64)


def index_of(store: SampleStore) -> DatasetIndex:
    """Group sample indices by label. Per-class availability is not validated here."""
    return index_labels(store.labels, store.n_classes)


def index_labels(labels, l: int) -> DatasetIndex:
    labels = np.asarray(labels, dtype=np.int64)
    if l < 2:
        raise InvalidDataset(f"need at least 2 classes, got {l}")
    if labels.size and (labels.min() < 0 or labels.max() >= l):
        raise InvalidDataset(f"labels must lie in [0, {l})")
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(l + 1))
    by_class = [order[bounds[c]:bounds[c + 1]] for c in range(l)]
    return DatasetIndex(labels, l, by_class)


# IDX ---------------------------------------------------------------------

def _read_header(buf: bytes, path, magic: int, ndim: int) -> tuple[int, ...]:
    need = 4 * (1 + ndim)
    if len(buf) < need:
        raise TruncatedFile(f"{path}: header needs {need} bytes, file has {len(buf)}")
    (found,) = struct.unpack(">I", buf[:4])
    if found != magic:
        raise BadMagic(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    return struct.unpack(f">{ndim}I", buf[4:need])


def read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    n, rows, cols = _read_header(buf, path, IDX_IMAGES_MAGIC, 3)
    body = n * rows * cols
    if len(buf) - 16 < body:
        raise TruncatedFile(f"{path}: expected {body} pixel bytes, found {len(buf) - 16}")
    return np.frombuffer(buf, dtype=np.uint8, count=body, offset=16).reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    (n,) = _read_header(buf, path, IDX_LABELS_MAGIC, 1)
    if len(buf) - 8 < n:
        raise TruncatedFile(f"{path}: expected {n} label bytes, found {len(buf) - 8}")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=8)


def load_idx(images_path, labels_path, n_classes: int | None = None) -> SampleStore:
    """Load an MNIST-format image/label pair; pixels are scaled to [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(
            f"{images_path} has {images.shape[0]} images but {labels_path} has {labels.shape[0]} labels"
        )
    feats = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    if n_classes is None:
        n_classes = max(int(labels.max()) + 1 if labels.size else 0, 2)
    return SampleStore(feats, labels, n_classes)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


# synthetic ---------------------------------------------------------------

def class_directions(l: int, d: int) -> np.ndarray:
    """Unit vectors for the class centres.

    Standard basis vectors when l <= d, so every pair of centres is equally
    far apart. Otherwise rows of a fixed-seed Gaussian draw, normalised
    (evenly spaced points on [-1, 1] when d == 1).
    """
    if l <= d:
        return np.eye(l, d)
    if d == 1:
        return np.linspace(-1.0, 1.0, l).reshape(l, 1)
    u = np.random.default_rng(0x5EED).standard_normal((l, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def synth_classification(l: int, n_per_class: int, d: int, separation: float, seed: int) -> SampleStore:
    """Seeded Gaussian blobs: class c ~ N(separation * u_c, I_d).

    Samples are ordered by class. Centres depend only on (l, d, separation),
    so stores drawn with different seeds share one underlying distribution.
    """
    if l < 2 or n_per_class < 1 or d < 1:
        raise ValueError("need l >= 2, n_per_class >= 1, d >= 1")
    if separation < 0:
        raise ValueError(f"separation must be non-negative, got {separation}")
    rng = np.random.default_rng(seed)
    centers = separation * class_directions(l, d)
    labels = np.repeat(np.arange(l, dtype=np.int64), n_per_class)
    feats = centers[labels] + rng.standard_normal((labels.size, d))
    return SampleStore(feats, labels, l)


def parse_dataset_spec(spec: str) -> dict:
    """Parse ``synthetic:l=10,n=500,d=16,sep=4[,seed=0]`` or ``idx:images=PATH,labels=PATH``."""
    kind, _, rest = spec.partition(":")
    fields = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"malformed dataset field {item!r}")
        fields[key.strip()] = value.strip()
    if kind == "synthetic":
        unknown = set(fields) - {"l", "n", "d", "sep", "seed"}
        if unknown:
            raise ValueError(f"unknown synthetic field(s): {sorted(unknown)}")
        return {
            "kind": "synthetic",
            "l": int(fields.get("l", 10)),
            "n": int(fields.get("n", 500)),
            "d": int(fields.get("d", 16)),
            "sep": float(fields.get("sep", 4.0)),
            "seed": int(fields.get("seed", 0)),
        }
    if kind == "idx":
        if "images" not in fields or "labels" not in fields:
            raise ValueError("idx dataset needs images=PATH and labels=PATH")
        return {"kind": "idx", "images": fields["images"], "labels": fields["labels"]}
    raise ValueError(f"unknown dataset kind {kind!r} (expected synthetic or idx)")


def load_dataset(spec: dict) -> SampleStore:
    if spec["kind"] == "synthetic":
        return synth_classification(spec["l"], spec["n"], spec["d"], spec["sep"], spec["seed"])
    return load_idx(os.fspath(spec["images"]), os.fspath(spec["labels"]))
