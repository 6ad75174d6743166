"""Dataset ingestion and image serialization.

Readers for the MNIST IDX distribution format, a deterministic synthetic
dataset for hermetic tests, evaluation-pool sampling, and the float IDX
dump format used to save perturbed images (with a JSON sidecar).

IDX layout (big endian throughout):
    u32  magic: 0x00000803 images / 0x00000801 labels
    u32  item count, then u32 rows, u32 cols for images
    u8[] payload
Float dumps reuse the IDX family with dtype byte 0x0E (float64) and 4
dimensions (n, h, w, c) so reload is bitwise exact.
"""
from __future__ import annotations

import gzip
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ContractViolationError, IdxFormatError, InsufficientPoolError
from .tensor import ImageTensor, TensorShape

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
IDX_F64_IMAGE_MAGIC = 0x00000E04


class LabeledDataset:
    """Images of one uniform shape plus integer labels in [0, num_classes)."""

    def __init__(self, images, labels, num_classes: int):
        images = list(images)
        labels = [int(l) for l in labels]
        if len(images) != len(labels):
            raise ContractViolationError(
                f"{len(images)} images but {len(labels)} labels"
            )
        if num_classes < 1:
            raise ContractViolationError("num_classes must be positive")
        if images:
            shape = images[0].shape
            for img in images:
                if img.shape != shape:
                    raise ContractViolationError("images must share one shape")
        for l in labels:
            if not 0 <= l < num_classes:
                raise ContractViolationError(
                    f"label {l} outside [0, {num_classes})"
                )
        self.images = images
        self.labels = labels
        self.num_classes = int(num_classes)

    @property
    def shape(self) -> TensorShape:
        if not self.images:
            raise ContractViolationError("empty dataset has no shape")
        return self.images[0].shape

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self):
        return iter(zip(self.images, self.labels))

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(
            [self.images[i] for i in indices],
            [self.labels[i] for i in indices],
            self.num_classes,
        )


def _open_maybe_gz(path):
    p = str(path)
    return gzip.open(p, "rb") if p.endswith(".gz") else open(p, "rb")


def _read_exact(f, count: int, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise IdxFormatError(
            f"truncated {what}: expected {count} bytes, got {len(data)}"
        )
    return data


def load_idx_images(path) -> list[ImageTensor]:
    """Parse an IDX image file into a list of (rows, cols, 1) tensors in [0, 1]."""
    with _open_maybe_gz(path) as f:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, "header"))
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(
                f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
            )
        payload = _read_exact(f, n * rows * cols, "image payload")
    arr = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    arr = arr.reshape(n, rows, cols, 1)
    return [ImageTensor(a) for a in arr]


def load_idx_labels(path) -> list[int]:
    """Parse an IDX label file into a list of small non-negative integers."""
    with _open_maybe_gz(path) as f:
        magic, n = struct.unpack(">II", _read_exact(f, 8, "header"))
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(
                f"bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
            )
        payload = _read_exact(f, n, "label payload")
    return [int(b) for b in payload]


def load_mnist_dataset(data_dir, split: str = "test") -> LabeledDataset:
    """Load a user-supplied MNIST split from data_dir.

    Expects the standard file names (train-images-idx3-ubyte /
    t10k-images-idx3-ubyte and the matching label files), optionally
    gzipped. Nothing is ever downloaded.
    """
    if split not in ("train", "test"):
        raise ContractViolationError(f"split must be train or test, got {split!r}")
    prefix = "train" if split == "train" else "t10k"
    root = Path(data_dir)
    paths = {}
    for kind, suffix in (("images", "idx3"), ("labels", "idx1")):
        base = root / f"{prefix}-{kind}-{suffix}-ubyte"
        if base.exists():
            paths[kind] = base
        elif base.with_suffix(base.suffix + ".gz").exists():
            paths[kind] = base.with_suffix(base.suffix + ".gz")
        else:
            raise FileNotFoundError(f"missing MNIST file {base}(.gz)")
    images = load_idx_images(paths["images"])
    labels = load_idx_labels(paths["labels"])
    if len(images) != len(labels):
        raise IdxFormatError(
            f"image/label count mismatch: {len(images)} vs {len(labels)}"
        )
    return LabeledDataset(images, labels, num_classes=10)


def make_synthetic_dataset(
    seed: int,
    n: int,
    shape: TensorShape,
    num_classes: int,
    noise: float = 0.08,
    background: float = 0.1,
    signal: float = 0.9,
    cells_per_class: int | None = None,
) -> LabeledDataset:
    """Deterministic stand-in dataset: noisy samples around class prototypes.

    Each prototype is a flat background with a disjoint set of bright
    "signature" cells, so class evidence is sparse the way strokes are in
    digit images. Samples are prototype + clipped Gaussian noise, labeled
    by nearest prototype (redrawn in the rare case the noise crosses to
    another prototype). Classes are balanced within one sample.

    cells_per_class controls how concentrated the class evidence is; fewer
    cells mean sparser, higher-stakes pixels.
    """
    if num_classes < 2:
        raise ContractViolationError("need at least 2 classes")
    if n < num_classes:
        raise ContractViolationError(f"need n >= num_classes, got n={n}")
    size = shape.element_count
    if cells_per_class is None:
        cells_per_class = max(1, size // (3 * num_classes))
    if cells_per_class * num_classes > size:
        cells_per_class = size // num_classes
    if cells_per_class < 1:
        raise ContractViolationError(
            f"shape {shape.as_tuple()} too small for {num_classes} prototypes"
        )

    rng = np.random.default_rng(seed)
    cells = rng.permutation(size)
    prototypes = np.full((num_classes, size), background)
    for k in range(num_classes):
        chosen = cells[k * cells_per_class : (k + 1) * cells_per_class]
        prototypes[k, chosen] = signal

    counts = [n // num_classes + (1 if k < n % num_classes else 0)
              for k in range(num_classes)]
    images, labels = [], []
    for k, count in enumerate(counts):
        made = 0
        while made < count:
            sample = np.clip(
                prototypes[k] + rng.normal(0.0, noise, size), 0.0, 1.0
            )
            nearest = int(np.argmin(((prototypes - sample) ** 2).sum(axis=1)))
            if nearest != k:
                continue  # noise crossed the boundary; redraw
            images.append(ImageTensor(sample.reshape(shape.as_tuple())))
            labels.append(k)
            made += 1

    order = rng.permutation(n)
    return LabeledDataset(
        [images[i] for i in order], [labels[i] for i in order], num_classes
    )


def sample_eval_pool(ds: LabeledDataset, oracle, n: int, seed: int) -> LabeledDataset:
    """Uniform random pool of n images the oracle classifies correctly.

    Filtering queries happen before any attack starts and are never charged
    to an attack budget.
    """
    if n < 0:
        raise ContractViolationError(f"pool size must be non-negative, got {n}")
    correct = [
        i
        for i, (img, label) in enumerate(ds)
        if oracle.query(img).predicted_class == label
    ]
    if len(correct) < n:
        raise InsufficientPoolError(
            f"requested pool of {n} but only {len(correct)} of {len(ds)} "
            f"images are classified correctly"
        )
    rng = np.random.default_rng(seed)
    chosen = [correct[i] for i in rng.permutation(len(correct))[:n]]
    return ds.subset(chosen)


def save_image_dump(images, path) -> None:
    """Write one or more images as a float64 IDX tensor (bitwise exact)."""
    if isinstance(images, ImageTensor):
        images = [images]
    if not images:
        raise ContractViolationError("nothing to dump")
    shape = images[0].shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIIII", IDX_F64_IMAGE_MAGIC, len(images),
                            shape.height, shape.width, shape.channels))
        for img in images:
            if img.shape != shape:
                raise ContractViolationError("dumped images must share one shape")
            f.write(np.ascontiguousarray(img.values, dtype=">f8").tobytes())


def load_image_dump(path) -> list[ImageTensor]:
    with open(path, "rb") as f:
        magic, n, h, w, c = struct.unpack(">IIIII", _read_exact(f, 20, "header"))
        if magic != IDX_F64_IMAGE_MAGIC:
            raise IdxFormatError(
                f"bad dump magic 0x{magic:08x}, expected 0x{IDX_F64_IMAGE_MAGIC:08x}"
            )
        payload = _read_exact(f, n * h * w * c * 8, "image payload")
    arr = np.frombuffer(payload, dtype=">f8").astype(np.float64)
    return [ImageTensor(a) for a in arr.reshape(n, h, w, c)]


def save_adversarial_record(
    image: ImageTensor,
    sidecar: dict,
    base_path,
) -> None:
    """Dump one perturbed image plus its JSON sidecar next to it.

    Sidecar schema: {index, true_class, adv_class, l0, l2, linf, queries,
    attack, seed}.
    """
    base = Path(base_path)
    save_image_dump(image, base.with_suffix(".idx"))
    keys = ("index", "true_class", "adv_class", "l0", "l2", "linf",
            "queries", "attack", "seed")
    record = {k: sidecar[k] for k in keys}
    with open(base.with_suffix(".json"), "w") as f:
        json.dump(record, f, indent=2)
        f.write("\n")
