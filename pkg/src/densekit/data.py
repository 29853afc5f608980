"""Packed binary dataset format and batch assembly.

Layout (little-endian): magic "TINB", u16 version=1, u16 num_classes,
u32 record_count, u16 height, u16 width, then record_count records of
(u16 label + height*width*3 u8 RGB pixels, row-major). Class names live
in a plain-text sidecar, one per line.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"TINB"
VERSION = 1
HEADER = struct.Struct("<4sHHIHH")


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    labels: np.ndarray        # (N,) uint16
    pixels: np.ndarray        # (N, h, w, 3) uint8
    num_classes: int
    class_names: list = field(default_factory=list)

    @property
    def resolution(self):
        return self.pixels.shape[1]

    def __len__(self):
        return len(self.labels)

    def class_histogram(self):
        return np.bincount(self.labels, minlength=self.num_classes)


def save_dataset(ds, path):
    n, h, w, _ = ds.pixels.shape
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, ds.num_classes, n, h, w))
        rec = np.zeros(n, dtype=np.dtype([("label", "<u2"), ("px", "u1", (h * w * 3,))]))
        rec["label"] = ds.labels
        rec["px"] = ds.pixels.reshape(n, -1)
        f.write(rec.tobytes())


def load_dataset(path, class_names_path=None):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < HEADER.size:
        raise DatasetFormatError(f"file too short for header: {len(raw)} bytes")
    magic, version, num_classes, count, h, w = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}")
    rec_size = 2 + h * w * 3
    expected = HEADER.size + count * rec_size
    if len(raw) != expected:
        raise DatasetFormatError(
            f"truncated or oversized file: expected {expected} bytes, got {len(raw)}")
    rec = np.frombuffer(raw, dtype=np.dtype([("label", "<u2"), ("px", "u1", (h * w * 3,))]),
                        count=count, offset=HEADER.size)
    labels = rec["label"].copy()
    if count and labels.max() >= num_classes:
        raise DatasetFormatError(
            f"label {labels.max()} out of range for {num_classes} classes")
    pixels = rec["px"].reshape(count, h, w, 3).copy()
    class_names = []
    if class_names_path is not None:
        with open(class_names_path) as f:
            class_names = [line.rstrip("\n") for line in f if line.strip()]
    return Dataset(labels=labels, pixels=pixels, num_classes=num_classes,
                   class_names=class_names)


def to_float_images(pixels):
    """u8 (N, h, w, 3) -> float32 (N, 3, h, w) in [0, 1]."""
    return (pixels.astype(np.float32) / 255.0).transpose(0, 3, 1, 2)


def split_train_val(ds, val_fraction=0.2, seed=0):
    """Seeded 80/20-style split used when no explicit validation file is
    given; membership is deterministic in (len, seed)."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    n_val = max(1, int(round(len(ds) * val_fraction)))
    val_idx = np.sort(order[:n_val])
    train_idx = np.sort(order[n_val:])
    def subset(idx):
        return Dataset(labels=ds.labels[idx], pixels=ds.pixels[idx],
                       num_classes=ds.num_classes, class_names=ds.class_names)
    return subset(train_idx), subset(val_idx)
