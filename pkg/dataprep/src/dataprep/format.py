"""Writer (and minimal reader) for the packed TINB dataset format.

Layout (little-endian): magic "TINB", u16 version=1, u16 num_classes,
u32 record_count, u16 height, u16 width, then record_count records of
(u16 label + height*width*3 u8 RGB pixels, row-major). The class-name
sidecar is plain text, one name per line, line i naming class i.
"""

import struct

import numpy as np

MAGIC = b"TINB"
VERSION = 1
HEADER = struct.Struct("<4sHHIHH")


def write_dataset(path, labels, pixels, num_classes):
    """labels: (N,) ints; pixels: (N, h, w, 3) uint8."""
    labels = np.asarray(labels, dtype=np.uint16)
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, h, w, c = pixels.shape
    if c != 3:
        raise ValueError(f"pixels must be RGB, got {c} channels")
    if len(labels) != n:
        raise ValueError("labels and pixels length mismatch")
    if n and labels.max() >= num_classes:
        raise ValueError(f"label {labels.max()} out of range for {num_classes} classes")
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, num_classes, n, h, w))
        rec = np.zeros(n, dtype=np.dtype([("label", "<u2"), ("px", "u1", (h * w * 3,))]))
        rec["label"] = labels
        rec["px"] = pixels.reshape(n, -1)
        f.write(rec.tobytes())


def write_class_names(path, names):
    with open(path, "w") as f:
        for name in names:
            f.write(name + "\n")


def read_dataset(path):
    """Minimal reader used by this package's own round-trip checks."""
    with open(path, "rb") as f:
        raw = f.read()
    magic, version, num_classes, n, h, w = HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise ValueError("not a TINB v1 file")
    rec = np.frombuffer(raw, dtype=np.dtype([("label", "<u2"), ("px", "u1", (h * w * 3,))]),
                        count=n, offset=HEADER.size)
    return rec["label"].copy(), rec["px"].reshape(n, h, w, 3).copy(), num_classes
