"""Synthetic desk-scale dataset generator: distinct colored geometric
patterns per class plus seeded noise, so small classifiers can overfit
and a nearest-centroid baseline separates the classes."""

import numpy as np

from .format import write_class_names, write_dataset

_PALETTE = np.array([
    [230, 40, 40], [40, 230, 40], [40, 40, 230], [230, 230, 40],
    [230, 40, 230], [40, 230, 230], [240, 140, 20], [140, 20, 240],
    [20, 240, 140], [240, 240, 240], [120, 60, 20], [60, 120, 200],
], dtype=np.float64)


def _pattern(class_index, res):
    """Base image for one class: a palette color shaped by one of four
    geometric masks (stripes, rings, checker, wedge)."""
    color = _PALETTE[class_index % len(_PALETTE)]
    yy, xx = np.mgrid[0:res, 0:res].astype(np.float64)
    cy = cx = (res - 1) / 2.0
    variant = class_index % 4
    period = max(2, res // 6)
    if variant == 0:
        mask = ((xx + (class_index // 4 + 1) * yy) // period) % 2
    elif variant == 1:
        r = np.hypot(yy - cy, xx - cx)
        mask = (r // period) % 2
    elif variant == 2:
        mask = ((yy // period) + (xx // period)) % 2
    else:
        mask = (np.arctan2(yy - cy, xx - cx) > 0).astype(np.float64)
    img = np.empty((res, res, 3))
    img[:] = 40.0
    img += color * (0.35 + 0.65 * mask[..., None])
    return img


def make_synthetic(num_classes, per_class, resolution, seed, out_path):
    """Write a balanced synthetic dataset; byte-deterministic in the
    arguments. Returns (labels, pixels)."""
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes), per_class).astype(np.uint16)
    pixels = np.empty((n, resolution, resolution, 3), dtype=np.uint8)
    for i, c in enumerate(labels):
        img = _pattern(int(c), resolution) + rng.normal(0.0, 14.0,
                                                        size=(resolution, resolution, 3))
        pixels[i] = np.clip(img, 0, 255).astype(np.uint8)
    order = rng.permutation(n)
    labels, pixels = labels[order], pixels[order]
    write_dataset(out_path, labels, pixels, num_classes)
    write_class_names(str(out_path) + ".names",
                      [f"synthetic_{c:03d}" for c in range(num_classes)])
    return labels, pixels


def nearest_centroid_accuracy(labels, pixels):
    """Leave-nothing-out nearest-centroid baseline, the separability
    sanity check for generated datasets."""
    x = pixels.reshape(len(labels), -1).astype(np.float64)
    classes = np.unique(labels)
    centroids = np.stack([x[labels == c].mean(axis=0) for c in classes])
    d = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    pred = classes[d.argmin(axis=1)]
    return float((pred == labels).mean())
