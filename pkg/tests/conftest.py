import numpy as np

from densekit import data as D

# distinct base colors, one per class, so tiny networks can overfit
_PALETTE = np.array([
    [230, 40, 40], [40, 230, 40], [40, 40, 230], [230, 230, 40],
    [230, 40, 230], [40, 230, 230], [240, 140, 20], [140, 20, 240],
    [20, 240, 140], [120, 120, 120],
], dtype=np.float64)


def make_synth_dataset(num_classes=2, per_class=50, res=16, seed=0):
    """Class-separable synthetic images: a per-class base color with a
    per-class stripe pattern plus seeded noise."""
    rng = np.random.default_rng(seed)
    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes), per_class).astype(np.uint16)
    pixels = np.empty((n, res, res, 3), dtype=np.uint8)
    yy, xx = np.mgrid[0:res, 0:res]
    for i, c in enumerate(labels):
        base = _PALETTE[c % len(_PALETTE)]
        img = np.tile(base, (res, res, 1))
        stripe = ((xx + (c + 1) * yy) // max(2, res // 8)) % 2
        img = img * (0.7 + 0.3 * stripe[..., None])
        img += rng.normal(0, 12.0, size=img.shape)
        pixels[i] = np.clip(img, 0, 255).astype(np.uint8)
    order = rng.permutation(n)
    return D.Dataset(labels=labels[order], pixels=pixels[order],
                     num_classes=num_classes)
