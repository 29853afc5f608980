"""Seeded image augmentation: the individual transforms, the two
pipeline-sampling regimes (pick 0..all of 5 ops vs. a full random
permutation of 11 ops on half the samples), and bilinear resizing for
the multi-resolution curriculum.

Images are (3, h, w) float arrays in [0, 1]; every op clamps its output
back into that range and preserves shape.
"""

import numpy as np

NET1_OPS = ["scale", "coarse_dropout", "rotate", "additive_gaussian_noise", "crop_and_pad"]
NET2_OPS = ["hflip", "vflip", "gaussian_blur", "crop_and_pad", "scale", "translate",
            "rotate", "shear", "coarse_dropout", "multiply", "contrast_normalization"]

# ranges are a calibration choice, overridable via the config file
DEFAULT_RANGES = {
    "rotate": {"degrees": (-20.0, 20.0)},
    "scale": {"factor": (0.8, 1.2)},
    "translate": {"tx": (-0.125, 0.125), "ty": (-0.125, 0.125)},
    "shear": {"degrees": (-15.0, 15.0)},
    "crop_and_pad": {"fraction": (-0.125, 0.125)},
    "gaussian_blur": {"sigma": (0.0, 1.5)},
    "additive_gaussian_noise": {"sigma": (0.0, 0.05)},
    "coarse_dropout": {"p": (0.0, 0.15), "rect_frac": (0.10, 0.25)},
    "multiply": {"factor": (0.8, 1.2)},
    "contrast_normalization": {"alpha": (0.75, 1.25)},
    "hflip": {},
    "vflip": {},
}

_STOCHASTIC = ("additive_gaussian_noise", "coarse_dropout")


# ---------------------------------------------------------------------------
# Seeding

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(z):
    z = np.uint64(z)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def mix_seed(global_seed, epoch, sample_index):
    """Per-sample seed: SplitMix64 applied to the chained triple, so the
    result depends on nothing but (global_seed, epoch, sample_index)."""
    with np.errstate(over="ignore"):
        z = _splitmix64(np.uint64(global_seed) + _GOLDEN)
        z = _splitmix64(z + np.uint64(epoch) + _GOLDEN)
        z = _splitmix64(z + np.uint64(sample_index) + _GOLDEN)
    return int(z)


# ---------------------------------------------------------------------------
# Primitive transforms

def _check_image(img):
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"image must be (3, h, w), got {img.shape}")


def _bilinear_zero_fill(img, ys, xs):
    """Sample img at float coords (ys, xs); everything outside the image
    contributes zero."""
    _, h, w = img.shape
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = ys - y0
    fx = xs - x0
    out = np.zeros((3,) + ys.shape, dtype=img.dtype)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yy = y0 + dy
            xx = x0 + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            yc = np.clip(yy, 0, h - 1)
            xc = np.clip(xx, 0, w - 1)
            out += img[:, yc, xc] * (wy * wx * valid)
    return out


def _affine(img, m, offset=(0.0, 0.0)):
    """Inverse-map affine warp about the image center; m is the 2x2
    output->input matrix acting on (y, x), offset an extra source shift."""
    _, h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    ys = m[0][0] * (yy - cy) + m[0][1] * (xx - cx) + cy + offset[0]
    xs = m[1][0] * (yy - cy) + m[1][1] * (xx - cx) + cx + offset[1]
    return _bilinear_zero_fill(img, ys, xs)


def apply(kind, params, img):
    """Apply one augmentation; returns a new image of the same shape,
    clamped to [0, 1]. Degenerate parameters collapse to identity."""
    _check_image(img)
    _, h, w = img.shape
    if kind == "hflip":
        out = img[:, :, ::-1]
    elif kind == "vflip":
        out = img[:, ::-1, :]
    elif kind == "scale":
        s = params["factor"]
        out = _affine(img, [[1.0 / s, 0.0], [0.0, 1.0 / s]])
    elif kind == "rotate":
        t = np.deg2rad(params["degrees"])
        out = _affine(img, [[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    elif kind == "shear":
        t = np.tan(np.deg2rad(params["degrees"]))
        out = _affine(img, [[1.0, 0.0], [-t, 1.0]])
    elif kind == "translate":
        out = _affine(img, [[1.0, 0.0], [0.0, 1.0]],
                      offset=(-params["ty"] * h, -params["tx"] * w))
    elif kind == "crop_and_pad":
        # pad a border of `fraction` per side (negative crops), resampled
        # back to the original size: a central zoom with zero fill
        s = 1.0 / (1.0 + 2.0 * params["fraction"])
        out = _affine(img, [[1.0 / s, 0.0], [0.0, 1.0 / s]])
    elif kind == "gaussian_blur":
        out = _gaussian_blur(img, params["sigma"])
    elif kind == "coarse_dropout":
        out = _coarse_dropout(img, params["p"], params["rect_frac"], params["seed"])
    elif kind == "multiply":
        out = img * params["factor"]
    elif kind == "contrast_normalization":
        out = 0.5 + params["alpha"] * (img - 0.5)
    elif kind == "additive_gaussian_noise":
        rng = np.random.default_rng(params["seed"])
        out = img + rng.normal(0.0, params["sigma"], size=img.shape)
    else:
        raise ValueError(f"unknown augmentation {kind!r}")
    return np.clip(out, 0.0, 1.0).astype(img.dtype)


def _gaussian_blur(img, sigma):
    if sigma < 1e-3:
        return img
    radius = max(1, int(np.ceil(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (t / sigma) ** 2)
    kernel /= kernel.sum()
    # separable correlation with reflect padding
    p = np.pad(img, ((0, 0), (radius, radius), (0, 0)), mode="reflect")
    rows = sum(kernel[i] * p[:, i:i + img.shape[1], :] for i in range(len(kernel)))
    p = np.pad(rows, ((0, 0), (0, 0), (radius, radius)), mode="reflect")
    return sum(kernel[i] * p[:, :, i:i + img.shape[2]] for i in range(len(kernel)))


def _coarse_dropout(img, p, rect_frac, seed):
    if p <= 0.0:
        return img
    _, h, w = img.shape
    rh = max(1, round(rect_frac * h))
    rw = max(1, round(rect_frac * w))
    n_rects = int(np.ceil(p * h * w / (rh * rw)))
    rng = np.random.default_rng(seed)
    out = img.copy()
    for _ in range(n_rects):
        r0 = int(rng.integers(0, h - rh + 1))
        c0 = int(rng.integers(0, w - rw + 1))
        out[:, r0:r0 + rh, c0:c0 + rw] = 0.0
    return out


# ---------------------------------------------------------------------------
# Pipeline plans

class PipelinePlan:
    """An ordered, fully materialized list of (kind, params) steps."""

    def __init__(self, steps, seed):
        self.steps = steps
        self.seed = seed

    @property
    def is_identity(self):
        return not self.steps

    def apply(self, img):
        for kind, params in self.steps:
            img = apply(kind, params, img)
        return img


def _sample_params(kind, ranges, rng):
    params = {}
    for name, (lo, hi) in ranges[kind].items():
        params[name] = float(rng.uniform(lo, hi))
    if kind in _STOCHASTIC:
        params["seed"] = int(rng.integers(0, 2 ** 63))
    return params


def sample_plan_net1(ranges, seed):
    """Draw k uniform in {0..5}, pick k distinct ops from the 5-op list;
    application order is selection order."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(0, len(NET1_OPS) + 1))
    chosen = [NET1_OPS[i] for i in rng.choice(len(NET1_OPS), size=k, replace=False)]
    steps = [(kind, _sample_params(kind, ranges, rng)) for kind in chosen]
    return PipelinePlan(steps, seed)


def sample_plan_net2(ranges, seed):
    """Half the samples pass through untouched; the rest get all 11 ops
    in a uniformly random order."""
    rng = np.random.default_rng(seed)
    if rng.random() < 0.5:
        return PipelinePlan([], seed)
    order = rng.permutation(len(NET2_OPS))
    steps = [(NET2_OPS[i], _sample_params(NET2_OPS[i], ranges, rng)) for i in order]
    return PipelinePlan(steps, seed)


def plan_for_sample(mode, ranges, global_seed, epoch, sample_index):
    seed = mix_seed(global_seed, epoch, sample_index)
    if mode == "net1":
        return sample_plan_net1(ranges, seed)
    if mode == "net2":
        return sample_plan_net2(ranges, seed)
    if mode == "none":
        return PipelinePlan([], seed)
    raise ValueError(f"unknown augmentation mode {mode!r}")


# ---------------------------------------------------------------------------
# Resizing

def resize(img, target):
    """Bilinear resample a square image to target x target."""
    _check_image(img)
    _, h, w = img.shape
    if h != w:
        raise ValueError(f"resize expects a square image, got {h}x{w}")
    if h == target:
        return img
    scale = h / target
    coords = (np.arange(target, dtype=np.float64) + 0.5) * scale - 0.5
    ys, xs = np.meshgrid(coords, coords, indexing="ij")
    # clamp to the edge: resizing must not darken the border
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)
    fx = np.clip(xs - x0, 0.0, 1.0)
    out = (img[:, y0, x0] * (1 - fy) * (1 - fx)
           + img[:, y0, x1] * (1 - fy) * fx
           + img[:, y1, x0] * fy * (1 - fx)
           + img[:, y1, x1] * fy * fx)
    return np.clip(out, 0.0, 1.0).astype(img.dtype)


def write_ppm(img, path):
    """Binary PPM (P6) for quick visual inspection of augmentations."""
    _check_image(img)
    _, h, w = img.shape
    pixels = (np.clip(img, 0, 1) * 255.0).round().astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(pixels.transpose(1, 2, 0).tobytes())
