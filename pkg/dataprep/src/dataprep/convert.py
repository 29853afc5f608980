"""Offline conversion from image directory trees to the TINB format."""

import logging
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .format import write_class_names, write_dataset

log = logging.getLogger(__name__)

VALID_RESOLUTIONS = (16, 32, 64)


class ConversionError(ValueError):
    pass


@dataclass
class ConversionReport:
    records: int
    num_classes: int
    skipped: int


def _decode(path, resolution):
    """RGB pixels at the target resolution, or None if undecodable.
    Grayscale sources are replicated to 3 channels by the RGB convert."""
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if im.size != (resolution, resolution):
                im = im.resize((resolution, resolution), Image.BILINEAR)
            return np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        log.warning("skipping undecodable image %s: %s", path, e)
        return None


def _collect_class_folders(root):
    """One folder per class; class order is sorted folder name."""
    classes = sorted(d for d in os.listdir(root)
                     if os.path.isdir(os.path.join(root, d)))
    if not classes:
        raise ConversionError(f"no class folders under {root}")
    out = []
    for ci, name in enumerate(classes):
        folder = os.path.join(root, name)
        paths = sorted(os.path.join(folder, f) for f in os.listdir(folder)
                       if os.path.isfile(os.path.join(folder, f)))
        out.append((name, ci, paths))
    return out


def _collect_tiny_imagenet(root, split):
    """train/<wnid>/images/*; val/images/* labeled by val_annotations.txt
    (tab-separated; only filename and wnid columns consumed). Class
    indices come from the sorted train wnid set for both splits."""
    train_dir = os.path.join(root, "train")
    if not os.path.isdir(train_dir):
        raise ConversionError(f"{root} has no train/ directory")
    wnids = sorted(d for d in os.listdir(train_dir)
                   if os.path.isdir(os.path.join(train_dir, d)))
    if not wnids:
        raise ConversionError("no wnid folders under train/")
    index = {w: i for i, w in enumerate(wnids)}

    if split == "train":
        out = []
        for w in wnids:
            img_dir = os.path.join(train_dir, w, "images")
            if not os.path.isdir(img_dir):
                img_dir = os.path.join(train_dir, w)
            paths = sorted(os.path.join(img_dir, f) for f in os.listdir(img_dir)
                           if os.path.isfile(os.path.join(img_dir, f)))
            out.append((w, index[w], paths))
        return out

    if split == "val":
        ann_path = os.path.join(root, "val", "val_annotations.txt")
        if not os.path.isfile(ann_path):
            raise ConversionError(f"missing {ann_path}")
        by_class = {w: [] for w in wnids}
        with open(ann_path) as f:
            for line in f:
                cols = line.rstrip("\n").split("\t")
                if len(cols) < 2:
                    continue
                fname, wnid = cols[0], cols[1]
                if wnid not in index:
                    raise ConversionError(
                        f"val annotation wnid {wnid!r} not present in train/")
                by_class[wnid].append(os.path.join(root, "val", "images", fname))
        return [(w, index[w], sorted(by_class[w])) for w in wnids]

    raise ConversionError(f"unknown split {split!r}")


def convert(src, layout, resolution, out_path, split="train"):
    """Convert a source tree to a TINB file plus a class-name sidecar
    (<out>.names). Record order is (class index, sorted path), so
    repeated conversions are byte-identical."""
    if resolution not in VALID_RESOLUTIONS:
        raise ConversionError(f"resolution must be one of {VALID_RESOLUTIONS}")
    if layout == "class_folders":
        groups = _collect_class_folders(src)
    elif layout == "tiny_imagenet":
        groups = _collect_tiny_imagenet(src, split)
    else:
        raise ConversionError(f"unknown layout {layout!r}")

    labels, images = [], []
    skipped = 0
    for name, ci, paths in groups:
        kept = 0
        for path in paths:
            px = _decode(path, resolution)
            if px is None:
                skipped += 1
                continue
            labels.append(ci)
            images.append(px)
            kept += 1
        if kept == 0:
            raise ConversionError(f"class {name!r} has no decodable images")

    pixels = np.stack(images)
    write_dataset(out_path, labels, pixels, num_classes=len(groups))
    write_class_names(str(out_path) + ".names", [name for name, _, _ in groups])
    return ConversionReport(records=len(labels), num_classes=len(groups),
                            skipped=skipped)
