"""Training harness: config handling, the curriculum training loop with
schedules / augmentation / checkpointing, evaluation with per-class
analysis, and the misclassification resampling and class-weighting
procedures.
"""

import csv
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import augment as A
from . import checkpoint as CK
from . import data as D
from . import graph as G
from . import schedule as S
from .ops import weighted_softmax_cross_entropy
from .optim import AdamState, adam_step


class TrainingError(RuntimeError):
    pass


@dataclass
class CurriculumSegment:
    resolution: int
    epochs: int
    batch_size: int

    def __post_init__(self):
        if self.resolution not in (16, 32, 64):
            raise ValueError(f"resolution must be 16/32/64, got {self.resolution}")
        if self.epochs <= 0:
            raise ValueError("epochs must be > 0")


# batch sizes follow the resolution: 256 at 16/32 pixels, 64 at 64 pixels
NET1_DEFAULT_CURRICULUM = [
    CurriculumSegment(32, 15, 256),
    CurriculumSegment(64, 30, 64),
    CurriculumSegment(16, 10, 256),
    CurriculumSegment(64, 30, 64),
]
NET2_DEFAULT_CURRICULUM = [CurriculumSegment(64, 108, 128)]


@dataclass
class TrainConfig:
    dataset: str = ""
    val_dataset: str = None
    network: str = "net2"
    widths: G.WidthPlan = None
    width_divisor: int = 1
    curriculum: list = None
    batch_size: int = None           # overrides every segment when set
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    weight_decay: float = 2e-4
    schedule: str = "plateau"        # plateau | clr_replay | clr_adaptive
    clr_step_epochs: float = 6.0
    plateau_patience: int = 5
    plateau_factor: float = 0.1
    plateau_min_lr: float = 1e-7
    augment_mode: str = "none"       # none | net1 | net2
    ranges: dict = None
    seed: int = 0
    init_scheme: str = "variance_scaling"
    checkpoint_dir: str = "checkpoints"
    metrics_path: str = None         # default: <checkpoint_dir>/metrics.csv
    val_fraction: float = 0.2
    oversample: bool = False
    class_weights: bool = False
    auto_advance: bool = False       # early segment switch on saturation
    wall_clock: bool = True          # false writes 0.0 wall_seconds (exact replays)

    def resolved_curriculum(self):
        cur = self.curriculum
        if cur is None:
            cur = NET1_DEFAULT_CURRICULUM if self.network == "net1" else NET2_DEFAULT_CURRICULUM
        if self.batch_size is not None:
            cur = [replace(seg, batch_size=self.batch_size) for seg in cur]
        return cur

    def resolved_ranges(self):
        return self.ranges if self.ranges is not None else A.DEFAULT_RANGES


# ---------------------------------------------------------------------------
# Config file: flat "key = value" lines, '#' comments; CLI flags override.

_BOOL_KEYS = {"oversample", "class_weights", "auto_advance", "wall_clock"}
_INT_KEYS = {"width_divisor", "seed", "plateau_patience", "batch_size"}
_FLOAT_KEYS = {"lr", "beta1", "beta2", "adam_epsilon", "weight_decay",
               "clr_step_epochs", "plateau_factor", "plateau_min_lr", "val_fraction"}
_STR_KEYS = {"dataset", "val_dataset", "network", "schedule", "augment_mode",
             "init_scheme", "checkpoint_dir", "metrics_path"}


def parse_curriculum(text):
    """e.g. "32:15:256,64:30:64" -> segments of (resolution, epochs, batch)."""
    segs = []
    for part in text.split(","):
        res, epochs, batch = part.split(":")
        segs.append(CurriculumSegment(int(res), int(epochs), int(batch)))
    return segs


def parse_widths(text, stem=32):
    """e.g. "4,5,6;8,9,10" -> blocks [[4,5,6],[8,9,10]]."""
    blocks = [[int(w) for w in blk.split(",")] for blk in text.split(";")]
    return G.WidthPlan(blocks=blocks, stem=stem)


def apply_config_entry(cfg, key, value):
    if key in _BOOL_KEYS:
        setattr(cfg, key, value.strip().lower() in ("1", "true", "yes", "on"))
    elif key in _INT_KEYS:
        setattr(cfg, key, int(value))
    elif key in _FLOAT_KEYS:
        setattr(cfg, key, float(value))
    elif key in _STR_KEYS:
        setattr(cfg, key, value.strip() or None)
    elif key == "curriculum":
        cfg.curriculum = parse_curriculum(value)
    elif key == "widths":
        stem = cfg.widths.stem if cfg.widths else 32
        cfg.widths = parse_widths(value, stem)
    elif key == "stem":
        blocks = cfg.widths.blocks if cfg.widths else None
        if blocks is None:
            raise ValueError("set widths before stem")
        cfg.widths = G.WidthPlan(blocks=blocks, stem=int(value))
    elif key.startswith("range."):
        _, kind, pname = key.split(".")
        lo, hi = (float(v) for v in value.split(","))
        if cfg.ranges is None:
            cfg.ranges = {k: dict(v) for k, v in A.DEFAULT_RANGES.items()}
        cfg.ranges[kind][pname] = (lo, hi)
    else:
        raise ValueError(f"unknown config key {key!r}")


def load_config(path):
    cfg = TrainConfig()
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            apply_config_entry(cfg, key, value)
    return cfg


# ---------------------------------------------------------------------------
# Error-analysis operations

def oversample_weights(predictions, labels):
    """Weight 3 for misclassified samples, 1 for correct ones."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels must have equal length")
    return np.where(predictions == labels, 1.0, 3.0)


def draw_oversampled(weights, count, rng):
    p = weights / weights.sum()
    return rng.choice(len(weights), size=count, replace=True, p=p)


def class_soft_weights(per_class_precision):
    """weight_c = 1 + (1 - precision_c), normalized to mean exactly 1."""
    prec = np.asarray(per_class_precision, dtype=np.float64)
    if np.any((prec < 0) | (prec > 1)):
        raise ValueError("precision values must lie in [0, 1]")
    if not np.any(prec > 0):
        return np.ones_like(prec)
    w = 1.0 + (1.0 - prec)
    return w / w.mean()


def per_class_precision(predictions, labels, num_classes):
    prec = np.zeros(num_classes)
    for c in range(num_classes):
        mask = predictions == c
        prec[c] = (labels[mask] == c).mean() if mask.any() else 0.0
    return prec


# ---------------------------------------------------------------------------
# Evaluation

@dataclass
class EvalResult:
    top1: float
    per_class_accuracy: np.ndarray
    confusion_pairs: list      # (true, predicted, count), most frequent first
    predictions: np.ndarray
    loss: float


def evaluate(g, params, ds, resolution=None, batch_size=256):
    """Inference-mode pass over a dataset."""
    n = len(ds)
    preds = np.empty(n, dtype=np.int64)
    total_loss = 0.0
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        x = D.to_float_images(ds.pixels[idx])
        if resolution is not None and resolution != ds.resolution:
            x = np.stack([A.resize(img, resolution) for img in x])
        logits, _ = G.forward(g, params, x, "infer")
        loss, _ = weighted_softmax_cross_entropy(logits, ds.labels[idx], None)
        total_loss += loss * len(idx)
        preds[idx] = logits.reshape(len(idx), -1).argmax(axis=1)
    labels = ds.labels.astype(np.int64)
    top1 = float((preds == labels).mean())
    counts = ds.class_histogram()
    correct = np.zeros(ds.num_classes)
    np.add.at(correct, labels[preds == labels], 1)
    with np.errstate(invalid="ignore"):
        per_class = np.where(counts > 0, correct / np.maximum(counts, 1), np.nan)
    pairs = {}
    for t, p in zip(labels, preds):
        if t != p:
            pairs[(int(t), int(p))] = pairs.get((int(t), int(p)), 0) + 1
    confusion = sorted(((t, p, c) for (t, p), c in pairs.items()),
                       key=lambda r: (-r[2], r[0], r[1]))
    return EvalResult(top1=top1, per_class_accuracy=per_class,
                      confusion_pairs=confusion, predictions=preds,
                      loss=total_loss / max(n, 1))


def worst_classes(result, class_names, k=6):
    """Lowest per-class accuracies, ascending (the error-analysis table)."""
    accs = result.per_class_accuracy
    order = [c for c in np.argsort(accs, kind="stable") if not np.isnan(accs[c])]
    rows = []
    for c in order[:k]:
        name = class_names[c] if c < len(class_names) else str(c)
        rows.append((name, float(accs[c])))
    return rows


def saturated(val_accs, window=5, min_improve=0.005):
    """Optional saturation detector for auto-advancing the curriculum."""
    if len(val_accs) < window + 1:
        return False
    return max(val_accs[-window:]) - val_accs[-window - 1] < min_improve


# ---------------------------------------------------------------------------
# Training loop

METRICS_HEADER = ["epoch", "lr", "train_loss", "train_acc", "val_loss",
                  "val_acc", "wall_seconds"]


@dataclass
class TrainResult:
    metrics: list
    best_val_acc: float
    best_path: str
    last_path: str
    metrics_path: str
    graph: object
    params: object


def _epoch_plan(segments):
    plan = []
    for seg in segments:
        plan.extend([seg] * seg.epochs)
    return plan


class _LrController:
    """Unifies the three schedule modes behind lr(epoch_frac) plus an
    end-of-epoch update hook."""

    def __init__(self, cfg):
        self.mode = cfg.schedule
        self.cfg = cfg
        if self.mode == "plateau":
            self.plateau = S.PlateauState(
                patience=cfg.plateau_patience, factor=cfg.plateau_factor,
                min_lr=cfg.plateau_min_lr)
            self.current_lr = cfg.lr
        elif self.mode == "clr_replay":
            self.plateau = S.PlateauState()
            self.phases = list(S.REPLAY_PHASES)
        elif self.mode == "clr_adaptive":
            self.plateau = S.PlateauState()
            step = cfg.clr_step_epochs
            self.phases = [S.CLRPhase(cfg.lr, 6 * cfg.lr, step, 0, 4 * step)]
            self.phase_best = []
            self._current_best = 0.0
        else:
            raise ValueError(f"unknown schedule {cfg.schedule!r}")

    def lr(self, epoch_frac):
        if self.mode == "plateau":
            return self.current_lr
        for phase in self.phases:
            if phase.start_epoch <= epoch_frac < phase.end_epoch:
                return S.clr_lr(epoch_frac, phase)
        return S.clr_lr(min(epoch_frac, self.phases[-1].end_epoch), self.phases[-1])

    def end_epoch(self, epoch, val_loss, val_acc):
        if self.mode == "plateau":
            self.current_lr = self.plateau.step(val_loss, self.current_lr)
            return
        if self.mode != "clr_adaptive":
            return
        self._current_best = max(self._current_best, val_acc)
        phase = self.phases[-1] if epoch + 1 >= self.phases[-1].end_epoch else None
        for p in self.phases:
            if p.start_epoch <= epoch < p.end_epoch:
                phase = p
        if epoch + 1 >= phase.end_epoch and phase is self.phases[-1]:
            self.phase_best.append(self._current_best)
            self._current_best = 0.0
            new = S.adaptive_escalation(self.phase_best, phase)
            if new:
                self.phases.extend(new)
            else:
                step = phase.step_size_epochs
                self.phases.append(S.CLRPhase(
                    phase.base_lr, phase.max_lr, step,
                    phase.end_epoch, phase.end_epoch + 4 * step))


def build_graph_for(cfg, num_classes):
    widths = cfg.widths
    if widths is None:
        widths = G.NET1_DEFAULT_WIDTHS if cfg.network == "net1" else G.NET2_DEFAULT_WIDTHS
    if cfg.width_divisor > 1:
        d = cfg.width_divisor
        widths = G.WidthPlan(
            blocks=[[max(1, w // d) for w in blk] for blk in widths.blocks],
            stem=max(1, widths.stem // d))
    if cfg.network == "net1":
        return G.build_network1(widths, num_classes)
    if cfg.network == "net2":
        return G.build_network2(widths, num_classes)
    raise ValueError(f"unknown network {cfg.network!r}")


def _assemble_batch(train_ds, idx, seg, cfg, epoch):
    ranges = cfg.resolved_ranges()
    xs = []
    for i in idx:
        img = D.to_float_images(train_ds.pixels[i:i + 1])[0]
        if seg.resolution != train_ds.resolution:
            img = A.resize(img, seg.resolution)
        if cfg.augment_mode != "none":
            plan = A.plan_for_sample(cfg.augment_mode, ranges, cfg.seed, epoch, int(i))
            img = plan.apply(img)
        xs.append(img)
    return np.stack(xs)


def train(cfg, resume_from=None):
    if not cfg.dataset:
        raise ValueError("config must name a dataset")
    full = D.load_dataset(cfg.dataset)
    if cfg.val_dataset:
        train_ds = full
        val_ds = D.load_dataset(cfg.val_dataset)
    else:
        train_ds, val_ds = D.split_train_val(full, cfg.val_fraction, cfg.seed)

    g = build_graph_for(cfg, full.num_classes)
    params = G.init_params(g, cfg.init_scheme, cfg.seed)
    adam = AdamState(params.param_list(), lr=cfg.lr, beta1=cfg.beta1,
                     beta2=cfg.beta2, epsilon=cfg.adam_epsilon)
    ctrl = _LrController(cfg)

    os.makedirs(cfg.checkpoint_dir, exist_ok=True)
    best_path = os.path.join(cfg.checkpoint_dir, "best.ckpt")
    last_path = os.path.join(cfg.checkpoint_dir, "last.ckpt")
    metrics_path = cfg.metrics_path or os.path.join(cfg.checkpoint_dir, "metrics.csv")

    start_epoch = 0
    best_val_acc = -1.0
    metrics = []
    if resume_from is not None:
        ckpt = CK.load(resume_from, expected_graph_hash=g.graph_hash())
        CK.into_training_state(ckpt, g, params, adam, ctrl.plateau)
        if ctrl.mode == "plateau":
            ctrl.current_lr = ckpt.lr
        start_epoch = ckpt.epoch + 1
        best_val_acc = ckpt.best_val_acc

    plan = _epoch_plan(cfg.resolved_curriculum())
    class_w = None
    sample_weights = None  # oversampling distribution for the coming epoch
    if cfg.oversample and start_epoch > 0:
        res = evaluate(g, params, train_ds)
        sample_weights = oversample_weights(res.predictions, train_ds.labels)

    for epoch in range(start_epoch, len(plan)):
        seg = plan[epoch]
        t0 = time.monotonic()
        n = len(train_ds)
        shuffle_rng = np.random.default_rng([cfg.seed, epoch, 0xA5])
        if sample_weights is not None:
            order = draw_oversampled(sample_weights, n, shuffle_rng)
        else:
            order = shuffle_rng.permutation(n)

        batches = max(1, int(np.ceil(n / seg.batch_size)))
        loss_sum = 0.0
        correct = 0
        for bi in range(batches):
            idx = order[bi * seg.batch_size:(bi + 1) * seg.batch_size]
            if len(idx) == 0:
                continue
            x = _assemble_batch(train_ds, idx, seg, cfg, epoch)
            labels = train_ds.labels[idx].astype(np.int64)
            adam.lr = ctrl.lr(epoch + bi / batches)
            logits, cache = G.forward(g, params, x, "train")
            sw = class_w[labels] if class_w is not None else None
            loss, dlogits = weighted_softmax_cross_entropy(logits, labels, sw)
            if not np.isfinite(loss):
                raise TrainingError(f"NaN loss at epoch {epoch}, batch {bi}")
            params.zero_grads()
            G.backward(g, params, cache, dlogits)
            adam_step(adam, params.param_list(), cfg.weight_decay)
            loss_sum += loss * len(idx)
            correct += int((logits.reshape(len(idx), -1).argmax(axis=1) == labels).sum())

        val = evaluate(g, params, val_ds, resolution=seg.resolution)
        ctrl.end_epoch(epoch, val.loss, val.top1)

        row = {
            "epoch": epoch,
            "lr": adam.lr,
            "train_loss": loss_sum / n,
            "train_acc": correct / n,
            "val_loss": val.loss,
            "val_acc": val.top1,
            "wall_seconds": time.monotonic() - t0 if cfg.wall_clock else 0.0,
        }
        metrics.append(row)

        lr_now = ctrl.current_lr if ctrl.mode == "plateau" else adam.lr
        ck = CK.from_training_state(g, params, adam, lr_now, ctrl.plateau,
                                    epoch, max(best_val_acc, val.top1))
        CK.save(ck, last_path)
        if val.top1 > best_val_acc:
            best_val_acc = val.top1
            CK.save(ck, best_path)

        if cfg.oversample:
            res = evaluate(g, params, train_ds)
            sample_weights = oversample_weights(res.predictions, train_ds.labels)
        if cfg.class_weights:
            prec = per_class_precision(val.predictions, val_ds.labels.astype(np.int64),
                                       val_ds.num_classes)
            class_w = class_soft_weights(prec)

    write_metrics(metrics, metrics_path)
    return TrainResult(metrics=metrics, best_val_acc=best_val_acc,
                       best_path=best_path, last_path=last_path,
                       metrics_path=metrics_path, graph=g, params=params)


def write_metrics(rows, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow([row["epoch"], f"{row['lr']:.12g}",
                             f"{row['train_loss']:.9f}", f"{row['train_acc']:.6f}",
                             f"{row['val_loss']:.9f}", f"{row['val_acc']:.6f}",
                             f"{row['wall_seconds']:.3f}"])
