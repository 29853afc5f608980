"""Checkpoint file: every parameter, batchnorm running stats, optimizer
state and training progress, bit-exactly round-trippable.

Layout (little-endian): magic "DKCP", u16 version, u64 graph hash, then
length-prefixed float32 arrays in graph node order (parameters first,
then bn running stats, then Adam m and v), u32 adam step counter,
f64 current lr, f64 plateau best val loss (NaN when unset), u32 plateau
counter, u32 epoch, f32 best validation accuracy.
"""

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"DKCP"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    graph_hash: int
    arrays: list          # list of float32 ndarrays, fixed order
    shapes: list
    adam_t: int
    lr: float
    plateau_best: float   # NaN when the plateau controller has no best yet
    plateau_wait: int
    epoch: int
    best_val_acc: float


def collect_arrays(params, adam_state):
    """Deterministic array order: node-sorted parameters, bn running
    stats, Adam first and second moments."""
    arrays = [p.value for _, p in params.param_items()]
    for nid in sorted(params.bn_state):
        st = params.bn_state[nid]
        arrays.append(st.running_mean)
        arrays.append(st.running_var)
    arrays.extend(adam_state.m)
    arrays.extend(adam_state.v)
    return arrays


def restore_arrays(params, adam_state, arrays):
    expected = collect_arrays(params, adam_state)
    if len(arrays) != len(expected):
        raise CheckpointError(
            f"array count mismatch: checkpoint has {len(arrays)}, model needs {len(expected)}")
    for dst, src in zip(expected, arrays):
        if dst.shape != src.shape:
            raise CheckpointError(f"array shape mismatch: {dst.shape} vs {src.shape}")
        dst[...] = src


def save(ckpt, path):
    with open(path, "wb") as f:
        f.write(struct.pack("<4sHQ", MAGIC, VERSION, ckpt.graph_hash))
        f.write(struct.pack("<I", len(ckpt.arrays)))
        for a in ckpt.arrays:
            a32 = np.ascontiguousarray(a, dtype=np.float32)
            f.write(struct.pack("<I", a32.size))
            f.write(a32.tobytes())
        f.write(struct.pack("<IddIIf", ckpt.adam_t, ckpt.lr, ckpt.plateau_best,
                            ckpt.plateau_wait, ckpt.epoch, ckpt.best_val_acc))


def load(path, expected_graph_hash=None):
    with open(path, "rb") as f:
        raw = f.read()
    off = 0
    try:
        magic, version, graph_hash = struct.unpack_from("<4sHQ", raw, off)
        off += struct.calcsize("<4sHQ")
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        if expected_graph_hash is not None and graph_hash != expected_graph_hash:
            raise CheckpointError(
                f"graph hash mismatch: checkpoint {graph_hash:#x}, "
                f"expected {expected_graph_hash:#x}")
        (count,) = struct.unpack_from("<I", raw, off)
        off += 4
        arrays = []
        for _ in range(count):
            (size,) = struct.unpack_from("<I", raw, off)
            off += 4
            arr = np.frombuffer(raw, dtype="<f4", count=size, offset=off).copy()
            off += size * 4
            arrays.append(arr)
        tail = struct.Struct("<IddIIf")
        adam_t, lr, plateau_best, plateau_wait, epoch, best_val_acc = \
            tail.unpack_from(raw, off)
        off += tail.size
    except struct.error as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from None
    if off != len(raw):
        raise CheckpointError(
            f"corrupt checkpoint: {len(raw) - off} trailing bytes")
    return Checkpoint(graph_hash=graph_hash, arrays=arrays,
                      shapes=[a.shape for a in arrays],
                      adam_t=adam_t, lr=lr, plateau_best=plateau_best,
                      plateau_wait=plateau_wait, epoch=epoch,
                      best_val_acc=best_val_acc)


def from_training_state(g, params, adam_state, lr, plateau, epoch, best_val_acc):
    arrays = [a.reshape(-1).astype(np.float32) for a in collect_arrays(params, adam_state)]
    return Checkpoint(
        graph_hash=g.graph_hash(), arrays=arrays, shapes=[a.shape for a in arrays],
        adam_t=adam_state.t, lr=lr,
        plateau_best=float("nan") if plateau.best_val_loss is None else plateau.best_val_loss,
        plateau_wait=plateau.epochs_since_improvement,
        epoch=epoch, best_val_acc=best_val_acc)


def into_training_state(ckpt, g, params, adam_state, plateau):
    if ckpt.graph_hash != g.graph_hash():
        raise CheckpointError("graph hash mismatch")
    flats = collect_arrays(params, adam_state)
    if len(ckpt.arrays) != len(flats):
        raise CheckpointError("array count mismatch")
    for dst, src in zip(flats, ckpt.arrays):
        if dst.size != src.size:
            raise CheckpointError("array size mismatch")
        dst[...] = src.reshape(dst.shape)
    adam_state.t = ckpt.adam_t
    plateau.best_val_loss = None if np.isnan(ckpt.plateau_best) else ckpt.plateau_best
    plateau.epochs_since_improvement = ckpt.plateau_wait
