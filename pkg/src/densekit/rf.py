"""Receptive fields three ways: the back-of-envelope rule used to design
the networks (+2 per 3x3 conv, x2 per pool), the exact kernel/stride
recurrence, and an empirical connectivity probe that measures RF by
perturbing input pixels.
"""

from dataclasses import dataclass

import numpy as np

from . import graph as G


@dataclass
class RFState:
    """Exact bookkeeping for one node.

    rf: side length in input pixels; jump: input-pixel stride between
    adjacent output units; lo: input index of the RF left edge of output
    unit 0 (can be negative with same padding).
    """
    rf: int
    jump: int
    lo: int


@dataclass
class RFRow:
    node_id: int
    kind: str
    paper_rf: int
    exact_rf: int
    exact_jump: int

    @property
    def mismatch(self):
        return self.paper_rf != self.exact_rf


@dataclass
class RFReport:
    rows: list
    final_paper_rf: int
    covers_image: bool      # final rf >= image side
    exceeds_double: bool    # final rf >= 2x image side
    image_size: int


def rf_paper_rule(g):
    """Per-node rf under the design rule: conv3x3 adds 2, maxpool doubles,
    everything else (1x1 conv, bn, relu, space_to_depth, concat, gap)
    leaves it unchanged; concat takes the max over its inputs."""
    rf = {}
    for n in g.nodes:
        if n.kind == "input":
            rf[n.id] = 1
        elif n.kind == "conv3x3":
            rf[n.id] = rf[n.inputs[0]] + 2
        elif n.kind == "maxpool":
            rf[n.id] = rf[n.inputs[0]] * 2
        elif n.kind == "concat":
            rf[n.id] = max(rf[i] for i in n.inputs)
        else:
            rf[n.id] = rf[n.inputs[0]]
    return rf


def rf_exact(g):
    """Per-node RFState under the exact recurrence: a 3x3 same-padded
    conv adds 2*jump; a 2x2/stride-2 window (maxpool, and geometrically
    also space_to_depth) adds jump and doubles it. Concat requires equal
    jumps and keeps the widest input interval."""
    states = {}
    for n in g.nodes:
        if n.kind == "input":
            states[n.id] = RFState(1, 1, 0)
            continue
        s = states[n.inputs[0]]
        if n.kind == "conv3x3":
            states[n.id] = RFState(s.rf + 2 * s.jump, s.jump, s.lo - s.jump)
        elif n.kind in ("maxpool", "space_to_depth"):
            states[n.id] = RFState(s.rf + s.jump, s.jump * 2, s.lo)
        elif n.kind == "concat":
            ins = [states[i] for i in n.inputs]
            jumps = {t.jump for t in ins}
            if len(jumps) != 1:
                raise ValueError(
                    f"concat node {n.id} merges unequal jumps {sorted(jumps)}")
            lo = min(t.lo for t in ins)
            hi = max(t.lo + t.rf - 1 for t in ins)
            states[n.id] = RFState(hi - lo + 1, ins[0].jump, lo)
        else:  # conv1x1, bn, relu, gap
            states[n.id] = RFState(s.rf, s.jump, s.lo)
    return states


def rf_exact_clipped(state, out_size, resolution):
    """Expected measured rf of the center unit of a node whose output is
    out_size pixels wide, on a resolution x resolution input."""
    u = out_size // 2
    lo = state.lo + u * state.jump
    hi = lo + state.rf - 1
    return min(hi, resolution - 1) - max(lo, 0) + 1


def _connectivity_forward(g, batch):
    """Forward pass in connectivity mode: all-ones conv kernels, zero
    bias, bn/relu as identity, maxpool replaced by average pooling of
    the same geometry (pooling by max would censor paths)."""
    acts = {}
    for n in g.nodes:
        if n.kind == "input":
            acts[n.id] = batch
            continue
        x = acts[n.inputs[0]]
        if n.kind in ("conv3x3", "conv1x1"):
            k = 3 if n.kind == "conv3x3" else 1
            # single output channel suffices: connectivity only
            w = np.ones((1, x.shape[1], k, k))
            from .ops import conv2d_forward
            acts[n.id], _ = conv2d_forward(x, w, np.zeros(1))
        elif n.kind == "maxpool":
            nb, c, h, wd = x.shape
            xc = x[:, :, :h // 2 * 2, :wd // 2 * 2]
            acts[n.id] = xc.reshape(nb, c, h // 2, 2, wd // 2, 2).mean(axis=(3, 5))
        elif n.kind in ("bn", "relu"):
            acts[n.id] = x
        elif n.kind == "space_to_depth":
            from .ops import space_to_depth
            acts[n.id] = space_to_depth(x, 2)
        elif n.kind == "concat":
            acts[n.id] = np.concatenate([acts[i] for i in n.inputs], axis=1)
        elif n.kind == "gap":
            acts[n.id] = x.mean(axis=(2, 3), keepdims=True)
    return acts


def rf_empirical(g, resolution, node_ids=None):
    """Measured rf side length per node, clipped at the image boundary.

    A unit pixel perturbation on a zero input propagates through the
    connectivity-mode network; scanning perturbations along the center
    row and center column tells exactly which input pixels reach the
    probed node's center unit.
    """
    shapes = G.propagate_shapes(g, resolution)
    if node_ids is None:
        node_ids = [n.id for n in g.nodes if n.kind not in ("input", "gap")]
    for nid in node_ids:
        if shapes[nid][1] < 1:
            raise ValueError(f"resolution {resolution} too small to probe node {nid}")
    r = resolution
    center = r // 2
    batch = np.zeros((2 * r, 3, r, r))
    for i in range(r):
        batch[i, 0, i, center] = 1.0       # column scan: varying row
        batch[r + i, 0, center, i] = 1.0   # row scan: varying col
    acts = _connectivity_forward(g, batch)
    measured = {}
    for nid in node_ids:
        out = acts[nid]
        _, _, oh, ow = out.shape
        unit = np.abs(out[:, :, oh // 2, ow // 2]).max(axis=1) > 1e-12
        rows = int(unit[:r].sum())
        cols = int(unit[r:].sum())
        measured[nid] = max(rows, cols)
    return measured


def rf_report(g, image_size=64):
    paper = rf_paper_rule(g)
    exact = rf_exact(g)
    rows = [RFRow(n.id, n.kind, paper[n.id], exact[n.id].rf, exact[n.id].jump)
            for n in g.nodes]
    final = paper[g.output_id]
    return RFReport(rows=rows, final_paper_rf=final,
                    covers_image=final >= image_size,
                    exceeds_double=final >= 2 * image_size,
                    image_size=image_size)


def format_report(report):
    lines = []
    header = f"{'node':>4} {'kind':<16} {'paper_rf':>8} {'exact_rf':>8} {'jump':>5}  flag"
    lines.append(header)
    lines.append("-" * len(header))
    for row in report.rows:
        flag = "mismatch" if row.mismatch else ""
        lines.append(f"{row.node_id:>4} {row.kind:<16} {row.paper_rf:>8} "
                     f"{row.exact_rf:>8} {row.exact_jump:>5}  {flag}")
    lines.append("")
    lines.append(f"final rf (design rule): {report.final_paper_rf}")
    if report.exceeds_double:
        lines.append(f"exceeds 2x image ({2 * report.image_size})")
    elif report.covers_image:
        lines.append(f"covers image ({report.image_size})")
    return "\n".join(lines)


def report_csv(report):
    out = ["node_id,kind,paper_rf,exact_rf,jump"]
    for row in report.rows:
        out.append(f"{row.node_id},{row.kind},{row.paper_rf},{row.exact_rf},{row.exact_jump}")
    return "\n".join(out) + "\n"
