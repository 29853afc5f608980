"""Layer graphs: node type, the two dense-concat network builders,
parameter init, shape propagation and the forward/backward executor.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .ops import (
    BNState, ParamTensor,
    batchnorm_backward, batchnorm_forward,
    concat_channels_backward, concat_channels_forward,
    conv2d_backward, conv2d_forward,
    global_avg_pool_backward, global_avg_pool_forward,
    maxpool2x2_backward, maxpool2x2_forward,
    relu_backward, relu_forward,
    space_to_depth, depth_to_space,
)

KINDS = ("input", "conv3x3", "conv1x1", "maxpool", "bn", "relu",
         "space_to_depth", "concat", "gap")


@dataclass
class LayerNode:
    id: int
    kind: str
    inputs: list
    width: int = None  # output channels, conv nodes only


@dataclass
class GraphSpec:
    nodes: list            # topologically ordered LayerNodes
    num_classes: int
    name: str

    def node(self, nid):
        return self._by_id[nid]

    @property
    def _by_id(self):
        return {n.id: n for n in self.nodes}

    def validate(self):
        by_id = self._by_id
        seen = set()
        n_input = 0
        consumed = set()
        for n in self.nodes:
            if n.kind not in KINDS:
                raise ValueError(f"unknown node kind {n.kind!r}")
            if n.kind == "input":
                n_input += 1
                if n.inputs:
                    raise ValueError("input node takes no inputs")
            elif n.kind == "concat":
                if len(n.inputs) < 2:
                    raise ValueError("concat needs >= 2 inputs")
            elif len(n.inputs) != 1:
                raise ValueError(f"{n.kind} node must have exactly 1 input")
            for i in n.inputs:
                if i not in seen:
                    raise ValueError(f"node {n.id} uses {i} before definition (not a topo order)")
                consumed.add(i)
            if n.id in seen:
                raise ValueError(f"duplicate node id {n.id}")
            seen.add(n.id)
        if n_input != 1:
            raise ValueError("graph must have exactly one input node")
        sinks = [n for n in self.nodes if n.id not in consumed]
        if len(sinks) != 1:
            raise ValueError(f"graph must have exactly one output node, found {len(sinks)}")
        return self

    @property
    def output_id(self):
        consumed = {i for n in self.nodes for i in n.inputs}
        return next(n.id for n in self.nodes if n.id not in consumed)

    def serialize(self):
        """One node per line: id kind width input_ids (comma separated)."""
        lines = [f"# graph {self.name} num_classes={self.num_classes}"]
        for n in self.nodes:
            width = str(n.width) if n.width is not None else "-"
            ins = ",".join(str(i) for i in n.inputs) if n.inputs else "-"
            lines.append(f"{n.id} {n.kind} {width} {ins}")
        return "\n".join(lines) + "\n"

    def graph_hash(self):
        digest = hashlib.sha256(self.serialize().encode()).digest()
        return int.from_bytes(digest[:8], "little")


def parse_graph(text):
    nodes = []
    name, num_classes = "custom", 0
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "graph":
                name = parts[1]
                for p in parts[2:]:
                    if p.startswith("num_classes="):
                        num_classes = int(p.split("=")[1])
            continue
        nid, kind, width, ins = line.split()
        nodes.append(LayerNode(
            id=int(nid), kind=kind,
            width=None if width == "-" else int(width),
            inputs=[] if ins == "-" else [int(i) for i in ins.split(",")]))
    return GraphSpec(nodes, num_classes, name).validate()


def toposort(g):
    """Return an equivalent GraphSpec in deterministic topological order
    (Kahn, smallest id first). Executor output must not depend on which
    valid order the node list came in."""
    by_id = {n.id: n for n in g.nodes}
    indeg = {n.id: len(n.inputs) for n in g.nodes}
    out_edges = {n.id: [] for n in g.nodes}
    for n in g.nodes:
        for i in n.inputs:
            out_edges[i].append(n.id)
    ready = sorted(nid for nid, d in indeg.items() if d == 0)
    order = []
    while ready:
        nid = ready.pop(0)
        order.append(by_id[nid])
        for succ in out_edges[nid]:
            indeg[succ] -= 1
            if indeg[succ] == 0:
                ready.append(succ)
        ready.sort()
    if len(order) != len(g.nodes):
        raise ValueError("graph contains a cycle")
    return GraphSpec(order, g.num_classes, g.name)


# ---------------------------------------------------------------------------
# Builders

@dataclass
class WidthPlan:
    """Channel widths for the builders.

    blocks: per-block conv widths (network 1: 3 blocks x 5 increasing
    widths; network 2: 3 groups x 4 widths). stem applies to network 2
    only.
    """
    blocks: list
    stem: int = 32


# Defaults sized so network 1 lands near 17.9M parameters with roughly
# 1000 channels entering the head, and network 2 (stem 32; ResNet-18
# widths 128/256/512 for the remaining groups) lands near 11.8M.
NET1_DEFAULT_WIDTHS = WidthPlan(blocks=[
    [128, 248, 368, 488, 608],
    [96, 112, 128, 144, 160],
    [300, 320, 340, 360, 380],
])
NET2_DEFAULT_WIDTHS = WidthPlan(blocks=[
    [128, 128, 128, 128],
    [256, 256, 256, 256],
    [512, 512, 512, 512],
], stem=32)


class _GraphBuilder:
    def __init__(self):
        self.nodes = []
        self._next = 0

    def add(self, kind, inputs, width=None):
        nid = self._next
        self._next += 1
        self.nodes.append(LayerNode(nid, kind, list(inputs), width))
        return nid

    def conv_bn_relu(self, src, width, kind="conv3x3"):
        c = self.add(kind, [src], width)
        b = self.add("bn", [c])
        return self.add("relu", [b])


def build_network1(widths=None, num_classes=200):
    """Bottleneck blocks of 5 convs + pool; each block's pooled output is
    space_to_depth'd and concatenated with the next block's pooled
    output; 1x1 conv head into global average pooling."""
    widths = widths or NET1_DEFAULT_WIDTHS
    for blk in widths.blocks:
        if any(a >= b for a, b in zip(blk, blk[1:])):
            raise ValueError(f"block widths must be strictly increasing, got {blk}")
    g = _GraphBuilder()
    x = g.add("input", [])
    block_outs = []   # post-pool output of each block
    cur = x
    for bi, blk in enumerate(widths.blocks):
        if bi >= 2:
            # concat of skip from block bi-2 with output of block bi-1
            skip = g.add("space_to_depth", [block_outs[bi - 2]])
            cur = g.add("concat", [skip, block_outs[bi - 1]])
        elif bi == 1:
            cur = block_outs[0]
        for w in blk:
            cur = g.conv_bn_relu(cur, w)
        cur = g.add("maxpool", [cur])
        block_outs.append(cur)
    if len(block_outs) >= 2:
        skip = g.add("space_to_depth", [block_outs[-2]])
        head_in = g.add("concat", [skip, block_outs[-1]])
    else:
        head_in = block_outs[-1]
    head = g.add("conv1x1", [head_in], num_classes)
    g.add("gap", [head])
    return GraphSpec(g.nodes, num_classes, "net1").validate()


def build_network2(widths=None, num_classes=200):
    """Stem conv, then groups of 4 convs with a concat shortcut spanning
    each group, bn+relu after every merge, maxpool after the merge; 1x1
    conv head into global average pooling."""
    widths = widths or NET2_DEFAULT_WIDTHS
    for grp in widths.blocks:
        if len(grp) != len(widths.blocks[0]):
            raise ValueError("all groups must have the same number of convs")
    g = _GraphBuilder()
    x = g.add("input", [])
    cur = g.conv_bn_relu(x, widths.stem)
    for grp in widths.blocks:
        group_in = cur
        for w in grp:
            cur = g.conv_bn_relu(cur, w)
        merged = g.add("concat", [group_in, cur])
        bn = g.add("bn", [merged])
        act = g.add("relu", [bn])
        cur = g.add("maxpool", [act])
    head = g.add("conv1x1", [cur], num_classes)
    g.add("gap", [head])
    return GraphSpec(g.nodes, num_classes, "net2").validate()


# ---------------------------------------------------------------------------
# Shape propagation and parameter handling

def propagate_shapes(g, resolution, in_channels=3):
    """Returns dict node id -> (c, h, w). Raises if any node's shape
    arithmetic fails at this resolution."""
    shapes = {}
    for n in g.nodes:
        if n.kind == "input":
            shapes[n.id] = (in_channels, resolution, resolution)
            continue
        ins = [shapes[i] for i in n.inputs]
        c, h, w = ins[0]
        if n.kind in ("conv3x3", "conv1x1"):
            shapes[n.id] = (n.width, h, w)
        elif n.kind == "maxpool":
            if h < 2 or w < 2:
                raise ValueError(f"node {n.id}: cannot pool {h}x{w}")
            shapes[n.id] = (c, h // 2, w // 2)
        elif n.kind in ("bn", "relu"):
            shapes[n.id] = (c, h, w)
        elif n.kind == "space_to_depth":
            if h % 2 or w % 2:
                raise ValueError(f"node {n.id}: space_to_depth on odd dims {h}x{w}")
            shapes[n.id] = (c * 4, h // 2, w // 2)
        elif n.kind == "concat":
            for (c2, h2, w2) in ins[1:]:
                if (h2, w2) != (h, w):
                    raise ValueError(
                        f"node {n.id}: concat spatial mismatch {h}x{w} vs {h2}x{w2}")
            shapes[n.id] = (sum(s[0] for s in ins), h, w)
        elif n.kind == "gap":
            shapes[n.id] = (c, 1, 1)
        else:
            raise ValueError(f"unknown kind {n.kind}")
    return shapes


class NetParams:
    """All learnable state of one graph: per-node ParamTensors plus
    batchnorm running stats, in node order."""

    def __init__(self):
        self.by_node = {}   # node id -> dict of ParamTensor
        self.bn_state = {}  # node id -> BNState

    def param_items(self):
        """(key, ParamTensor) pairs in deterministic node order."""
        out = []
        for nid in sorted(self.by_node):
            for name in sorted(self.by_node[nid]):
                out.append((f"{nid}.{name}", self.by_node[nid][name]))
        return out

    def param_list(self):
        return [p for _, p in self.param_items()]

    def zero_grads(self):
        for p in self.param_list():
            p.zero_grad()


def param_count(g, in_channels=3):
    """Conv weights + biases plus bn gamma + beta."""
    shapes = propagate_shapes(g, 64, in_channels)
    total = 0
    for n in g.nodes:
        if n.kind in ("conv3x3", "conv1x1"):
            c_in = shapes[n.inputs[0]][0]
            k = 3 if n.kind == "conv3x3" else 1
            total += n.width * c_in * k * k + n.width
        elif n.kind == "bn":
            total += 2 * shapes[n.inputs[0]][0]
    return total


def init_params(g, scheme="variance_scaling", seed=0, in_channels=3,
                bn_momentum=0.9, bn_epsilon=1e-5):
    """Conv weights: variance-scaling normal (var 2/fan_in) or small
    uniform; biases and beta zero, gamma one. Deterministic given seed."""
    if scheme not in ("variance_scaling", "uniform_small"):
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    shapes = propagate_shapes(g, 64, in_channels)
    params = NetParams()
    for n in g.nodes:
        if n.kind in ("conv3x3", "conv1x1"):
            c_in = shapes[n.inputs[0]][0]
            k = 3 if n.kind == "conv3x3" else 1
            fan_in = c_in * k * k
            if scheme == "variance_scaling":
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(n.width, c_in, k, k))
            else:
                w = rng.uniform(-0.05, 0.05, size=(n.width, c_in, k, k))
            params.by_node[n.id] = {
                "w": ParamTensor(w, "conv_weight"),
                "b": ParamTensor(np.zeros(n.width), "conv_bias"),
            }
        elif n.kind == "bn":
            c = shapes[n.inputs[0]][0]
            params.by_node[n.id] = {
                "gamma": ParamTensor(np.ones(c), "bn_gamma"),
                "beta": ParamTensor(np.zeros(c), "bn_beta"),
            }
            params.bn_state[n.id] = BNState(c, bn_momentum, bn_epsilon)
    return params


# ---------------------------------------------------------------------------
# Executor

def forward(g, params, batch, mode="train"):
    """Run the graph on an NCHW batch. Returns (logits, cache); the cache
    feeds backward exactly once."""
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    acts = {}
    caches = {}
    for n in g.nodes:
        if n.kind == "input":
            batch = np.ascontiguousarray(batch)
            if batch.dtype != np.float64:  # float64 kept for gradient oracles
                batch = batch.astype(np.float32)
            acts[n.id] = batch
            continue
        xs = [acts[i] for i in n.inputs]
        if n.kind in ("conv3x3", "conv1x1"):
            p = params.by_node[n.id]
            y, c = conv2d_forward(xs[0], p["w"].value, p["b"].value)
        elif n.kind == "maxpool":
            y, c = maxpool2x2_forward(xs[0])
        elif n.kind == "bn":
            p = params.by_node[n.id]
            y, c = batchnorm_forward(xs[0], p["gamma"].value, p["beta"].value,
                                     params.bn_state[n.id], mode)
        elif n.kind == "relu":
            y, c = relu_forward(xs[0])
        elif n.kind == "space_to_depth":
            y, c = space_to_depth(xs[0], 2), None
        elif n.kind == "concat":
            y, c = concat_channels_forward(xs)
        elif n.kind == "gap":
            y, c = global_avg_pool_forward(xs[0])
        else:
            raise ValueError(f"unknown kind {n.kind}")
        acts[n.id] = y
        caches[n.id] = c
    return acts[g.output_id], {"acts": acts, "caches": caches}


def backward(g, params, cache, dlogits):
    """Accumulate parameter gradients into params; returns d(input)."""
    caches = cache["caches"]
    grads = {g.output_id: dlogits}
    for n in reversed(g.nodes):
        if n.kind == "input":
            continue
        dy = grads.pop(n.id, None)
        if dy is None:
            continue
        c = caches[n.id]
        if n.kind in ("conv3x3", "conv1x1"):
            dx, dw, db = conv2d_backward(dy, c)
            p = params.by_node[n.id]
            p["w"].grad += dw
            p["b"].grad += db
            dxs = [dx]
        elif n.kind == "maxpool":
            dxs = [maxpool2x2_backward(dy, c)]
        elif n.kind == "bn":
            dx, dgamma, dbeta = batchnorm_backward(dy, c)
            p = params.by_node[n.id]
            p["gamma"].grad += dgamma
            p["beta"].grad += dbeta
            dxs = [dx]
        elif n.kind == "relu":
            dxs = [relu_backward(dy, c)]
        elif n.kind == "space_to_depth":
            dxs = [depth_to_space(dy, 2)]
        elif n.kind == "concat":
            dxs = concat_channels_backward(dy, c)
        elif n.kind == "gap":
            dxs = [global_avg_pool_backward(dy, c)]
        for src, dx in zip(n.inputs, dxs):
            if src in grads:
                grads[src] = grads[src] + dx
            else:
                grads[src] = dx
    input_id = next(n.id for n in g.nodes if n.kind == "input")
    return grads.get(input_id)
