"""Direction-aware GNN model zoo over precomputed scaled adjacency matrices.

The central layer blends a pair of opposite-direction matrices (M, N) through
one directional parameter:

    out = (1 + a) * a * AGG(M, X) + (1 + a) * (1 - a) * AGG(N, X)

so a = -1 excludes the pair, a = 0 keeps only the N side, a = 0.5 balances
both at 0.75 each, and a = 1 keeps only the M side with coefficient 2.
The special values a = 2 and a = 3 aggregate over the union respectively the
intersection of the two supports instead. Three such blocks (first-scale pair,
meeting pair, two-hop pair) feed an intra-layer fusion, and stacked layers feed
a cross-layer fusion (jumping-knowledge max/concat or plain addition/last).
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from scalegraph.autodiff import (
    BatchNormState,
    Tensor,
    add,
    add_bias,
    batchnorm,
    concat_cols,
    dropout,
    glorot_uniform,
    matmul,
    maximum,
    relu,
    scale,
    spmm,
)
from scalegraph.graphdata import DirectedGraph
from scalegraph.scales import model_matrix_family, proximity_matrix
from scalegraph.sparse import (
    SparseMatrix,
    add_self_loops,
    pattern_intersection,
    pattern_union,
    sym_normalize,
    transpose,
)

DIRECTION_VALUES = (-1.0, 0.0, 0.5, 1.0, 2.0, 3.0)
FAMILIES = ("scalenet", "one_ig", "one_igi2", "one_igu2", "one_igu3",
            "one_ym", "gcn", "mlp", "dirgnn_lite")
COMB1_CHOICES = ("add", "jk_max", "jk_cat")
COMB2_CHOICES = ("last", "jk_max", "jk_cat")


@dataclass
class ModelConfig:
    """Everything a model build needs; serializes to/from JSON for manifests."""

    family: str = "scalenet"
    alpha: float = 0.5
    beta: float = -1.0
    gamma: float = -1.0
    layers: int = 2
    hidden: int = 64
    comb1: str = "add"
    comb2: str = "last"
    selfloop_mode: str = "keep"
    second_scale_selfloops: str = "keep"
    use_bn: bool = False
    use_relu: bool = True
    dropout: float = 0.0
    lr: float = 0.01

    def __post_init__(self):
        self.alpha, self.beta, self.gamma = (float(self.alpha), float(self.beta),
                                             float(self.gamma))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        for name, value in (("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)):
            if value not in DIRECTION_VALUES:
                raise ValueError(f"{name} must be one of {DIRECTION_VALUES}, got {value}")
        if self.family == "scalenet" and all(v == -1.0 for v in (self.alpha, self.beta, self.gamma)):
            raise ValueError("scalenet needs at least one direction parameter != -1")
        if not 1 <= self.layers <= 5:
            raise ValueError("layers must be in 1..5")
        if self.hidden < 1:
            raise ValueError("hidden width must be >= 1")
        if self.comb1 not in COMB1_CHOICES or self.comb2 not in COMB2_CHOICES:
            raise ValueError(f"comb1 must be in {COMB1_CHOICES} and comb2 in {COMB2_CHOICES}")
        if self.selfloop_mode not in ("add", "remove", "keep"):
            raise ValueError(f"bad selfloop_mode {self.selfloop_mode!r}")
        if self.second_scale_selfloops not in ("keep", "remove"):
            raise ValueError(f"bad second_scale_selfloops {self.second_scale_selfloops!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json(text):
        payload = json.loads(text) if isinstance(text, str) else dict(text)
        return ModelConfig(**payload)


def direction_coefficients(alpha: float):
    """Coefficient pair ((1+a)a, (1+a)(1-a)) for the M and N sides."""
    return (1.0 + alpha) * alpha, (1.0 + alpha) * (1.0 - alpha)


def agg_b(alpha: float, m: SparseMatrix, n: SparseMatrix, x: Tensor, weight: Tensor) -> Tensor:
    """Bidirectional aggregation of the matrix pair (m, n) with shared weight.

    alpha = 2 aggregates over the support union, alpha = 3 over the
    intersection; alpha = -1 yields an exactly zero block.
    """
    if float(alpha) not in DIRECTION_VALUES:
        raise ValueError(f"alpha must be one of {DIRECTION_VALUES}, got {alpha}")
    if alpha == -1:
        return Tensor(np.zeros((m.n_rows, weight.data.shape[1])))
    h = matmul(x, weight)
    if alpha == 2:
        return spmm(pattern_union(m, n), h)
    if alpha == 3:
        return spmm(pattern_intersection(m, n), h)
    c_m, c_n = direction_coefficients(alpha)
    if c_m == 0.0:
        return scale(spmm(n, h), c_n)
    if c_n == 0.0:
        return scale(spmm(m, h), c_m)
    return add(scale(spmm(m, h), c_m), scale(spmm(n, h), c_n))


# -- layers ---------------------------------------------------------------------


class _PostOps:
    """Optional batchnorm / relu / dropout shared by every layer type."""

    def __init__(self, cfg, width):
        self.cfg = cfg
        self.bn_gamma = self.bn_beta = self.bn_state = None
        if cfg.use_bn:
            self.bn_gamma = Tensor(np.ones((1, width)), requires_grad=True)
            self.bn_beta = Tensor(np.zeros((1, width)), requires_grad=True)
            self.bn_state = BatchNormState.for_width(width)

    def apply(self, h, training, rng):
        if self.cfg.use_bn:
            h = batchnorm(h, self.bn_gamma, self.bn_beta, self.bn_state, training)
        if self.cfg.use_relu:
            h = relu(h)
        if self.cfg.dropout > 0.0 and training:
            if rng is None:
                raise ValueError("training forward with dropout needs an rng")
            h = dropout(h, self.cfg.dropout, rng, training)
        return h

    def params(self):
        return [p for p in (self.bn_gamma, self.bn_beta) if p is not None]

    def states(self):
        return [self.bn_state] if self.bn_state is not None else []


class AggBlock:
    """One bidirectional pair block with its shared linear map."""

    def __init__(self, param, pair_or_single, in_dim, out_dim, rng):
        self.param = float(param)
        self.mats = pair_or_single  # (M, N) for coefficient mode, (S,) for union/intersection
        self.weight = Tensor(glorot_uniform(in_dim, out_dim, rng), requires_grad=True)

    def __call__(self, x):
        h = matmul(x, self.weight)
        if len(self.mats) == 1:
            return spmm(self.mats[0], h)
        c_m, c_n = direction_coefficients(self.param)
        m, n = self.mats
        if c_m == 0.0:
            return scale(spmm(n, h), c_n)
        if c_n == 0.0:
            return scale(spmm(m, h), c_m)
        return add(scale(spmm(m, h), c_m), scale(spmm(n, h), c_n))


def prepare_direction_blocks(adj: SparseMatrix, cfg: ModelConfig):
    """Normalized matrices for the three pair blocks, precomputed once per run."""
    family = model_matrix_family(adj, cfg.selfloop_mode, cfg.second_scale_selfloops)
    blocks = []
    for param, (wm, wn) in ((cfg.alpha, ("A", "T")), (cfg.beta, ("AT", "TA")),
                            (cfg.gamma, ("AA", "TT"))):
        if param == -1.0:
            continue
        if param == 2.0:
            mats = (sym_normalize(pattern_union(family[wm], family[wn])),)
        elif param == 3.0:
            mats = (sym_normalize(pattern_intersection(family[wm], family[wn])),)
        else:
            mats = (sym_normalize(family[wm]), sym_normalize(family[wn]))
        blocks.append((param, mats))
    if not blocks:
        raise ValueError("all direction blocks are excluded")
    return blocks


class ScaleNetLayer:
    def __init__(self, cfg, block_mats, in_dim, rng):
        self.cfg = cfg
        self.blocks = [AggBlock(param, mats, in_dim, cfg.hidden, rng)
                       for param, mats in block_mats]
        self.proj = None
        if cfg.comb1 == "jk_cat":
            self.proj = Tensor(glorot_uniform(len(self.blocks) * cfg.hidden, cfg.hidden, rng),
                               requires_grad=True)
        self.bias = Tensor(np.zeros((1, cfg.hidden)), requires_grad=True)
        self.post = _PostOps(cfg, cfg.hidden)

    def __call__(self, x, training, rng):
        outs = [block(x) for block in self.blocks]
        if self.cfg.comb1 == "jk_cat":
            fused = matmul(concat_cols(outs), self.proj)
        elif self.cfg.comb1 == "jk_max":
            fused = outs[0]
            for out in outs[1:]:
                fused = maximum(fused, out)
        else:
            fused = outs[0]
            for out in outs[1:]:
                fused = add(fused, out)
        return self.post.apply(add_bias(fused, self.bias), training, rng)

    def params(self):
        out = [b.weight for b in self.blocks]
        if self.proj is not None:
            out.append(self.proj)
        out.append(self.bias)
        return out + self.post.params()

    def states(self):
        return self.post.states()


class ChannelLayer:
    """Parallel single-matrix channels, each with its own linear map.

    Channels fuse by (optionally coefficient-weighted) addition or by column
    concatenation followed by a projection back to the layer width.
    """

    def __init__(self, cfg, mats, in_dim, rng, coefs=None, fuse="sum"):
        self.cfg = cfg
        self.mats = list(mats)
        self.coefs = list(coefs) if coefs is not None else [1.0] * len(self.mats)
        self.fuse = fuse
        self.weights = [Tensor(glorot_uniform(in_dim, cfg.hidden, rng), requires_grad=True)
                        for _ in self.mats]
        self.proj = None
        if fuse == "cat":
            self.proj = Tensor(glorot_uniform(len(self.mats) * cfg.hidden, cfg.hidden, rng),
                               requires_grad=True)
        self.bias = Tensor(np.zeros((1, cfg.hidden)), requires_grad=True)
        self.post = _PostOps(cfg, cfg.hidden)

    def __call__(self, x, training, rng):
        outs = []
        for mat, w, c in zip(self.mats, self.weights, self.coefs):
            term = spmm(mat, matmul(x, w))
            outs.append(scale(term, c) if c != 1.0 else term)
        if self.fuse == "cat":
            fused = matmul(concat_cols(outs), self.proj)
        else:
            fused = outs[0]
            for out in outs[1:]:
                fused = add(fused, out)
        return self.post.apply(add_bias(fused, self.bias), training, rng)

    def params(self):
        out = list(self.weights)
        if self.proj is not None:
            out.append(self.proj)
        out.append(self.bias)
        return out + self.post.params()

    def states(self):
        return self.post.states()


class DenseLayer:
    """Feature-only linear layer (the adjacency-blind baseline)."""

    def __init__(self, cfg, in_dim, rng):
        self.weight = Tensor(glorot_uniform(in_dim, cfg.hidden, rng), requires_grad=True)
        self.bias = Tensor(np.zeros((1, cfg.hidden)), requires_grad=True)
        self.post = _PostOps(cfg, cfg.hidden)

    def __call__(self, x, training, rng):
        return self.post.apply(add_bias(matmul(x, self.weight), self.bias), training, rng)

    def params(self):
        return [self.weight, self.bias] + self.post.params()

    def states(self):
        return self.post.states()


class Model:
    """Stacked layers, cross-layer fusion, and a linear classifier head."""

    def __init__(self, cfg: ModelConfig, layers, n_classes, rng):
        self.config = cfg
        self.layers = layers
        head_in = cfg.hidden * (cfg.layers if cfg.comb2 == "jk_cat" else 1)
        self.head_weight = Tensor(glorot_uniform(head_in, n_classes, rng), requires_grad=True)
        self.head_bias = Tensor(np.zeros((1, n_classes)), requires_grad=True)

    def forward(self, features, training=False, rng=None) -> Tensor:
        x = Tensor(features)
        outs = []
        for layer in self.layers:
            x = layer(x, training, rng)
            outs.append(x)
        if self.config.comb2 == "jk_cat":
            fused = concat_cols(outs)
        elif self.config.comb2 == "jk_max":
            fused = outs[0]
            for out in outs[1:]:
                fused = maximum(fused, out)
        else:
            fused = outs[-1]
        return add_bias(matmul(fused, self.head_weight), self.head_bias)

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        out.extend([self.head_weight, self.head_bias])
        return out

    def bn_states(self):
        out = []
        for layer in self.layers:
            out.extend(layer.states())
        return out

    def snapshot(self):
        return ([p.data.copy() for p in self.params()],
                [s.copy() for s in self.bn_states()])

    def restore(self, snap):
        datas, states = snap
        for p, data in zip(self.params(), datas):
            p.data = data.copy()
        for live, saved in zip(self.bn_states(), states):
            live.running_mean = saved.running_mean.copy()
            live.running_var = saved.running_var.copy()


# -- family wiring -----------------------------------------------------------------


def _norm(pat, selfloop_mode="keep"):
    return sym_normalize(pat, selfloop_mode)


def build_matrix_channel_model(cfg: ModelConfig, graph: DirectedGraph, matrices,
                               seed=0, coefs=None, fuse="sum") -> Model:
    """Model over explicit (already normalized) channel matrices."""
    rng = np.random.default_rng(seed)
    layers = []
    in_dim = graph.d
    for _ in range(cfg.layers):
        layers.append(ChannelLayer(cfg, matrices, in_dim, rng, coefs=coefs, fuse=fuse))
        in_dim = cfg.hidden
    return Model(cfg, layers, graph.n_classes, rng)


def build_model(cfg: ModelConfig, graph: DirectedGraph, seed=0) -> Model:
    """Wire a model family over the graph's scaled adjacency matrices."""
    rng = np.random.default_rng(seed)
    adj = graph.adjacency.pattern()
    first = lambda: model_matrix_family(adj, cfg.selfloop_mode, cfg.second_scale_selfloops)

    if cfg.family == "scalenet":
        blocks = prepare_direction_blocks(adj, cfg)
        layers = []
        in_dim = graph.d
        for _ in range(cfg.layers):
            layers.append(ScaleNetLayer(cfg, blocks, in_dim, rng))
            in_dim = cfg.hidden
        return Model(cfg, layers, graph.n_classes, rng)

    if cfg.family == "mlp":
        layers = []
        in_dim = graph.d
        for _ in range(cfg.layers):
            layers.append(DenseLayer(cfg, in_dim, rng))
            in_dim = cfg.hidden
        return Model(cfg, layers, graph.n_classes, rng)

    if cfg.family in ("one_ig", "one_igi2", "one_igu2", "one_igu3"):
        fam = first()
        mats = [_norm(fam["A"]), _norm(fam["T"])]
        if cfg.family == "one_igi2":
            mats.append(_norm(proximity_matrix(adj, 2, "intersect", True)))
        elif cfg.family == "one_igu2":
            mats.append(_norm(proximity_matrix(adj, 2, "union", True)))
        elif cfg.family == "one_igu3":
            mats.append(_norm(proximity_matrix(adj, 2, "union", True)))
            mats.append(_norm(proximity_matrix(adj, 3, "union", True)))
        return build_matrix_channel_model(cfg, graph, mats, seed=seed)

    if cfg.family == "one_ym":
        fam = first()
        mats = [_norm(pattern_union(fam["A"], fam["T"])), _norm(fam["AT"]), _norm(fam["TA"])]
        return build_matrix_channel_model(cfg, graph, mats, seed=seed, fuse="cat")

    if cfg.family == "gcn":
        sym = _norm(add_self_loops(pattern_union(adj, transpose(adj))))
        return build_matrix_channel_model(cfg, graph, [sym], seed=seed)

    if cfg.family == "dirgnn_lite":
        fam = first()
        mats = [_norm(fam["A"]), _norm(fam["T"])]
        return build_matrix_channel_model(cfg, graph, mats, seed=seed, coefs=[0.5, 0.5])

    raise ValueError(f"unknown model family {cfg.family!r}")
