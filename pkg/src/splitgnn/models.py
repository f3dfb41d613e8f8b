"""Participant-local graph encoders: heterogeneous attention plus baselines.

The heterogeneous-attention encoder ("hat") runs, per layer, a type-specific
node transform, a relation-specific edge transform fused into each neighbor
message, multi-head dot-product attention within every relation channel
(original relations and metapath channels alike), and a learned path
attention that mixes the per-channel embeddings into one vector per node.
"gcn" and "gat" are relation-agnostic baselines over the merged edge set.

Encoders bind to a participant view at construction and only ever touch
that view's edges, so stacking layers is exactly multi-hop aggregation over
private edge information.  An isolated node keeps propagating its own
transformed features through every layer via its self-loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .graph import HetGraph, ParticipantView, metapath_edges
from .seeding import stable_rng

FUSIONS = ("concat", "add", "linear")
HEAD_MODES = ("sum", "concat")


@dataclass
class EncoderConfig:
    kind: str = "hat"            # hat | gcn | gat
    layers: int = 2              # hop count K
    hidden: int = 64             # embedding dim d
    heads: int = 2
    fusion: str = "concat"
    dropout: float = 0.0
    head_mode: str = "sum"       # sum heads inside the activation, or concat
    temperature: float | None = None   # None -> 1/sqrt(hidden)

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError("encoder needs at least one layer")
        if self.heads < 1:
            raise ConfigError("head count must be >= 1")
        if self.fusion not in FUSIONS:
            raise ConfigError(f"fusion must be one of {FUSIONS}")
        if self.head_mode not in HEAD_MODES:
            raise ConfigError(f"head_mode must be one of {HEAD_MODES}")
        if self.head_mode == "concat" and self.hidden % self.heads:
            raise ConfigError("concat head mode needs hidden divisible by heads")

    @property
    def lam(self) -> float:
        return self.temperature if self.temperature is not None else 1.0 / math.sqrt(self.hidden)

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads if self.head_mode == "concat" else self.hidden


def init_param(params: dict, name: str, shape, seed, zeros: bool = False) -> T.Tensor:
    """Glorot-uniform (or zero) parameter whose values depend only on
    (seed, name), never on creation order."""
    if zeros:
        values = np.zeros(shape)
    else:
        fan_in = shape[0] if len(shape) > 1 else shape[0]
        fan_out = shape[1] if len(shape) > 1 else shape[0]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        values = stable_rng(seed, "init", name).uniform(-bound, bound, size=shape)
    p = T.Tensor(values, requires_grad=True, name=name)
    params[name] = p
    return p


def _fuse(tape, h, r, fusion, fparams):
    if fusion == "add":
        return T.add(tape, h, r)
    if fusion == "concat":
        return T.linear(tape, T.concat_cols(tape, [h, r]), fparams["W"], fparams["b"])
    return T.add(tape, T.add(tape, T.matmul(tape, h, fparams["Wh"]),
                             T.matmul(tape, r, fparams["Wr"])), fparams["b"])


def transform_and_fuse(tape, node_feat, edge_feat, Wt, bt, We, be,
                       fusion="concat", fusion_params=None):
    """Node and edge transforms combined into one neighbor message."""
    h = T.linear(tape, node_feat, Wt, bt)
    r = T.linear(tape, edge_feat, We, be)
    if fusion != "add" and not fusion_params:
        raise ContractError(f"fusion {fusion!r} needs fusion parameters")
    return _fuse(tape, h, r, fusion, fusion_params or {})


def node_attention(tape, target, neighbors, head_projs, temperature,
                   head_mode="sum"):
    """Attention of one target over its neighbor latents (self included).

    Returns the fused embedding and the per-head attention coefficients.
    ``neighbors`` must already contain the self entry; an empty set is a
    contract violation.
    """
    neighbors = neighbors if isinstance(neighbors, T.Tensor) else T.Tensor(neighbors)
    target = target if isinstance(target, T.Tensor) else T.Tensor(target)
    if neighbors.shape[0] < 1:
        raise ContractError("attention needs at least the target itself")
    outs, alphas = [], []
    for proj in head_projs:
        trow = T.matmul(tape, _as_row(tape, target), proj)
        nproj = T.matmul(tape, neighbors, proj)
        scores = T.matmul(tape, nproj, _flatten(tape, trow))
        alpha = T.softmax(tape, scores, temperature)
        weighted = T.mul(tape, T.reshape_col(tape, alpha), nproj)
        outs.append(T.sum_rows(tape, weighted))
        alphas.append(alpha.values.copy())
    if head_mode == "concat":
        z = _concat_vectors(tape, outs)
    else:
        z = outs[0]
        for other in outs[1:]:
            z = T.add(tape, z, other)
    return T.elu(tape, z), alphas


def _as_row(tape, v):
    # (d,) -> (1, d)
    out = T.Tensor(v.values[None, :])
    return T._emit(tape, out, (v,), lambda g: (g[0],))


def _flatten(tape, row):
    # (1, d) -> (d,)
    out = T.Tensor(row.values[0])
    return T._emit(tape, out, (row,), lambda g: (g[None, :],))


def _concat_vectors(tape, vecs):
    out = T.Tensor(np.concatenate([v.values for v in vecs]))
    sizes = np.cumsum([v.shape[0] for v in vecs])[:-1]

    def backfn(g):
        return tuple(np.split(g, sizes))

    return T._emit(tape, out, tuple(vecs), backfn)


def path_attention(tape, channel_embeddings, q, Wp, bp):
    """Softmax mix over relation channels, scored batch-wide.

    Each channel's score is the batch mean of <q, tanh(Wp z + bp)>; the
    resulting weights sum to one and are shared by every node in the batch.
    """
    if not channel_embeddings:
        raise ContractError("path attention needs at least one channel")
    scores = []
    for z in channel_embeddings:
        t = T.tanh(tape, T.linear(tape, z, Wp, bp))
        scores.append(T.mean_all(tape, T.matmul(tape, t, q)))
    beta = T.softmax(tape, T.stack_scalars(tape, scores), temperature=1.0)
    out = None
    for k, z in enumerate(channel_embeddings):
        term = T.mul(tape, T.take(tape, beta, k), z)
        out = term if out is None else T.add(tape, out, term)
    return out, beta.values.copy()


@dataclass
class _Channel:
    name: str
    tgt: np.ndarray
    nbr: np.ndarray
    feat: np.ndarray

    @property
    def edge_dim(self) -> int:
        return self.feat.shape[1]


def _view_graph(view) -> HetGraph:
    return view.graph if isinstance(view, ParticipantView) else view


def _build_channels(view) -> list[_Channel]:
    g = _view_graph(view)
    channels = [
        _Channel(name, g.relations[name].src, g.relations[name].dst,
                 g.relations[name].feat)
        for name in g.relation_names()
    ]
    metapaths = getattr(view, "metapaths", [])
    for mp in metapaths:
        tgt, nbr, feat = metapath_edges(g, mp)
        channels.append(_Channel(f"path:{mp.name}", tgt, nbr, feat))
    return channels


class HatEncoder:
    """K stacked heterogeneous-attention layers over one participant's view."""

    kind = "hat"

    def __init__(self, view, config: EncoderConfig, seed, scope: str):
        self.view = view
        self.graph = _view_graph(view)
        self.config = config
        self.seed = seed
        self.scope = scope
        self.channels = _build_channels(view)
        self.type_groups = [
            (t, self.graph.nodes_of_type(t))
            for t in sorted(set(self.graph.node_types.tolist()))
        ]
        self.params: dict[str, T.Tensor] = {}
        self.diagnostics: dict = {}
        d = config.hidden
        for l in range(config.layers):
            in_dim = self.graph.feature_dim if l == 0 else d
            for tname, _ in self.type_groups:
                init_param(self.params, f"{scope}/l{l}/type:{tname}/W", (in_dim, d), seed)
                init_param(self.params, f"{scope}/l{l}/type:{tname}/b", (d,), seed, zeros=True)
            for ch in self.channels:
                base = f"{scope}/l{l}/rel:{ch.name}"
                init_param(self.params, f"{base}/We", (ch.edge_dim, d), seed)
                init_param(self.params, f"{base}/be", (d,), seed, zeros=True)
                if config.fusion == "concat":
                    init_param(self.params, f"{base}/fuse/W", (2 * d, d), seed)
                    init_param(self.params, f"{base}/fuse/b", (d,), seed, zeros=True)
                elif config.fusion == "linear":
                    init_param(self.params, f"{base}/fuse/Wh", (d, d), seed)
                    init_param(self.params, f"{base}/fuse/Wr", (d, d), seed)
                    init_param(self.params, f"{base}/fuse/b", (d,), seed, zeros=True)
                for m in range(config.heads):
                    init_param(self.params, f"{base}/head{m}", (d, config.head_dim), seed)
            init_param(self.params, f"{scope}/l{l}/path/q", (d,), seed)
            init_param(self.params, f"{scope}/l{l}/path/W", (d, d), seed)
            init_param(self.params, f"{scope}/l{l}/path/b", (d,), seed, zeros=True)

    def _fusion_params(self, layer: int, channel: _Channel) -> dict:
        base = f"{self.scope}/l{layer}/rel:{channel.name}/fuse"
        if self.config.fusion == "concat":
            return {"W": self.params[f"{base}/W"], "b": self.params[f"{base}/b"]}
        if self.config.fusion == "linear":
            return {"Wh": self.params[f"{base}/Wh"], "Wr": self.params[f"{base}/Wr"],
                    "b": self.params[f"{base}/b"]}
        return {}

    def _type_transform(self, tape, x, layer: int):
        n = self.graph.num_nodes
        pieces = []
        for tname, idx in self.type_groups:
            W = self.params[f"{self.scope}/l{layer}/type:{tname}/W"]
            b = self.params[f"{self.scope}/l{layer}/type:{tname}/b"]
            h = T.linear(tape, T.gather_rows(tape, x, idx), W, b)
            pieces.append(T.scatter_rows(tape, h, idx, n))
        out = pieces[0]
        for p in pieces[1:]:
            out = T.add(tape, out, p)
        return out

    def _channel_attention(self, tape, h, layer: int, ch: _Channel):
        cfg = self.config
        n = self.graph.num_nodes
        base = f"{self.scope}/l{layer}/rel:{ch.name}"
        e_lat = T.linear(tape, T.Tensor(ch.feat),
                         self.params[f"{base}/We"], self.params[f"{base}/be"])
        fused = _fuse(tape, T.gather_rows(tape, h, ch.nbr), e_lat,
                      cfg.fusion, self._fusion_params(layer, ch))
        self_idx = np.arange(n)
        seg = np.concatenate([ch.tgt, self_idx])
        head_outs = []
        for m in range(cfg.heads):
            proj = self.params[f"{base}/head{m}"]
            hp = T.matmul(tape, h, proj)
            fp = T.matmul(tape, fused, proj)
            vals = T.concat_rows(tape, [fp, hp])
            anchors = T.concat_rows(tape, [T.gather_rows(tape, hp, ch.tgt), hp])
            scores = T.rowwise_dot(tape, anchors, vals)
            alpha = T.segment_softmax(tape, scores, seg, n, cfg.lam)
            self.diagnostics.setdefault("alpha", {})[(layer, ch.name, m)] = (
                alpha.values.copy(), seg)
            weighted = T.mul(tape, T.reshape_col(tape, alpha), vals)
            head_outs.append(T.segment_sum(tape, weighted, seg, n))
        if cfg.head_mode == "concat":
            agg = T.concat_cols(tape, head_outs)
        else:
            agg = head_outs[0]
            for other in head_outs[1:]:
                agg = T.add(tape, agg, other)
        return T.elu(tape, agg)

    def forward(self, tape, batch_ids, step: int = 0, training: bool = False):
        cfg = self.config
        self.diagnostics = {}
        x = T.Tensor(self.graph.features)
        for l in range(cfg.layers):
            x = T.dropout(tape, x, cfg.dropout,
                          seed=(self.seed, "dropout", self.scope, l, step), training=training)
            h = self._type_transform(tape, x, l)
            zs = [self._channel_attention(tape, h, l, ch) for ch in self.channels]
            q = self.params[f"{self.scope}/l{l}/path/q"]
            Wp = self.params[f"{self.scope}/l{l}/path/W"]
            bp = self.params[f"{self.scope}/l{l}/path/b"]
            x, beta = path_attention(tape, zs, q, Wp, bp)
            self.diagnostics.setdefault("beta", {})[l] = beta
        return T.gather_rows(tape, x, np.asarray(batch_ids, dtype=np.int64))


class GcnEncoder:
    """Mean-over-neighbors aggregation, linear map, ELU; relations merged."""

    kind = "gcn"

    def __init__(self, view, config: EncoderConfig, seed, scope: str):
        self.view = view
        self.graph = _view_graph(view)
        self.config = config
        self.seed = seed
        self.scope = scope
        g = self.graph
        tgt = np.concatenate([g.relations[r].src for r in g.relation_names()] or
                             [np.zeros(0, dtype=np.int64)])
        nbr = np.concatenate([g.relations[r].dst for r in g.relation_names()] or
                             [np.zeros(0, dtype=np.int64)])
        deg = np.bincount(tgt, minlength=g.num_nodes).astype(np.float64)
        isolated = np.flatnonzero(deg == 0)
        # isolated nodes average over themselves so features keep flowing
        tgt = np.concatenate([tgt, isolated])
        nbr = np.concatenate([nbr, isolated])
        deg[isolated] = 1.0
        self.tgt, self.nbr = tgt, nbr
        self.inv_deg = (1.0 / deg)[:, None]
        self.params: dict[str, T.Tensor] = {}
        d = config.hidden
        for l in range(config.layers):
            in_dim = g.feature_dim if l == 0 else d
            init_param(self.params, f"{scope}/l{l}/W", (in_dim, d), seed)
            init_param(self.params, f"{scope}/l{l}/b", (d,), seed, zeros=True)

    def forward(self, tape, batch_ids, step: int = 0, training: bool = False):
        cfg = self.config
        x = T.Tensor(self.graph.features)
        n = self.graph.num_nodes
        for l in range(cfg.layers):
            x = T.dropout(tape, x, cfg.dropout,
                          seed=(self.seed, "dropout", self.scope, l, step), training=training)
            summed = T.segment_sum(tape, T.gather_rows(tape, x, self.nbr), self.tgt, n)
            mean = T.mul(tape, summed, T.Tensor(self.inv_deg))
            x = T.elu(tape, T.linear(tape, mean,
                                     self.params[f"{self.scope}/l{l}/W"],
                                     self.params[f"{self.scope}/l{l}/b"]))
        return T.gather_rows(tape, x, np.asarray(batch_ids, dtype=np.int64))


class GatEncoder:
    """Single-relation multi-head attention without edge features."""

    kind = "gat"

    def __init__(self, view, config: EncoderConfig, seed, scope: str):
        self.view = view
        self.graph = _view_graph(view)
        self.config = config
        self.seed = seed
        self.scope = scope
        g = self.graph
        self.tgt = np.concatenate([g.relations[r].src for r in g.relation_names()] or
                                  [np.zeros(0, dtype=np.int64)])
        self.nbr = np.concatenate([g.relations[r].dst for r in g.relation_names()] or
                                  [np.zeros(0, dtype=np.int64)])
        self.params: dict[str, T.Tensor] = {}
        self.diagnostics: dict = {}
        d = config.hidden
        for l in range(config.layers):
            in_dim = g.feature_dim if l == 0 else d
            init_param(self.params, f"{scope}/l{l}/W", (in_dim, d), seed)
            init_param(self.params, f"{scope}/l{l}/b", (d,), seed, zeros=True)
            for m in range(config.heads):
                init_param(self.params, f"{scope}/l{l}/head{m}", (d, config.head_dim), seed)

    def forward(self, tape, batch_ids, step: int = 0, training: bool = False):
        cfg = self.config
        g = self.graph
        n = g.num_nodes
        x = T.Tensor(g.features)
        self.diagnostics = {}
        self_idx = np.arange(n)
        seg = np.concatenate([self.tgt, self_idx])
        for l in range(cfg.layers):
            x = T.dropout(tape, x, cfg.dropout,
                          seed=(self.seed, "dropout", self.scope, l, step), training=training)
            h = T.linear(tape, x, self.params[f"{self.scope}/l{l}/W"],
                         self.params[f"{self.scope}/l{l}/b"])
            head_outs = []
            for m in range(cfg.heads):
                hp = T.matmul(tape, h, self.params[f"{self.scope}/l{l}/head{m}"])
                vals = T.concat_rows(tape, [T.gather_rows(tape, hp, self.nbr), hp])
                anchors = T.concat_rows(tape, [T.gather_rows(tape, hp, self.tgt), hp])
                alpha = T.segment_softmax(tape, T.rowwise_dot(tape, anchors, vals),
                                          seg, n, cfg.lam)
                self.diagnostics.setdefault("alpha", {})[(l, m)] = (alpha.values.copy(), seg)
                weighted = T.mul(tape, T.reshape_col(tape, alpha), vals)
                head_outs.append(T.segment_sum(tape, weighted, seg, n))
            if cfg.head_mode == "concat":
                agg = T.concat_cols(tape, head_outs)
            else:
                agg = head_outs[0]
                for other in head_outs[1:]:
                    agg = T.add(tape, agg, other)
            x = T.elu(tape, agg)
        return T.gather_rows(tape, x, np.asarray(batch_ids, dtype=np.int64))


ENCODERS = {"hat": HatEncoder, "gcn": GcnEncoder, "gat": GatEncoder}


def make_encoder(view, config: EncoderConfig, seed, scope: str):
    cls = ENCODERS.get(config.kind)
    if cls is None:
        raise ConfigError(f"unknown encoder kind {config.kind!r}")
    return cls(view, config, seed, scope)
