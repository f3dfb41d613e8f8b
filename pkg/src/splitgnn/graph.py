"""Heterogeneous graph data model, loading, synthesis, and vertical partitioning.

Aggregation convention used throughout the package: an edge ``(u, v)`` lets
node ``u`` gather information from ``v``.  Metapath instances walk edges the
same way, so a path rooted at a target node follows ``src -> dst`` hops and
the path endpoint contributes to the target node's representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, GraphSchemaError, ParseError
from .seeding import stable_rng


class BudgetExceededError(GraphSchemaError):
    """Neighborhood expansion exceeded the configured node budget."""


@dataclass
class Relation:
    """All edges of one relation type, with per-edge feature vectors."""

    name: str
    src: np.ndarray          # int64 [E]
    dst: np.ndarray          # int64 [E]
    feat: np.ndarray         # float64 [E, edge_dim]
    src_type: str | None = None
    dst_type: str | None = None

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        self.feat = np.asarray(self.feat, dtype=np.float64)
        if self.feat.ndim != 2 or self.feat.shape[0] != len(self.src):
            raise GraphSchemaError(
                f"relation {self.name}: feature matrix shape {self.feat.shape} "
                f"does not match {len(self.src)} edges"
            )

    @property
    def edge_dim(self) -> int:
        return self.feat.shape[1]

    def __len__(self) -> int:
        return len(self.src)


class HetGraph:
    """Typed nodes, per-relation edge lists, node features, optional labels.

    Labels use -1 for "not held"; a participant view that is not the label
    holder carries an all -1 label array.
    """

    def __init__(self, node_types, features, relations, labels=None, num_classes=0):
        self.node_types = np.asarray(node_types)
        self.features = np.asarray(features, dtype=np.float64)
        self.relations: dict[str, Relation] = dict(relations)
        n = len(self.node_types)
        if labels is None:
            labels = np.full(n, -1, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.num_classes = int(num_classes)
        self._adjacency: dict[str, dict[int, list[tuple[int, int]]]] = {}
        self.validate()

    @property
    def num_nodes(self) -> int:
        return len(self.node_types)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def validate(self) -> None:
        n = self.num_nodes
        if self.features.shape[0] != n:
            raise GraphSchemaError(
                f"{self.features.shape[0]} feature rows for {n} nodes"
            )
        if self.labels.shape != (n,):
            raise GraphSchemaError("label array must have one entry per node")
        held = self.labels[self.labels >= 0]
        if held.size and self.num_classes and held.max() >= self.num_classes:
            raise GraphSchemaError(
                f"label {held.max()} out of range [0, {self.num_classes})"
            )
        for rel in self.relations.values():
            for arr, side in ((rel.src, "src"), (rel.dst, "dst")):
                if arr.size and (arr.min() < 0 or arr.max() >= n):
                    raise GraphSchemaError(
                        f"relation {rel.name}: {side} endpoint out of range"
                    )

    def relation_names(self) -> list[str]:
        return sorted(self.relations)

    def adjacency(self, relation: str) -> dict[int, list[tuple[int, int]]]:
        """src -> [(dst, edge_index)] for one relation, built lazily."""
        adj = self._adjacency.get(relation)
        if adj is None:
            rel = self.relations[relation]
            adj = {}
            for e, (u, v) in enumerate(zip(rel.src, rel.dst)):
                adj.setdefault(int(u), []).append((int(v), e))
            self._adjacency[relation] = adj
        return adj

    def nodes_of_type(self, node_type: str) -> np.ndarray:
        return np.flatnonzero(self.node_types == node_type)


@dataclass(frozen=True)
class Metapath:
    """A schema-level sequence of relation names."""

    relations: tuple[str, ...]

    def __post_init__(self):
        if len(self.relations) < 1:
            raise GraphSchemaError("a metapath needs at least one relation")

    @property
    def name(self) -> str:
        return "+".join(self.relations)

    def check_against(self, graph: HetGraph) -> None:
        prev_dst = None
        for rname in self.relations:
            rel = graph.relations.get(rname)
            if rel is None:
                raise GraphSchemaError(f"metapath uses unknown relation {rname!r}")
            if prev_dst is not None and rel.src_type is not None and prev_dst != rel.src_type:
                raise GraphSchemaError(
                    f"metapath {self.name}: {rname} starts at {rel.src_type}, "
                    f"previous relation ends at {prev_dst}"
                )
            if rel.dst_type is not None:
                prev_dst = rel.dst_type


@dataclass
class MetapathInstance:
    """One concrete node walk plus the concatenation of everything on it."""

    nodes: tuple[int, ...]
    features: np.ndarray


def instance_feature(graph: HetGraph, metapath: Metapath, nodes, edge_indices) -> np.ndarray:
    """Concatenate node and edge features in walk order: f0, e1, f1, ..., eL, fL."""
    parts = [graph.features[nodes[0]]]
    for k, rname in enumerate(metapath.relations):
        parts.append(graph.relations[rname].feat[edge_indices[k]])
        parts.append(graph.features[nodes[k + 1]])
    return np.concatenate(parts)


def metapath_feature_dim(graph: HetGraph, metapath: Metapath) -> int:
    length = len(metapath.relations)
    return (length + 1) * graph.feature_dim + sum(
        graph.relations[r].edge_dim for r in metapath.relations
    )


def enumerate_instances(graph: HetGraph, metapath: Metapath, target: int):
    """All walks rooted at ``target`` following the metapath's relations."""
    metapath.check_against(graph)
    walks = [((target,), ())]
    for rname in metapath.relations:
        adj = graph.adjacency(rname)
        nxt = []
        for nodes, eidx in walks:
            for v, e in adj.get(nodes[-1], ()):
                nxt.append((nodes + (v,), eidx + (e,)))
        walks = nxt
        if not walks:
            return []
    return [
        MetapathInstance(nodes, instance_feature(graph, metapath, nodes, eidx))
        for nodes, eidx in walks
    ]


def metapath_edges(graph: HetGraph, metapath: Metapath):
    """Materialize a metapath as an extra relation channel.

    Returns (targets, endpoints, features): one entry per instance, oriented
    so the target gathers from the walk endpoint.
    """
    metapath.check_against(graph)
    walks = None
    for rname in metapath.relations:
        rel = graph.relations[rname]
        if walks is None:
            walks = (rel.src, rel.dst, [np.arange(len(rel))])
        else:
            tgt, cur, hops = walks
            adj = graph.adjacency(rname)
            new_tgt, new_cur, new_hops = [], [], [[] for _ in range(len(hops) + 1)]
            for i in range(len(cur)):
                for v, e in adj.get(int(cur[i]), ()):
                    new_tgt.append(tgt[i])
                    new_cur.append(v)
                    for k, h in enumerate(hops):
                        new_hops[k].append(h[i])
                    new_hops[-1].append(e)
            walks = (np.asarray(new_tgt, dtype=np.int64),
                     np.asarray(new_cur, dtype=np.int64),
                     [np.asarray(h, dtype=np.int64) for h in new_hops])
    tgt, end, hops = walks
    if len(tgt) == 0:
        return tgt, end, np.zeros((0, metapath_feature_dim(graph, metapath)))
    pieces = [graph.features[tgt]]
    nodes = tgt
    for k, rname in enumerate(metapath.relations):
        rel = graph.relations[rname]
        pieces.append(rel.feat[hops[k]])
        nodes = rel.dst[hops[k]]
        pieces.append(graph.features[nodes])
    return tgt, end, np.concatenate(pieces, axis=1)


@dataclass
class SubgraphSample:
    """Per-target exhaustive neighborhood: K-hop reach per relation plus
    every metapath instance rooted at the target."""

    target: int
    neighbors: dict[str, set[int]]
    instances: dict[str, list[MetapathInstance]]


def sample_subgraph(graph: HetGraph, targets, metapaths, hops: int,
                    node_budget: int | None = None) -> dict[int, SubgraphSample]:
    """Complete (non-random) K-hop expansion for each target node.

    Expansion is exhaustive by design: sampled neighborhoods are not used
    anywhere in this package.  ``node_budget`` caps the total number of
    distinct nodes the whole batch may touch.
    """
    if hops < 1:
        raise DomainError(f"hops must be >= 1, got {hops}")
    n = graph.num_nodes
    for t in targets:
        if not 0 <= t < n:
            raise DomainError(f"target {t} is not a node id")
    out: dict[int, SubgraphSample] = {}
    touched: set[int] = set()
    for t in sorted(set(int(t) for t in targets)):
        per_rel: dict[str, set[int]] = {}
        for rname in graph.relation_names():
            adj = graph.adjacency(rname)
            frontier = {t}
            seen: set[int] = set()
            for _ in range(hops):
                nxt = set()
                for u in frontier:
                    for v, _ in adj.get(u, ()):
                        if v not in seen and v != t:
                            nxt.add(v)
                seen |= nxt
                frontier = nxt
                if not frontier:
                    break
            per_rel[rname] = seen
            touched |= seen
            if node_budget is not None and len(touched) > node_budget:
                raise BudgetExceededError(
                    f"expansion reached {len(touched)} nodes, budget {node_budget}"
                )
        inst = {mp.name: enumerate_instances(graph, mp, t) for mp in metapaths}
        out[t] = SubgraphSample(t, per_rel, inst)
    return out


# ---------------------------------------------------------------------------
# bundles and loading


@dataclass
class DatasetBundle:
    graph: HetGraph
    metapaths: list[Metapath]
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray

    def __post_init__(self):
        self.train_ids = np.asarray(self.train_ids, dtype=np.int64)
        self.val_ids = np.asarray(self.val_ids, dtype=np.int64)
        self.test_ids = np.asarray(self.test_ids, dtype=np.int64)
        allids = np.concatenate([self.train_ids, self.val_ids, self.test_ids])
        if len(np.unique(allids)) != len(allids):
            raise GraphSchemaError("train/val/test lists overlap")
        if allids.size and np.any(self.graph.labels[allids] < 0):
            raise GraphSchemaError("every split node must be labeled")
        for mp in self.metapaths:
            mp.check_against(self.graph)


def _parse_floats(text: str, path, lineno: int) -> list[float]:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(tok) for tok in text.split(",")]
    except ValueError as exc:
        raise ParseError(f"{path}:{lineno}: bad float list: {exc}") from None


def _read_rows(path: Path, n_fields: int, min_fields: int | None = None):
    if not path.exists():
        raise ParseError(f"{path}: missing file")
    low = min_fields if min_fields is not None else n_fields
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if not low <= len(fields) <= n_fields:
                raise ParseError(
                    f"{path}:{lineno}: expected {n_fields} tab-separated fields, "
                    f"got {len(fields)}"
                )
            yield lineno, fields


def load_dataset(directory) -> DatasetBundle:
    """Parse the tab-separated dataset directory format.

    Node ids are assigned by order of appearance in nodes.tsv; all other
    files refer to nodes by their external id.
    """
    directory = Path(directory)
    ids: dict[str, int] = {}
    types: list[str] = []
    nodes_path = directory / "nodes.tsv"
    for lineno, (ext, ntype) in _read_rows(nodes_path, 2):
        if ext in ids:
            raise ParseError(f"{nodes_path}:{lineno}: duplicate node id {ext!r}")
        ids[ext] = len(types)
        types.append(ntype)

    def resolve(ext: str, path, lineno: int) -> int:
        idx = ids.get(ext)
        if idx is None:
            raise ParseError(f"{path}:{lineno}: unknown node id {ext!r}")
        return idx

    feat_path = directory / "features.tsv"
    rows: dict[int, list[float]] = {}
    dim = None
    for lineno, (ext, vals) in _read_rows(feat_path, 2):
        idx = resolve(ext, feat_path, lineno)
        v = _parse_floats(vals, feat_path, lineno)
        if dim is None:
            dim = len(v)
        elif len(v) != dim:
            raise ParseError(
                f"{feat_path}:{lineno}: expected {dim} features, got {len(v)}"
            )
        rows[idx] = v
    if len(rows) != len(types):
        missing = sorted(set(range(len(types))) - set(rows))[0]
        raise ParseError(f"{feat_path}: no feature row for node index {missing}")
    features = np.array([rows[i] for i in range(len(types))])

    relations: dict[str, Relation] = {}
    for path in sorted(directory.glob("edges_*.tsv")):
        rname = path.stem[len("edges_"):]
        src, dst, feats = [], [], []
        edim = None
        for lineno, fields in _read_rows(path, 3, min_fields=2):
            u = resolve(fields[0], path, lineno)
            v = resolve(fields[1], path, lineno)
            ef = _parse_floats(fields[2], path, lineno) if len(fields) == 3 else []
            if edim is None:
                edim = len(ef)
            elif len(ef) != edim:
                raise ParseError(
                    f"{path}:{lineno}: expected {edim} edge features, got {len(ef)}"
                )
            src.append(u)
            dst.append(v)
            feats.append(ef)
        edim = edim or 0
        feat = np.array(feats, dtype=np.float64).reshape(len(src), edim)
        src_t = types[src[0]] if src else None
        dst_t = types[dst[0]] if dst else None
        for i, (u, v) in enumerate(zip(src, dst)):
            if types[u] != src_t or types[v] != dst_t:
                raise ParseError(f"{path}: edge {i} mixes node types within one relation")
        relations[rname] = Relation(rname, src, dst, feat, src_t, dst_t)

    labels = np.full(len(types), -1, dtype=np.int64)
    labels_path = directory / "labels.tsv"
    for lineno, (ext, lab) in _read_rows(labels_path, 2):
        try:
            labels[resolve(ext, labels_path, lineno)] = int(lab)
        except ValueError:
            raise ParseError(f"{labels_path}:{lineno}: bad class index {lab!r}") from None
    num_classes = int(labels.max()) + 1 if np.any(labels >= 0) else 0

    metapaths = []
    mp_path = directory / "metapaths.txt"
    if not mp_path.exists():
        raise ParseError(f"{mp_path}: missing file")
    with open(mp_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                metapaths.append(Metapath(tuple(tok.strip() for tok in line.split(","))))

    splits: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    splits_path = directory / "splits.tsv"
    for lineno, (ext, part) in _read_rows(splits_path, 2):
        if part not in splits:
            raise ParseError(f"{splits_path}:{lineno}: unknown split {part!r}")
        splits[part].append(resolve(ext, splits_path, lineno))

    graph = HetGraph(types, features, relations, labels, num_classes)
    return DatasetBundle(graph, metapaths, splits["train"], splits["val"], splits["test"])


def save_dataset(bundle: DatasetBundle, directory) -> None:
    """Write a bundle in the directory format load_dataset reads."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    g = bundle.graph
    with open(directory / "nodes.tsv", "w", encoding="utf-8") as fh:
        for i, t in enumerate(g.node_types):
            fh.write(f"{i}\t{t}\n")
    with open(directory / "features.tsv", "w", encoding="utf-8") as fh:
        for i in range(g.num_nodes):
            fh.write(f"{i}\t{','.join(repr(float(x)) for x in g.features[i])}\n")
    for rname, rel in sorted(g.relations.items()):
        with open(directory / f"edges_{rname}.tsv", "w", encoding="utf-8") as fh:
            for e in range(len(rel)):
                feats = ",".join(repr(float(x)) for x in rel.feat[e])
                fh.write(f"{rel.src[e]}\t{rel.dst[e]}\t{feats}\n")
    with open(directory / "labels.tsv", "w", encoding="utf-8") as fh:
        for i, lab in enumerate(g.labels):
            if lab >= 0:
                fh.write(f"{i}\t{lab}\n")
    with open(directory / "metapaths.txt", "w", encoding="utf-8") as fh:
        for mp in bundle.metapaths:
            fh.write(",".join(mp.relations) + "\n")
    with open(directory / "splits.tsv", "w", encoding="utf-8") as fh:
        for name, idlist in (("train", bundle.train_ids), ("val", bundle.val_ids),
                             ("test", bundle.test_ids)):
            for i in idlist:
                fh.write(f"{i}\t{name}\n")


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass
class RelationSpec:
    name: str
    src_type: str
    dst_type: str
    edge_dim: int = 0
    avg_degree: float = 4.0
    symmetric: bool = False


@dataclass
class SyntheticSpec:
    """Parameters for the block-structured synthetic benchmark generator."""

    node_counts: dict[str, int]
    relations: list[RelationSpec]
    feature_dim: int = 32
    num_classes: int = 3
    homophily: float = 0.8
    feature_signal: float = 0.4
    edge_signal: float = 0.5
    train_frac: float = 0.6
    val_frac: float = 0.2
    metapaths: list[tuple[str, ...]] | None = None
    max_auto_metapaths: int = 2

    @classmethod
    def from_json(cls, payload: dict) -> "SyntheticSpec":
        payload = dict(payload)
        try:
            rels = [RelationSpec(**r) for r in payload.pop("relations")]
            mps = payload.pop("metapaths", None)
            spec = cls(relations=rels, **payload)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid synthetic spec: {exc}") from None
        if mps is not None:
            spec.metapaths = [tuple(m) for m in mps]
        return spec

    def to_json(self) -> dict:
        out = {
            "node_counts": dict(self.node_counts),
            "relations": [vars(r) for r in self.relations],
            "feature_dim": self.feature_dim,
            "num_classes": self.num_classes,
            "homophily": self.homophily,
            "feature_signal": self.feature_signal,
            "edge_signal": self.edge_signal,
            "train_frac": self.train_frac,
            "val_frac": self.val_frac,
            "max_auto_metapaths": self.max_auto_metapaths,
        }
        if self.metapaths is not None:
            out["metapaths"] = [list(m) for m in self.metapaths]
        return out


def generate_synthetic(spec: SyntheticSpec, seed: int) -> DatasetBundle:
    """Block-structured heterogeneous graph with class-conditional features.

    Same-class endpoints connect with probability ``homophily``; otherwise
    endpoints are drawn uniformly.  Everything is deterministic under seed.
    """
    if not 0.0 <= spec.homophily <= 1.0:
        raise ConfigError(f"homophily must be in [0, 1], got {spec.homophily}")
    if not spec.relations:
        raise ConfigError("at least one relation is required")
    for rel in spec.relations:
        for t in (rel.src_type, rel.dst_type):
            if spec.node_counts.get(t, 0) <= 0:
                raise ConfigError(
                    f"relation {rel.name} references type {t!r} with no nodes"
                )

    rng = stable_rng(seed, "synthetic")
    types: list[str] = []
    for tname in sorted(spec.node_counts):
        types.extend([tname] * spec.node_counts[tname])
    n = len(types)
    types_arr = np.asarray(types)

    labels = rng.integers(0, spec.num_classes, size=n)
    centers = rng.normal(0.0, spec.feature_signal, size=(spec.num_classes, spec.feature_dim))
    features = centers[labels] + rng.standard_normal((n, spec.feature_dim))

    by_type = {t: np.flatnonzero(types_arr == t) for t in spec.node_counts}
    by_type_class = {
        (t, c): idx[labels[idx] == c]
        for t, idx in by_type.items()
        for c in range(spec.num_classes)
    }

    relations: dict[str, Relation] = {}
    for rel in spec.relations:
        src_pool = by_type[rel.src_type]
        dst_pool = by_type[rel.dst_type]
        n_edges = int(round(rel.avg_degree * len(src_pool)))
        src = src_pool[rng.integers(0, len(src_pool), size=n_edges)]
        dst = np.empty(n_edges, dtype=np.int64)
        coin = rng.random(n_edges)
        for i in range(n_edges):
            pool = dst_pool
            if coin[i] < spec.homophily:
                same = by_type_class[(rel.dst_type, int(labels[src[i]]))]
                if len(same):
                    pool = same
            v = pool[rng.integers(0, len(pool))]
            for _ in range(4):
                if v != src[i]:
                    break
                v = pool[rng.integers(0, len(pool))]
            dst[i] = v
        same_class = (labels[src] == labels[dst]).astype(np.float64)
        base = np.where(same_class > 0, spec.edge_signal, -spec.edge_signal)
        feat = base[:, None] + rng.standard_normal((n_edges, rel.edge_dim)) \
            if rel.edge_dim else np.zeros((n_edges, 0))
        if rel.symmetric:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
            feat = np.concatenate([feat, feat], axis=0)
        relations[rel.name] = Relation(rel.name, src, dst, feat,
                                       rel.src_type, rel.dst_type)

    if spec.metapaths is not None:
        metapaths = [Metapath(tuple(m)) for m in spec.metapaths]
    else:
        metapaths = []
        for a in spec.relations:
            for b in spec.relations:
                if a.dst_type == b.src_type and len(metapaths) < spec.max_auto_metapaths:
                    metapaths.append(Metapath((a.name, b.name)))

    perm = rng.permutation(n)
    n_train = int(spec.train_frac * n)
    n_val = int(spec.val_frac * n)
    bundle = DatasetBundle(
        HetGraph(types_arr, features, relations, labels, spec.num_classes),
        metapaths,
        np.sort(perm[:n_train]),
        np.sort(perm[n_train:n_train + n_val]),
        np.sort(perm[n_train + n_val:]),
    )
    return bundle


# ---------------------------------------------------------------------------
# vertical partitioning


@dataclass
class PartitionSpec:
    """How columns, edges and the label are divided among participants.

    ``feature_cols[i]`` is participant i's half-open column range and the
    ranges tile [0, feature_dim) in participant order.  ``edge_shares`` maps
    each relation to per-participant proportions of its edges.
    """

    participants: int
    feature_cols: list[tuple[int, int]]
    edge_shares: dict[str, list[float]]
    label_holder: int
    ratio: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.participants < 1:
            raise ConfigError("need at least one participant")
        if len(self.feature_cols) != self.participants:
            raise ConfigError("one feature-column range per participant required")
        expect = 0
        for lo, hi in self.feature_cols:
            if lo != expect or hi < lo:
                raise ConfigError(
                    f"feature columns must tile [0, D) contiguously, got {self.feature_cols}"
                )
            expect = hi
        for rname, shares in self.edge_shares.items():
            if len(shares) != self.participants or any(s < 0 for s in shares):
                raise ConfigError(f"bad edge shares for relation {rname!r}")
        if not 0 <= self.label_holder < self.participants:
            raise ConfigError(f"label holder {self.label_holder} out of range")

    @classmethod
    def from_ratio(cls, ratio, feature_dim: int, relation_names,
                   label_holder: int = 0) -> "PartitionSpec":
        """Ratio governs both feature-column counts and per-relation edge
        counts; earlier participants round down, the last takes the rest."""
        ratio = [float(r) for r in ratio]
        if any(r <= 0 for r in ratio):
            raise ConfigError(f"ratio entries must be positive, got {ratio}")
        total = sum(ratio)
        cols, start = [], 0
        for i, r in enumerate(ratio):
            count = feature_dim - start if i == len(ratio) - 1 \
                else int(feature_dim * r / total)
            cols.append((start, start + count))
            start += count
        shares = {name: list(ratio) for name in relation_names}
        return cls(len(ratio), cols, shares, label_holder, ratio)

    def to_json(self) -> dict:
        return {
            "participants": self.participants,
            "feature_cols": [list(c) for c in self.feature_cols],
            "edge_shares": {k: list(v) for k, v in self.edge_shares.items()},
            "label_holder": self.label_holder,
            "ratio": list(self.ratio),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PartitionSpec":
        return cls(
            participants=payload["participants"],
            feature_cols=[tuple(c) for c in payload["feature_cols"]],
            edge_shares=payload["edge_shares"],
            label_holder=payload["label_holder"],
            ratio=payload.get("ratio", []),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "PartitionSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class ParticipantView:
    """One participant's private slice of a dataset bundle.

    Node ids and split lists are shared knowledge (alignment is handled by
    the privacy layer); features, edges and labels are private.
    """

    participant: int
    graph: HetGraph
    metapaths: list[Metapath]
    feature_cols: tuple[int, int]
    has_labels: bool
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray
    edge_indices: dict[str, np.ndarray] = field(default_factory=dict)


def vertical_partition(bundle: DatasetBundle, spec: PartitionSpec,
                       seed: int) -> list[ParticipantView]:
    """Split a bundle into per-participant views.

    Every participant sees all node ids; feature columns follow the spec's
    ranges, shared-relation edges are dealt by a seeded shuffle in the
    spec's proportions, and labels stay with the label holder only.
    """
    g = bundle.graph
    if spec.feature_cols[-1][1] != g.feature_dim:
        raise ConfigError(
            f"partition covers {spec.feature_cols[-1][1]} columns, "
            f"graph has {g.feature_dim}"
        )
    for rname in spec.edge_shares:
        if rname not in g.relations:
            raise ConfigError(f"partition references unknown relation {rname!r}")
    for rname in g.relations:
        if rname not in spec.edge_shares:
            raise ConfigError(f"relation {rname!r} missing from partition spec")

    assignments: dict[str, list[np.ndarray]] = {}
    for rname, shares in spec.edge_shares.items():
        rel = g.relations[rname]
        perm = stable_rng(seed, "edge-split", rname).permutation(len(rel))
        total = sum(shares)
        counts, used = [], 0
        for i, s in enumerate(shares):
            c = len(rel) - used if i == len(shares) - 1 else int(len(rel) * s / total)
            counts.append(c)
            used += c
        pieces, off = [], 0
        for c in counts:
            pieces.append(np.sort(perm[off:off + c]))
            off += c
        assignments[rname] = pieces

    views = []
    for i in range(spec.participants):
        lo, hi = spec.feature_cols[i]
        rels = {}
        eidx = {}
        for rname, rel in g.relations.items():
            keep = assignments[rname][i]
            eidx[rname] = keep
            rels[rname] = Relation(rname, rel.src[keep], rel.dst[keep],
                                   rel.feat[keep], rel.src_type, rel.dst_type)
        is_holder = i == spec.label_holder
        labels = g.labels.copy() if is_holder else None
        view_graph = HetGraph(g.node_types, g.features[:, lo:hi], rels,
                              labels, g.num_classes)
        views.append(ParticipantView(
            participant=i,
            graph=view_graph,
            metapaths=list(bundle.metapaths),
            feature_cols=(lo, hi),
            has_labels=is_holder,
            train_ids=bundle.train_ids.copy(),
            val_ids=bundle.val_ids.copy(),
            test_ids=bundle.test_ids.copy(),
            edge_indices=eidx,
        ))
    return views
