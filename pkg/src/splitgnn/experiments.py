"""Config-driven experiment runner and communication-cost accounting.

Strategies:
  - ``entire``        one model trained on the unpartitioned graph
  - ``standalone_i``  participant i trains alone on its private view (label
                      access is granted explicitly when i is not the label
                      holder; the metrics report marks those rows)
  - ``split_m/c/w``   the full split protocol with average / concatenation /
                      trainable weighted combination

The federated-learning comparator is a closed-form byte model (each
participant uploads and downloads the full parameter vector every round);
split-learning bytes are measured off the session transcript.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, RoleError
from .graph import (DatasetBundle, ParticipantView, PartitionSpec, RelationSpec,
                    SyntheticSpec, generate_synthetic, load_dataset,
                    vertical_partition)
from .models import EncoderConfig
from .protocol import CentralizedModel, SessionConfig, SplitSession
from .transcript import RoundTranscript

FLOAT_BYTES = 8

STRATEGY_MAP = {"split_m": "average", "split_c": "concat", "split_w": "weighted"}


def desk_scale_spec() -> SyntheticSpec:
    """The default benchmark: large enough to show the trends, small enough
    that a full grid runs in minutes."""
    return SyntheticSpec(
        node_counts={"a": 1200, "b": 1000, "c": 800},
        relations=[
            RelationSpec("aa", "a", "a", edge_dim=4, avg_degree=4.0, symmetric=True),
            RelationSpec("ab", "a", "b", edge_dim=4, avg_degree=3.0),
            RelationSpec("ba", "b", "a", edge_dim=4, avg_degree=3.0),
            RelationSpec("bc", "b", "c", edge_dim=4, avg_degree=2.0),
        ],
        feature_dim=64,
        num_classes=3,
        homophily=0.8,
    )


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    synthetic: dict | None = None
    data_seed: int = 0
    participants: int = 2
    ratio: list[float] = field(default_factory=lambda: [5.0, 5.0])
    label_holder: int = 0
    model: str = "hat"
    strategy: str = "split_c"
    seeds: list[int] = field(default_factory=lambda: [0])
    batch_size: int = 64
    epochs: int = 5
    rounds_per_epoch: int | None = None
    learning_rate: float = 0.1
    optimizer: str = "sgd"
    hidden: int = 32
    layers: int = 2
    heads: int = 2
    fusion: str = "concat"
    head_mode: str = "sum"
    dropout: float = 0.0
    server_dropout: float = 0.3
    temperature: float | None = None
    cut: str = "hidden"
    secure: bool = False
    key_bits: int = 512
    scale_bits: int = 24

    def __post_init__(self):
        if len(self.ratio) != self.participants:
            raise ConfigError(
                f"ratio has {len(self.ratio)} entries for {self.participants} participants"
            )
        if self.strategy != "entire" and not self.strategy.startswith("standalone_") \
                and self.strategy not in STRATEGY_MAP:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if not self.seeds:
            raise ConfigError("at least one seed required")

    @classmethod
    def from_json(cls, payload: dict) -> "ExperimentConfig":
        return cls(**payload)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except (TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def to_json(self) -> dict:
        return asdict(self)

    def digest(self, seed: int) -> str:
        payload = json.dumps({**self.to_json(), "seeds": [seed]}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(kind=self.model, layers=self.layers, hidden=self.hidden,
                             heads=self.heads, fusion=self.fusion,
                             dropout=self.dropout, head_mode=self.head_mode,
                             temperature=self.temperature)

    def session_config(self, seed: int) -> SessionConfig:
        return SessionConfig(
            encoder=self.encoder_config(),
            strategy=STRATEGY_MAP.get(self.strategy, "concat"),
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            cut=self.cut,
            secure=self.secure,
            seed=seed,
            key_bits=self.key_bits,
            scale_bits=self.scale_bits,
            server_dropout=self.server_dropout,
            rounds_per_epoch=self.rounds_per_epoch,
        )


@dataclass
class MetricsRow:
    digest: str
    strategy: str
    model: str
    participants: int
    ratio: str
    seed: int
    epoch: int
    train_loss: float
    val_f1: float
    test_f1: float
    label_access: str
    wall_time: float  # kept in memory; excluded from the CSV for determinism


@dataclass
class CostReport:
    strategy: str
    model: str
    participants: int
    batch_size: int
    hidden: int
    model_params: int
    rounds: int
    sl_bytes: int
    fl_bytes: int
    secure: bool

    @property
    def sl_bytes_per_round(self) -> float:
        return self.sl_bytes / self.rounds if self.rounds else 0.0

    @property
    def fl_bytes_per_round(self) -> float:
        return self.fl_bytes / self.rounds if self.rounds else 0.0


def comm_cost_fl(participants: int, model_params: int, rounds: int) -> int:
    """Modeled FL bytes: full parameter vector up and down, per participant,
    per round, 8-byte elements."""
    if participants <= 0 or model_params <= 0 or rounds <= 0:
        raise ConfigError("participants, model size and rounds must be positive")
    return rounds * 2 * participants * model_params * FLOAT_BYTES


def comm_cost_sl(transcripts) -> int:
    """Measured split-learning bytes: the exact sum over transcript records."""
    if isinstance(transcripts, RoundTranscript):
        transcripts = [transcripts]
    return sum(t.total_bytes() for t in transcripts)


def count_params(param_dicts) -> int:
    total = 0
    for params in param_dicts:
        total += sum(p.values.size for p in params.values())
    return total


# ---------------------------------------------------------------------------
# single-config runner


def _load_bundle(config: ExperimentConfig) -> DatasetBundle:
    if config.dataset:
        return load_dataset(config.dataset)
    spec = SyntheticSpec.from_json(dict(config.synthetic)) if config.synthetic \
        else desk_scale_spec()
    return generate_synthetic(spec, seed=config.data_seed)


def _grant_labels(view: ParticipantView, bundle: DatasetBundle) -> ParticipantView:
    """Simulation concession: a standalone run by a non-label-holder gets
    explicit read access to the labels."""
    g = view.graph
    granted = type(g)(g.node_types, g.features, g.relations,
                      bundle.graph.labels.copy(), g.num_classes)
    return ParticipantView(view.participant, granted, view.metapaths,
                           view.feature_cols, True, view.train_ids,
                           view.val_ids, view.test_ids, view.edge_indices)


def run_experiment(config: ExperimentConfig):
    """Execute the configured strategy for every seed.

    Returns (metrics rows, cost report).  The cost report reflects the last
    seed's transcript; message counts and sizes are structural, so they are
    identical across seeds.
    """
    bundle = _load_bundle(config)
    rows: list[MetricsRow] = []
    last_transcript: RoundTranscript | None = None
    model_params = 0
    rounds_total = 0

    for seed in config.seeds:
        scfg = config.session_config(seed)
        start = time.perf_counter()
        label_access = "native"

        if config.strategy == "entire":
            spec = PartitionSpec.from_ratio([1.0], bundle.graph.feature_dim,
                                            bundle.graph.relation_names())
            view = vertical_partition(bundle, spec, seed=config.data_seed)[0]
            model = CentralizedModel(view, scfg)
            history = model.train()
            model_params = count_params([model.params])
            transcript = None
        else:
            spec = PartitionSpec.from_ratio(config.ratio, bundle.graph.feature_dim,
                                            bundle.graph.relation_names(),
                                            label_holder=config.label_holder)
            views = vertical_partition(bundle, spec, seed=config.data_seed)
            if config.strategy.startswith("standalone_"):
                idx = int(config.strategy.split("_", 1)[1])
                if not 0 <= idx < len(views):
                    raise RoleError(f"no participant {idx} to run standalone")
                view = views[idx]
                if not view.has_labels:
                    view = _grant_labels(view, bundle)
                    label_access = "granted"
                model = CentralizedModel(view, scfg)
                history = model.train()
                model_params = count_params([model.params])
                transcript = None
            else:
                session = SplitSession(views, scfg)
                session.align()
                history = session.train()
                model_params = count_params(
                    [p.trainable() for p in session.participants] + [session.server_params])
                transcript = session.transcript
                rounds_total = session._round

        elapsed = time.perf_counter() - start
        if transcript is not None:
            last_transcript = transcript
        for h in history:
            rows.append(MetricsRow(
                digest=config.digest(seed),
                strategy=config.strategy,
                model=config.model,
                participants=config.participants if config.strategy != "entire" else 1,
                ratio=":".join(f"{r:g}" for r in config.ratio),
                seed=seed,
                epoch=h["epoch"],
                train_loss=h["train_loss"],
                val_f1=h["val_f1"],
                test_f1=h["test_f1"],
                label_access=label_access,
                wall_time=elapsed,
            ))

    sl_bytes = comm_cost_sl(last_transcript) if last_transcript is not None else 0
    fl_bytes = comm_cost_fl(max(config.participants, 1), max(model_params, 1),
                            max(rounds_total, 1)) if rounds_total else 0
    cost = CostReport(
        strategy=config.strategy,
        model=config.model,
        participants=config.participants,
        batch_size=config.batch_size,
        hidden=config.hidden,
        model_params=model_params,
        rounds=rounds_total,
        sl_bytes=sl_bytes,
        fl_bytes=fl_bytes,
        secure=config.secure,
    )
    return rows, cost, last_transcript


# ---------------------------------------------------------------------------
# report emission


METRICS_COLUMNS = ("digest", "strategy", "model", "participants", "ratio",
                   "seed", "epoch", "train_loss", "val_f1", "test_f1",
                   "label_access")
COST_COLUMNS = ("strategy", "model", "participants", "batch_size", "hidden",
                "model_params", "rounds", "sl_bytes", "sl_bytes_per_round",
                "fl_bytes", "fl_bytes_per_round", "secure")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(rows, costs, out_dir) -> tuple[Path, Path]:
    """Write metrics.csv and cost.csv with stable columns and full precision.

    Re-running with identical inputs produces byte-identical files.
    """
    if not rows:
        raise ConfigError("no metrics rows to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(getattr(r, c)) for c in METRICS_COLUMNS) + "\n")
    cost_path = out_dir / "cost.csv"
    if isinstance(costs, CostReport):
        costs = [costs]
    with open(cost_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(COST_COLUMNS) + "\n")
        for c in costs:
            fh.write(",".join(_fmt(getattr(c, col)) for col in COST_COLUMNS) + "\n")
    return metrics_path, cost_path


def read_metrics(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


# ---------------------------------------------------------------------------
# grids


def grid_configs(base: ExperimentConfig, grid: str) -> list[ExperimentConfig]:
    """The experiment grids: strategy comparison, participant scaling,
    distribution skew, and the communication-cost sweep."""
    payload = base.to_json()

    def variant(**overrides) -> ExperimentConfig:
        merged = {**payload, **overrides}
        return ExperimentConfig.from_json(merged)

    if grid == "table1":
        strategies = ["entire", "standalone_0", "standalone_1",
                      "split_m", "split_c", "split_w"]
        return [variant(strategy=s, participants=2, ratio=[5.0, 5.0])
                for s in strategies]
    if grid == "table2":
        return [variant(strategy="split_c", participants=i, ratio=[1.0] * i)
                for i in (2, 4, 8)]
    if grid == "table3":
        return [variant(strategy="split_c", participants=2, ratio=list(r))
                for r in ([5.0, 5.0], [3.0, 7.0], [1.0, 9.0])]
    if grid == "cost":
        out = []
        for i in (2, 4, 8):
            for model, hidden in (("gcn", 16), ("gcn", 64), ("hat", 64)):
                out.append(variant(
                    strategy="split_m", participants=i, ratio=[1.0] * i,
                    model=model, hidden=hidden, epochs=1, rounds_per_epoch=1,
                    seeds=[base.seeds[0]]))
        return out
    raise ConfigError(f"unknown grid {grid!r}")


def run_grid(base: ExperimentConfig, grid: str):
    all_rows, all_costs = [], []
    last_transcript = None
    for cfg in grid_configs(base, grid):
        rows, cost, transcript = run_experiment(cfg)
        all_rows.extend(rows)
        all_costs.append(cost)
        if transcript is not None:
            last_transcript = transcript
    return all_rows, all_costs, last_transcript
