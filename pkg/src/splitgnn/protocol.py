"""The tripartite split-training loop.

Per communication round: every participant encodes a node batch over its own
edges and sends the embeddings up (plaintext or encrypted); the server
combines them with the configured strategy and runs its sub-network; the
label holder turns the returned hidden state into predictions and loss, and
gradients retrace the same path backwards across both cuts.  Every message
is metered in a :class:`RoundTranscript`.

A :class:`CentralizedModel` composes the same encoder, server stack and
output head on a single tape with no message passing; it is both the
"Entire" baseline and the equivalence oracle for the routed pipeline.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from . import crypto as C
from . import tensor as T
from .errors import ConfigError, DomainError, ProtocolError, RoleError
from .graph import ParticipantView
from .models import EncoderConfig, init_param, make_encoder
from .seeding import stable_rng, stable_seed
from .transcript import RoundTranscript

STRATEGIES = ("average", "concat", "weighted")
FLOAT_BYTES = 8


# ---------------------------------------------------------------------------
# combination strategies and routing


def combine_average(locals_):
    _check_shapes(locals_)
    return np.mean(locals_, axis=0)


def combine_concat(locals_):
    if len({l.shape[0] for l in locals_}) != 1:
        raise ProtocolError(f"row counts differ: {[l.shape for l in locals_]}")
    return np.concatenate(locals_, axis=1)


def combine_weighted(locals_, omegas):
    _check_shapes(locals_)
    if len(omegas) != len(locals_):
        raise ProtocolError("one weight vector per participant required")
    out = np.zeros_like(locals_[0])
    for w, l in zip(omegas, locals_):
        if w.shape != (l.shape[1],):
            raise ProtocolError(f"weight shape {w.shape} does not match dim {l.shape[1]}")
        out += w * l
    return out


def _check_shapes(locals_):
    if not locals_:
        raise ProtocolError("no participant embeddings")
    shape = locals_[0].shape
    for i, l in enumerate(locals_):
        if l.shape != shape:
            raise ProtocolError(
                f"participant {i} sent shape {l.shape}, expected {shape}"
            )


def backward_route(grad, strategy, num_participants, omegas=None, locals_=None):
    """Split the server-input gradient back to participants.

    Returns (per-participant gradients, per-participant weight gradients).
    Weight gradients are only produced for the weighted strategy and need
    the forward's local embeddings.
    """
    if strategy == "average":
        share = grad / num_participants
        return [share.copy() for _ in range(num_participants)], None
    if strategy == "concat":
        d = grad.shape[1] // num_participants
        return [np.ascontiguousarray(grad[:, i * d:(i + 1) * d])
                for i in range(num_participants)], None
    if strategy == "weighted":
        if omegas is None or locals_ is None:
            raise ProtocolError("weighted routing needs weights and local embeddings")
        parts = [w * grad for w in omegas]
        wgrads = [np.sum(grad * l, axis=0) for l in locals_]
        return parts, wgrads
    raise ConfigError(f"unknown strategy {strategy!r}")


# ---------------------------------------------------------------------------
# server and label-holder sub-models


class ServerNet:
    """Two dense+ELU+dropout layers; with cut="logits" a third map to the
    class dimension runs here instead of at the label holder."""

    def __init__(self, in_dim, hidden, num_classes, cut, seed, dropout=0.3,
                 scope="server"):
        self.cut = cut
        self.seed = seed
        self.scope = scope
        self.dropout = dropout
        self.params: dict[str, T.Tensor] = {}
        init_param(self.params, f"{scope}/l0/W", (in_dim, hidden), seed)
        init_param(self.params, f"{scope}/l0/b", (hidden,), seed, zeros=True)
        init_param(self.params, f"{scope}/l1/W", (hidden, hidden), seed)
        init_param(self.params, f"{scope}/l1/b", (hidden,), seed, zeros=True)
        if cut == "logits":
            init_param(self.params, f"{scope}/out/W", (hidden, num_classes), seed)
            init_param(self.params, f"{scope}/out/b", (num_classes,), seed, zeros=True)

    def forward(self, tape, x, step=0, training=False):
        h = x
        for l in (0, 1):
            h = T.elu(tape, T.linear(tape, h,
                                     self.params[f"{self.scope}/l{l}/W"],
                                     self.params[f"{self.scope}/l{l}/b"]))
            h = T.dropout(tape, h, self.dropout,
                          seed=(self.seed, "dropout", self.scope, l, step),
                          training=training)
        if self.cut == "logits":
            h = T.linear(tape, h, self.params[f"{self.scope}/out/W"],
                         self.params[f"{self.scope}/out/b"])
        return h


class LabelHead:
    """The label holder's private output layer and loss."""

    def __init__(self, hidden, num_classes, seed, scope="head"):
        self.scope = scope
        self.params: dict[str, T.Tensor] = {}
        init_param(self.params, f"{scope}/W", (hidden, num_classes), seed)
        init_param(self.params, f"{scope}/b", (num_classes,), seed, zeros=True)

    def logits(self, tape, hidden):
        return T.linear(tape, hidden, self.params[f"{self.scope}/W"],
                        self.params[f"{self.scope}/b"])

    def forward_loss(self, tape, hidden, labels):
        logits = self.logits(tape, hidden)
        return T.cross_entropy(tape, logits, labels), logits


def label_forward_loss(tape, hidden, head: LabelHead, labels):
    """Loss at the label holder plus the gradient to return to the server."""
    hidden_leaf = T.Tensor(hidden, requires_grad=True, name="cut/hidden")
    loss, _ = head.forward_loss(tape, hidden_leaf, labels)
    tape.backward(loss)
    return loss, hidden_leaf.grad


# ---------------------------------------------------------------------------
# metrics


def micro_f1(predicted, truth) -> float:
    """Micro-averaged F1 from pooled per-class confusion counts."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.size == 0:
        raise DomainError("cannot score an empty split")
    classes = np.unique(np.concatenate([predicted, truth]))
    tp = fp = fn = 0
    for c in classes:
        tp += int(np.sum((predicted == c) & (truth == c)))
        fp += int(np.sum((predicted == c) & (truth != c)))
        fn += int(np.sum((predicted != c) & (truth == c)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def batch_schedule(train_ids, batch_size, epoch, seed):
    """Seeded without-replacement batches for one epoch; the final batch may
    be short, giving ceil(|train| / B) rounds per epoch."""
    ids = np.asarray(train_ids)
    perm = stable_rng(seed, "batch", epoch).permutation(len(ids))
    shuffled = ids[perm]
    return [shuffled[i:i + batch_size] for i in range(0, len(ids), batch_size)]


# ---------------------------------------------------------------------------
# session configuration


@dataclass
class SessionConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    strategy: str = "concat"
    batch_size: int = 64
    epochs: int = 5
    learning_rate: float = 0.05
    optimizer: str = "sgd"
    cut: str = "hidden"          # hidden | logits
    secure: bool = False
    seed: int = 0
    key_bits: int = 512
    scale_bits: int = 24
    server_dropout: float = 0.3
    rounds_per_epoch: int | None = None   # None -> ceil(|train| / B)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.cut not in ("hidden", "logits"):
            raise ConfigError("cut must be 'hidden' or 'logits'")
        if self.batch_size < 1:
            raise ConfigError("batch size must be positive")


@dataclass
class Participant:
    index: int
    view: ParticipantView
    encoder: object
    optimizer: object
    head: LabelHead | None = None

    @property
    def name(self) -> str:
        return f"party_{self.index}"

    @property
    def is_label_holder(self) -> bool:
        return self.head is not None

    def trainable(self) -> dict[str, T.Tensor]:
        params = dict(self.encoder.params)
        if self.head is not None:
            params.update(self.head.params)
        return params


# ---------------------------------------------------------------------------
# the split session


class SplitSession:
    """Logical actors for one training run: participants, server, decryptor.

    All parties live in-process; messages are counted, not transmitted.
    """

    def __init__(self, views: list[ParticipantView], config: SessionConfig):
        if not views:
            raise ConfigError("need at least one participant view")
        holders = [v.participant for v in views if v.has_labels]
        if len(holders) != 1:
            raise ConfigError(f"exactly one label holder required, got {len(holders)}")
        self.config = config
        self.views = views
        self.num_classes = views[0].graph.num_classes
        d = config.encoder.hidden
        self.participants: list[Participant] = []
        for v in views:
            enc = make_encoder(v, config.encoder, config.seed, scope=f"enc{v.participant}")
            head = None
            if v.has_labels and config.cut == "hidden":
                head = LabelHead(d, self.num_classes, config.seed)
            opt = T.make_optimizer(config.optimizer, config.learning_rate)
            self.participants.append(Participant(v.participant, v, enc, opt, head))
        self.label_holder = next(p for p in self.participants if p.view.has_labels)
        in_dim = d * len(views) if config.strategy == "concat" else d
        self.server = ServerNet(in_dim, d, self.num_classes, config.cut,
                                config.seed, dropout=config.server_dropout)
        self.server_params: dict[str, T.Tensor] = dict(self.server.params)
        self.omegas: list[T.Tensor] = []
        if config.strategy == "weighted":
            for p in self.participants:
                w = T.Tensor(np.full(d, 1.0 / len(views)), requires_grad=True,
                             name=f"server/omega{p.index}")
                self.omegas.append(w)
                self.server_params[w.name] = w
        self.server_optimizer = T.make_optimizer(config.optimizer, config.learning_rate)

        # the "n" prefix keeps raw ids out of the hex digest alphabet, so a
        # digest can never contain an id by accident
        self.external_ids = [f"n{i}" for i in range(views[0].graph.num_nodes)]
        self.transcript = RoundTranscript(context={
            "raw_ids": self.external_ids,
            "secure": config.secure,
            "strategy": config.strategy,
            "participants": len(views),
            "label_holder": self.label_holder.index,
            "batch_size": config.batch_size,
            "hidden_dim": d,
        })
        self.keypair = None
        self._enc_rng = random.Random(repr(stable_seed(config.seed, "paillier-blind")))
        if config.secure:
            self.keypair = C.keygen(config.key_bits, seed=(config.seed, "keygen"))
        self.aligned: np.ndarray | None = None
        self._round = 0

    # -- alignment -----------------------------------------------------------

    def align(self, id_subsets=None) -> np.ndarray:
        """PSI over external ids; restricts train/val/test to the intersection."""
        if len(self.participants) == 1 and id_subsets is None:
            self.aligned = np.arange(self.views[0].graph.num_nodes)
            return self.aligned
        if id_subsets is None:
            id_subsets = [list(self.external_ids) for _ in self.participants]
        salt = C.fresh_salt(seed=(self.config.seed, "psi"))
        common = C.psi_align(id_subsets, salt, transcript=self.transcript,
                             round_index=-1,
                             party_names=[p.name for p in self.participants])
        if not common:
            raise ProtocolError("PSI intersection is empty; nothing to align")
        index = {ext: i for i, ext in enumerate(self.external_ids)}
        self.aligned = np.array(sorted(index[x] for x in common), dtype=np.int64)
        return self.aligned

    def _split_ids(self, name: str) -> np.ndarray:
        if self.aligned is None:
            raise ProtocolError("session is not aligned; call align() first")
        view = self.views[0]
        ids = {"train": view.train_ids, "val": view.val_ids, "test": view.test_ids}[name]
        mask = np.isin(ids, self.aligned)
        return ids[mask]

    # -- secure uplink -------------------------------------------------------

    def _secure_combined(self, locals_):
        cfg = self.config
        pub = self.keypair.public
        names = [p.name for p in self.participants]
        if cfg.strategy == "average":
            total = C.secure_sum(locals_, self.keypair, self._enc_rng,
                                 scale_bits=cfg.scale_bits,
                                 transcript=self.transcript,
                                 round_index=self._round, party_names=names)
            return total / len(locals_)
        if cfg.strategy == "weighted":
            # participants encrypt; the server scales each ciphertext by its
            # fixed-point weight and combines, so only the weighted aggregate
            # is ever decrypted
            scale = cfg.scale_bits
            combined = None
            wire = 4 + pub.wire_width
            for name, vec, omega in zip(names, locals_, self.omegas):
                flat = vec.reshape(-1)
                cts = [C.encrypt(pub, C.fixed_encode(float(x), scale), self._enc_rng)
                       for x in flat]
                self.transcript.add(self._round, name, "server", "ciphertext",
                                    elements=len(cts), byte_size=len(cts) * wire,
                                    encrypted=True)
                w_fixed = [C.fixed_encode(float(w), scale)
                           for w in np.repeat(omega.values[None, :], vec.shape[0], axis=0).reshape(-1)]
                scaled = [c.scale(k) for c, k in zip(cts, w_fixed)]
                combined = scaled if combined is None else \
                    [a + b for a, b in zip(combined, scaled)]
            vals = np.array([
                C.fixed_decode(C.signed_decode(C.decrypt(self.keypair, c), pub.n),
                               2 * scale)
                for c in combined
            ])
            self.transcript.log_decryption(self._round, len(combined), aggregated=True)
            return vals.reshape(locals_[0].shape)
        # concat has no aggregate sum: fall back to per-participant encryption
        # toward the decryptor; the audit labels the weaker guarantee
        pieces = []
        wire = 4 + pub.wire_width
        for name, vec in zip(names, locals_):
            flat = vec.reshape(-1)
            cts = [C.encrypt(pub, C.fixed_encode(float(x), cfg.scale_bits), self._enc_rng)
                   for x in flat]
            self.transcript.add(self._round, name, "decryptor", "ciphertext",
                                elements=len(cts), byte_size=len(cts) * wire,
                                encrypted=True)
            vals = np.array([
                C.fixed_decode(C.signed_decode(C.decrypt(self.keypair, c),
                                               pub.n), cfg.scale_bits)
                for c in cts
            ])
            self.transcript.log_decryption(self._round, len(cts), aggregated=False)
            pieces.append(vals.reshape(vec.shape))
        return combine_concat(pieces)

    # -- one communication round ----------------------------------------------

    def train_round(self, batch, step: int) -> float:
        if self.aligned is None:
            raise ProtocolError("session is not aligned; call align() first")
        cfg = self.config
        batch = np.asarray(batch, dtype=np.int64)
        d = cfg.encoder.hidden
        n = len(batch)

        # fresh gradient buffers everywhere before any backward runs
        for p in self.participants:
            for tensor in p.trainable().values():
                tensor.zero_grad()
        for tensor in self.server_params.values():
            tensor.zero_grad()

        # participants: local multi-hop embeddings over private edges
        tapes, embeds, locals_ = [], [], []
        for p in self.participants:
            tape = T.Tape()
            emb = p.encoder.forward(tape, batch, step=step, training=True)
            tapes.append(tape)
            embeds.append(emb)
            locals_.append(emb.values)

        # uplink and server-side combination
        if cfg.secure:
            combined = self._secure_combined(locals_)
        else:
            for p in self.participants:
                self.transcript.add(self._round, p.name, "server", "embedding",
                                    elements=n * d, byte_size=n * d * FLOAT_BYTES)
            if cfg.strategy == "average":
                combined = combine_average(locals_)
            elif cfg.strategy == "concat":
                combined = combine_concat(locals_)
            else:
                combined = combine_weighted(locals_, [w.values for w in self.omegas])

        server_tape = T.Tape()
        server_in = T.Tensor(combined, requires_grad=True, name="cut/combined")
        server_out = self.server.forward(server_tape, server_in, step=step, training=True)

        # label holder: loss and the gradient returned to the server
        labels = self.label_holder.view.graph.labels[batch]
        if np.any(labels < 0):
            raise RoleError("label holder lacks labels for the batch")
        out_elems = server_out.values.size
        self.transcript.add(self._round, "server", self.label_holder.name, "hidden",
                            elements=out_elems, byte_size=out_elems * FLOAT_BYTES)
        label_tape = T.Tape()
        if cfg.cut == "hidden":
            loss, hidden_grad = label_forward_loss(
                label_tape, server_out.values, self.label_holder.head, labels)
        else:
            logits_leaf = T.Tensor(server_out.values, requires_grad=True)
            loss = T.cross_entropy(label_tape, logits_leaf, labels)
            label_tape.backward(loss)
            hidden_grad = logits_leaf.grad
        self.transcript.add(self._round, self.label_holder.name, "server", "gradient",
                            elements=out_elems, byte_size=out_elems * FLOAT_BYTES)

        # server backward and routing across the lower cut
        server_tape.backward(server_out, seed_grad=hidden_grad)
        routed, wgrads = backward_route(
            server_in.grad, cfg.strategy, len(self.participants),
            omegas=[w.values for w in self.omegas] if self.omegas else None,
            locals_=locals_)
        if wgrads is not None:
            for w, g in zip(self.omegas, wgrads):
                w.grad = g if w.grad is None else w.grad + g

        for p, tape, emb, g in zip(self.participants, tapes, embeds, routed):
            self.transcript.add(self._round, "server", p.name, "gradient",
                                elements=g.size, byte_size=g.size * FLOAT_BYTES)
            tape.backward(emb, seed_grad=g)

        # everyone updates locally
        for p in self.participants:
            p.optimizer.step(p.trainable())
        self.server_optimizer.step(self.server_params)
        self._round += 1
        return loss.item()

    # -- inference -----------------------------------------------------------

    def predict(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        locals_ = [p.encoder.forward(None, ids, training=False).values
                   for p in self.participants]
        if self.config.strategy == "average":
            combined = combine_average(locals_)
        elif self.config.strategy == "concat":
            combined = combine_concat(locals_)
        else:
            combined = combine_weighted(locals_, [w.values for w in self.omegas])
        out = self.server.forward(None, T.Tensor(combined), training=False)
        if self.config.cut == "hidden":
            logits = self.label_holder.head.logits(None, out)
        else:
            logits = out
        return np.argmax(logits.values, axis=1)

    def evaluate(self, split: str) -> float:
        ids = self._split_ids(split)
        if ids.size == 0:
            raise DomainError(f"split {split!r} is empty after alignment")
        truth = self.label_holder.view.graph.labels[ids]
        return micro_f1(self.predict(ids), truth)

    # -- full loop -----------------------------------------------------------

    def train(self, log=None) -> list[dict]:
        cfg = self.config
        if self.aligned is None:
            self.align()
        train_ids = self._split_ids("train")
        if cfg.batch_size > len(train_ids):
            raise ConfigError(
                f"batch size {cfg.batch_size} exceeds aligned train set "
                f"({len(train_ids)})"
            )
        rows = []
        step = 0
        for epoch in range(cfg.epochs):
            batches = batch_schedule(train_ids, cfg.batch_size, epoch, cfg.seed)
            if cfg.rounds_per_epoch is not None:
                batches = batches[:cfg.rounds_per_epoch]
            losses = []
            for batch in batches:
                losses.append(self.train_round(batch, step))
                step += 1
            row = {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_f1": self.evaluate("val"),
                "test_f1": self.evaluate("test"),
            }
            rows.append(row)
            if log:
                log(row)
        return rows


# ---------------------------------------------------------------------------
# centralized oracle


class CentralizedModel:
    """Encoder, server stack and output head on one tape.

    Used as the "Entire" baseline (full graph view) and the "Standalone"
    baseline (one participant's view with label access granted), and as the
    reference the split pipeline must match exactly when there is a single
    participant.
    """

    def __init__(self, view: ParticipantView, config: SessionConfig):
        if not view.has_labels:
            raise RoleError("centralized training needs a view holding labels")
        self.config = config
        self.view = view
        self.num_classes = view.graph.num_classes
        d = config.encoder.hidden
        self.encoder = make_encoder(view, config.encoder, config.seed,
                                    scope=f"enc{view.participant}")
        self.server = ServerNet(d, d, self.num_classes, config.cut,
                                config.seed, dropout=config.server_dropout)
        self.head = LabelHead(d, self.num_classes, config.seed) \
            if config.cut == "hidden" else None
        self.params: dict[str, T.Tensor] = dict(self.encoder.params)
        self.params.update(self.server.params)
        if self.head is not None:
            self.params.update(self.head.params)
        self.optimizer = T.make_optimizer(config.optimizer, config.learning_rate)

    def _logits(self, tape, ids, step=0, training=False):
        emb = self.encoder.forward(tape, ids, step=step, training=training)
        out = self.server.forward(tape, emb, step=step, training=training)
        if self.head is not None:
            out = self.head.logits(tape, out)
        return out

    def train_step(self, batch, step: int) -> float:
        labels = self.view.graph.labels[np.asarray(batch)]
        tape = T.Tape()
        loss = T.cross_entropy(tape, self._logits(tape, batch, step, training=True),
                               labels)
        for p in self.params.values():
            p.zero_grad()
        tape.backward(loss)
        self.optimizer.step(self.params)
        return loss.item()

    def predict(self, ids) -> np.ndarray:
        return np.argmax(self._logits(None, ids).values, axis=1)

    def evaluate(self, split: str) -> float:
        ids = {"train": self.view.train_ids, "val": self.view.val_ids,
               "test": self.view.test_ids}[split]
        if ids.size == 0:
            raise DomainError(f"split {split!r} is empty")
        return micro_f1(self.predict(ids), self.view.graph.labels[ids])

    def train(self, log=None) -> list[dict]:
        cfg = self.config
        if cfg.batch_size > len(self.view.train_ids):
            raise ConfigError("batch size exceeds train set")
        rows = []
        step = 0
        for epoch in range(cfg.epochs):
            batches = batch_schedule(self.view.train_ids, cfg.batch_size,
                                     epoch, cfg.seed)
            if cfg.rounds_per_epoch is not None:
                batches = batches[:cfg.rounds_per_epoch]
            losses = []
            for batch in batches:
                losses.append(self.train_step(batch, step))
                step += 1
            row = {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_f1": self.evaluate("val"),
                "test_f1": self.evaluate("test"),
            }
            rows.append(row)
            if log:
                log(row)
        return rows
