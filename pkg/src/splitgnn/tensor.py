"""Dense float64 tensors with reverse-mode differentiation on an explicit tape.

Operations take the recording :class:`Tape` as their first argument and
return new :class:`Tensor` objects.  Passing ``tape=None`` runs the forward
math without recording, which is how inference-mode code avoids autograd
overhead.  Gradients are accumulated into ``Tensor.grad`` on every leaf with
``requires_grad`` when :meth:`Tape.backward` runs.

The op set is small on purpose: matrix products, broadcast arithmetic,
segment (per-group) softmax and sums for edge-list aggregation, the usual
activations, dropout and cross-entropy.  All values are float64 throughout.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DomainError, NumericError, ShapeError
from .seeding import stable_rng


class Tensor:
    """A dense float64 array plus an optional same-shape gradient buffer."""

    __slots__ = ("values", "grad", "requires_grad", "name")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = self.name or "tensor"
        return f"<{tag} shape={self.shape} grad={'set' if self.grad is not None else 'none'}>"


class _Node:
    __slots__ = ("out", "inputs", "backfn")

    def __init__(self, out, inputs, backfn):
        self.out = out
        self.inputs = inputs
        self.backfn = backfn


class Tape:
    """Append-only record of primitive applications, replayed in reverse.

    Creation order is topological by construction: an op's inputs always
    exist before its output, so walking ``_nodes`` backwards visits each
    node exactly once and yields deterministic, bit-reproducible gradients.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._produced: set[int] = set()

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backfn) -> None:
        self._nodes.append(_Node(out, inputs, backfn))
        self._produced.add(id(out))

    def backward(self, loss: Tensor, seed_grad: np.ndarray | None = None) -> None:
        """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf that
        requires grad.  ``seed_grad`` overrides the default all-ones seed and
        is how a downstream party's gradient is injected at a cut tensor."""
        if id(loss) not in self._produced:
            raise ContractError("backward target was not produced by this tape")
        if seed_grad is None:
            if loss.values.size != 1:
                raise ContractError(
                    f"backward target must be scalar, got shape {loss.shape}"
                )
            seed = np.ones_like(loss.values)
        else:
            seed = np.asarray(seed_grad, dtype=np.float64)
            if seed.shape != loss.values.shape:
                raise ShapeError(
                    f"seed grad shape {seed.shape} != output shape {loss.values.shape}"
                )
        grads: dict[int, np.ndarray] = {id(loss): seed}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self._nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for tin, gin in zip(node.inputs, node.backfn(g)):
                if gin is None or not tin.requires_grad:
                    continue
                key = id(tin)
                if key in grads:
                    grads[key] = grads[key] + gin
                else:
                    grads[key] = gin
                if key not in self._produced:
                    leaves[key] = tin
        for key, leaf in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            leaf.grad = g if leaf.grad is None else leaf.grad + g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (have, want) in enumerate(zip(g.shape, shape)):
        if want == 1 and have != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _emit(tape, out, inputs, backfn) -> Tensor:
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, backfn)
    return out


# ---------------------------------------------------------------------------
# arithmetic


def add(tape, a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values + b.values)
    return _emit(tape, out, (a, b), lambda g: (
        _unbroadcast(g, a.values.shape),
        _unbroadcast(g, b.values.shape),
    ))


def sub(tape, a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values - b.values)
    return _emit(tape, out, (a, b), lambda g: (
        _unbroadcast(g, a.values.shape),
        _unbroadcast(-g, b.values.shape),
    ))


def mul(tape, a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values * b.values)
    return _emit(tape, out, (a, b), lambda g: (
        _unbroadcast(g * b.values, a.values.shape),
        _unbroadcast(g * a.values, b.values.shape),
    ))


def scale(tape, a, c: float) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.values * c)
    return _emit(tape, out, (a,), lambda g: (g * c,))


def matmul(tape, a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ShapeError(f"matmul expects 2-D @ 1/2-D, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = Tensor(a.values @ b.values)

    if b.ndim == 2:
        backfn = lambda g: (g @ b.values.T, a.values.T @ g)
    else:
        backfn = lambda g: (np.outer(g, b.values), a.values.T @ g)
    return _emit(tape, out, (a, b), backfn)


def linear(tape, x, w, b) -> Tensor:
    """x @ w + b with b broadcast over rows."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.shape[-1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeError(
            f"linear shapes do not conform: x{x.shape} w{w.shape} b{b.shape}"
        )
    return add(tape, matmul(tape, x, w), b)


# ---------------------------------------------------------------------------
# shape manipulation


def concat_cols(tape, parts) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"concat row counts differ: {[p.shape for p in parts]}")
    out = Tensor(np.concatenate([p.values for p in parts], axis=1))
    offsets = np.cumsum([p.shape[1] for p in parts])[:-1]

    def backfn(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, offsets, axis=1))

    return _emit(tape, out, tuple(parts), backfn)


def concat_rows(tape, parts) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.values for p in parts], axis=0))
    offsets = np.cumsum([p.shape[0] for p in parts])[:-1]

    def backfn(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, offsets, axis=0))

    return _emit(tape, out, tuple(parts), backfn)


def sum_rows(tape, x) -> Tensor:
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"sum_rows expects 2-D, got {x.shape}")
    out = Tensor(x.values.sum(axis=0))
    return _emit(tape, out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def stack_scalars(tape, scalars) -> Tensor:
    scalars = [_as_tensor(s) for s in scalars]
    out = Tensor(np.array([s.values.reshape(()) for s in scalars]))

    def backfn(g):
        return tuple(np.asarray(g[i]).reshape(s.values.shape) for i, s in enumerate(scalars))

    return _emit(tape, out, tuple(scalars), backfn)


def take(tape, v, i: int) -> Tensor:
    v = _as_tensor(v)
    out = Tensor(v.values[i])

    def backfn(g):
        gv = np.zeros_like(v.values)
        gv[i] = g
        return (gv,)

    return _emit(tape, out, (v,), backfn)


def reshape_col(tape, v) -> Tensor:
    """Lift a 1-D tensor (n,) to a column (n, 1) for row-wise scaling."""
    v = _as_tensor(v)
    if v.ndim != 1:
        raise ShapeError(f"reshape_col expects 1-D, got {v.shape}")
    out = Tensor(v.values[:, None])
    return _emit(tape, out, (v,), lambda g: (g[:, 0],))


def gather_rows(tape, x, idx) -> Tensor:
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.values[idx])

    def backfn(g):
        gx = np.zeros_like(x.values)
        np.add.at(gx, idx, g)
        return (gx,)

    return _emit(tape, out, (x,), backfn)


def scatter_rows(tape, piece, idx, n_rows: int) -> Tensor:
    """Rows of ``piece`` placed at positions ``idx`` of an n_rows output;
    remaining rows are zero.  ``idx`` entries must be distinct."""
    piece = _as_tensor(piece)
    idx = np.asarray(idx, dtype=np.int64)
    vals = np.zeros((n_rows,) + piece.shape[1:], dtype=np.float64)
    vals[idx] = piece.values
    out = Tensor(vals)
    return _emit(tape, out, (piece,), lambda g: (g[idx],))


# ---------------------------------------------------------------------------
# reductions and segment ops


def mean_all(tape, x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.values.mean())
    n = x.values.size
    return _emit(tape, out, (x,), lambda g: (np.full_like(x.values, float(g) / n),))


def rowwise_dot(tape, a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"rowwise_dot expects equal 2-D shapes, got {a.shape}, {b.shape}")
    out = Tensor(np.einsum("ij,ij->i", a.values, b.values))
    return _emit(tape, out, (a, b), lambda g: (
        g[:, None] * b.values,
        g[:, None] * a.values,
    ))


def segment_sum(tape, x, seg, n_segments: int) -> Tensor:
    x = _as_tensor(x)
    seg = np.asarray(seg, dtype=np.int64)
    vals = np.zeros((n_segments,) + x.shape[1:], dtype=np.float64)
    np.add.at(vals, seg, x.values)
    out = Tensor(vals)
    return _emit(tape, out, (x,), lambda g: (g[seg],))


def segment_softmax(tape, scores, seg, n_segments: int, temperature: float = 1.0) -> Tensor:
    """Softmax of 1-D ``scores`` normalized within each segment.

    Uses per-segment max subtraction, so arbitrarily large scores stay
    finite.  Entries of empty segments simply do not exist.
    """
    scores = _as_tensor(scores)
    if scores.ndim != 1:
        raise ShapeError(f"segment_softmax expects 1-D scores, got {scores.shape}")
    if temperature <= 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    seg = np.asarray(seg, dtype=np.int64)
    s = scores.values * temperature
    seg_max = np.full(n_segments, -np.inf)
    np.maximum.at(seg_max, seg, s)
    z = np.exp(s - seg_max[seg])
    denom = np.zeros(n_segments)
    np.add.at(denom, seg, z)
    alpha = z / denom[seg]
    out = Tensor(alpha)

    def backfn(g):
        t = alpha * g
        tot = np.zeros(n_segments)
        np.add.at(tot, seg, t)
        return (temperature * (t - alpha * tot[seg]),)

    return _emit(tape, out, (scores,), backfn)


# ---------------------------------------------------------------------------
# nonlinearities


def elu(tape, x) -> Tensor:
    x = _as_tensor(x)
    vals = np.where(x.values > 0, x.values, np.expm1(x.values))
    out = Tensor(vals)
    return _emit(tape, out, (x,), lambda g: (
        g * np.where(x.values > 0, 1.0, vals + 1.0),
    ))


def tanh(tape, x) -> Tensor:
    x = _as_tensor(x)
    vals = np.tanh(x.values)
    out = Tensor(vals)
    return _emit(tape, out, (x,), lambda g: (g * (1.0 - vals * vals),))


def softmax(tape, logits, temperature: float = 1.0) -> Tensor:
    """Stable softmax of a 1-D logit vector at the given temperature."""
    logits = _as_tensor(logits)
    if logits.ndim != 1 or logits.values.size == 0:
        raise DomainError(f"softmax expects a non-empty 1-D input, got shape {logits.shape}")
    if temperature <= 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    s = logits.values * temperature
    z = np.exp(s - s.max())
    p = z / z.sum()
    out = Tensor(p)

    def backfn(g):
        return (temperature * p * (g - np.dot(g, p)),)

    return _emit(tape, out, (logits,), backfn)


def dropout(tape, x, rate: float, seed, training: bool) -> Tensor:
    """Inverted dropout; the mask is a pure function of ``seed``.

    At inference (or rate 0) this is the exact identity: the input tensor
    itself is returned.
    """
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate must be in [0, 1), got {rate}")
    x = _as_tensor(x)
    if not training or rate == 0.0:
        return x
    rng = stable_rng(*seed) if isinstance(seed, (tuple, list)) else stable_rng(seed)
    mask = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    out = Tensor(x.values * mask)
    return _emit(tape, out, (x,), lambda g: (g * mask,))


def cross_entropy(tape, logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer class labels under row softmax."""
    logits = _as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects 2-D logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    for i, lab in enumerate(labels):
        if not 0 <= lab < c:
            raise DomainError(f"label {lab} out of range [0, {c}) at row {i}")
    x = logits.values
    m = x.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(x - m).sum(axis=1))
    out = Tensor(np.mean(lse - x[np.arange(n), labels]))

    def backfn(g):
        p = np.exp(x - lse[:, None])
        p[np.arange(n), labels] -= 1.0
        return (float(g) * p / n,)

    return _emit(tape, out, (logits,), backfn)


# ---------------------------------------------------------------------------
# optimizers


def optimizer_step(params, lr: float) -> None:
    """Plain gradient descent over tensors whose ``grad`` is set."""
    for p in params:
        if p.grad is None:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient for {p.name or 'parameter'}")
        p.values -= lr * p.grad


class Sgd:
    def __init__(self, lr: float = 0.01):
        self.lr = lr

    def step(self, params: dict[str, Tensor]) -> None:
        optimizer_step(params.values(), self.lr)


class Adam:
    """Adaptive-moment variant, selectable via config; deterministic."""

    def __init__(self, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def step(self, params: dict[str, Tensor]) -> None:
        self._t += 1
        for name in sorted(params):
            p = params[name]
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient for {name}")
            m = self._m.setdefault(name, np.zeros_like(p.values))
            v = self._v.setdefault(name, np.zeros_like(p.values))
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * p.grad**2
            mhat = m / (1 - self.beta1**self._t)
            vhat = v / (1 - self.beta2**self._t)
            p.values -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return Sgd(lr)
    if kind == "adam":
        return Adam(lr)
    raise DomainError(f"unknown optimizer kind {kind!r}")


# ---------------------------------------------------------------------------
# gradient oracle


def finite_diff_check(forward_fn, params, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``forward_fn`` must be pure and deterministic and return ``(loss, tape)``
    freshly built on each call.  Analytic gradients come from one backward
    pass; each parameter element is then perturbed by +/- eps and the loss
    re-evaluated.
    """
    params = list(params)
    loss_a, tape = forward_fn()
    loss_b, _ = forward_fn()
    if loss_a.item() != loss_b.item():
        raise ContractError("forward_fn is not deterministic: two calls differ")
    for p in params:
        p.zero_grad()
    if loss_a.requires_grad:
        tape.backward(loss_a)
    analytic = [np.zeros_like(p.values) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.values.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = forward_fn()[0].item()
            flat[i] = orig - eps
            down = forward_fn()[0].item()
            flat[i] = orig
            fd = (up - down) / (2.0 * eps)
            rel = abs(gflat[i] - fd) / (abs(gflat[i]) + 1e-8)
            worst = max(worst, rel)
    return worst
