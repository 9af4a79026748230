"""Desk-scale federated training of a one-hidden-layer ReLU MLP.

Gradients are derived by hand. FedAvg, FedProx and SCAFFOLD (option II
control variates) share one local SGD-with-momentum loop.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import SampleStore
from .errors import EmptyShard, ShapeMismatch
from .partition import PartitionPlan

log = logging.getLogger(__name__)

MODEL_MAGIC = 0x50534D46  # b"FMSP" little-endian
ROUNDLOG_HEADER = ("round", "accuracy", "mean_train_loss")


class Strategy(str, enum.Enum):
    FEDAVG = "fedavg"
    FEDPROX = "fedprox"
    SCAFFOLD = "scaffold"


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector laid out as (W1, b1, W2, b2)."""

    d: int
    h: int
    l: int
    vector: np.ndarray

    def __post_init__(self):
        if self.vector.shape != (param_count(self.d, self.h, self.l),):
            raise ShapeMismatch(
                f"vector of shape {self.vector.shape} does not fit an MLP {self.d}-{self.h}-{self.l}"
            )

    def layers(self):
        d, h, l, v = self.d, self.h, self.l, self.vector
        a = d * h
        W1 = v[:a].reshape(d, h)
        b1 = v[a:a + h]
        W2 = v[a + h:a + h + h * l].reshape(h, l)
        b2 = v[a + h + h * l:]
        return W1, b1, W2, b2

    def with_vector(self, vector: np.ndarray) -> "ModelParams":
        return ModelParams(self.d, self.h, self.l, vector)


def param_count(d: int, h: int, l: int) -> int:
    return d * h + h + h * l + l


def init_params(d: int, h: int, l: int, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(6.0 / (d + h))
    lim2 = np.sqrt(6.0 / (h + l))
    W1 = rng.uniform(-lim1, lim1, size=(d, h))
    W2 = rng.uniform(-lim2, lim2, size=(h, l))
    vec = np.concatenate([W1.ravel(), np.zeros(h), W2.ravel(), np.zeros(l)])
    return ModelParams(d, h, l, vec)


def zeros_like(params: ModelParams) -> ModelParams:
    return params.with_vector(np.zeros_like(params.vector))


def forward(params: ModelParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.d:
        raise ShapeMismatch(f"batch of shape {X.shape} does not match input size {params.d}")
    W1, b1, W2, b2 = params.layers()
    return np.maximum(X @ W1 + b1, 0.0) @ W2 + b2


def loss_and_grad(params: ModelParams, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the flat parameter vector."""
    W1, b1, W2, b2 = params.layers()
    n = X.shape[0]
    pre = X @ W1 + b1
    hid = np.maximum(pre, 0.0)
    logits = hid @ W2 + b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(lse - shifted[np.arange(n), y]))

    dlogits = np.exp(shifted - lse[:, None])
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    gW2 = hid.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dpre = (dlogits @ W2.T) * (pre > 0)
    gW1 = X.T @ dpre
    gb1 = dpre.sum(axis=0)
    return loss, np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])


def evaluate(params: ModelParams, testset: SampleStore) -> float:
    """Top-1 accuracy; ties in the logits resolve to the lowest class index."""
    pred = np.argmax(forward(params, testset.features), axis=1)
    return float(np.mean(pred == testset.labels))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.016
    lr_decay: float = 0.95
    momentum: float = 0.9
    batch_size: int = 50
    local_epochs: int = 10
    rounds: int = 6
    prox_mu: float = 0.01
    seed: int = 0
    hidden: int = 8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.local_epochs < 1 or self.rounds < 1 or self.hidden < 1:
            raise ValueError("batch_size, local_epochs, rounds and hidden must be positive")
        if self.prox_mu < 0:
            raise ValueError("prox_mu must be non-negative")

    def round_lr(self, round_idx: int) -> float:
        return self.lr * self.lr_decay ** round_idx


@dataclass
class LocalResult:
    params: ModelParams
    c_local: np.ndarray | None
    mean_loss: float
    steps: int


def client_rng(seed: int, round_idx: int, client_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, round_idx, client_id])


def local_train(
    params: ModelParams,
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    strategy: Strategy = Strategy.FEDAVG,
    round_idx: int = 0,
    client_id: int = 0,
    c_global: np.ndarray | None = None,
    c_local: np.ndarray | None = None,
    max_steps: int | None = None,
) -> LocalResult:
    """Run ``cfg.local_epochs`` of seeded mini-batch SGD with momentum from ``params``.

    ``params`` doubles as the round's global model: FedProx pulls toward it
    and SCAFFOLD uses it in the control-variate update.
    """
    strategy = Strategy(strategy)
    n = X.shape[0]
    if n == 0:
        raise EmptyShard(f"client {client_id} has no samples")
    lr = cfg.round_lr(round_idx)
    rng = client_rng(cfg.seed, round_idx, client_id)
    w_global = params.vector
    w = w_global.copy()
    buf = np.zeros_like(w)
    if strategy is Strategy.SCAFFOLD:
        c_global = np.zeros_like(w) if c_global is None else c_global
        c_local = np.zeros_like(w) if c_local is None else c_local
        correction = c_global - c_local

    losses = []
    steps = 0
    model = params
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            if max_steps is not None and steps >= max_steps:
                break
            batch = order[start:start + cfg.batch_size]
            model = params.with_vector(w)
            loss, g = loss_and_grad(model, X[batch], y[batch])
            if strategy is Strategy.FEDPROX and cfg.prox_mu:
                g = g + cfg.prox_mu * (w - w_global)
            elif strategy is Strategy.SCAFFOLD:
                g = g + correction
            buf = cfg.momentum * buf + g
            w = w - lr * buf
            losses.append(loss)
            steps += 1

    new_c = None
    if strategy is Strategy.SCAFFOLD:
        # momentum stretches the effective step to lr / (1 - momentum)
        new_c = c_local - c_global + (w_global - w) * (1.0 - cfg.momentum) / (steps * lr)
    return LocalResult(params.with_vector(w), new_c, float(np.mean(losses)), steps)


def aggregate(client_params, weights) -> ModelParams:
    """Weighted element-wise mean, accumulated in client order."""
    client_params = list(client_params)
    w = np.asarray(weights, dtype=np.float64)
    if len(client_params) == 0 or w.shape != (len(client_params),):
        raise ShapeMismatch("need one weight per client model")
    if (w < 0).any() or w.sum() <= 0:
        raise ValueError("weights must be non-negative with a positive sum")
    first = client_params[0]
    for p in client_params[1:]:
        if (p.d, p.h, p.l) != (first.d, first.h, first.l):
            raise ShapeMismatch("client models have different shapes")
    w = w / w.sum()
    acc = np.zeros_like(first.vector)
    for wi, p in zip(w, client_params):
        acc += wi * p.vector
    return first.with_vector(acc)


@dataclass
class RoundRecord:
    round: int
    accuracy: float
    mean_train_loss: float


@dataclass
class FederationResult:
    params: ModelParams
    log: list = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.log[-1].accuracy


def run_federation(
    plan: PartitionPlan,
    store: SampleStore,
    testset: SampleStore,
    strategy: Strategy,
    cfg: TrainConfig,
    workers: int = 1,
) -> FederationResult:
    """Train a global model over the plan's shards for ``cfg.rounds`` rounds.

    Clients with empty shards sit out (they would carry zero weight anyway).
    Results do not depend on ``workers``: each client draws from its own
    (seed, round, client) stream and aggregation runs in client order.
    """
    strategy = Strategy(strategy)
    if testset.dims != store.dims or testset.n_classes != store.n_classes:
        raise ShapeMismatch("test set must share feature size and class count with the training store")
    shards = []
    for c in plan.clients:
        idx = np.asarray(c.sample_indices, dtype=np.int64)
        if idx.size == 0:
            log.info("client %d has an empty shard and sits out", c.client_id)
            continue
        if idx.max() >= store.n:
            raise ShapeMismatch(f"client {c.client_id} references sample {idx.max()} beyond store size {store.n}")
        shards.append((c.client_id, store.features[idx], store.labels[idx]))
    if not shards:
        raise EmptyShard("every shard in the plan is empty")
    sizes = np.array([s[1].shape[0] for s in shards], dtype=np.float64)

    params = init_params(store.dims, cfg.hidden, store.n_classes, cfg.seed)
    c_global = np.zeros_like(params.vector) if strategy is Strategy.SCAFFOLD else None
    c_locals = {cid: np.zeros_like(params.vector) for cid, _, _ in shards} if c_global is not None else {}
    result = FederationResult(params)

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for r in range(cfg.rounds):
            def work(shard, r=r, params=params, c_global=c_global):
                cid, X, y = shard
                return local_train(params, X, y, cfg, strategy, r, cid, c_global, c_locals.get(cid))

            outs = list(pool.map(work, shards)) if pool else [work(s) for s in shards]
            params = aggregate([o.params for o in outs], sizes)
            if c_global is not None:
                wts = sizes / sizes.sum()
                delta = np.zeros_like(c_global)
                for wi, (cid, _, _), o in zip(wts, shards, outs):
                    delta += wi * (o.c_local - c_locals[cid])
                    c_locals[cid] = o.c_local
                c_global = c_global + delta
            acc = evaluate(params, testset)
            loss = float(np.mean([o.mean_loss for o in outs]))
            result.log.append(RoundRecord(r + 1, acc, loss))
            log.debug("round %d: accuracy %.4f, loss %.4f", r + 1, acc, loss)
    finally:
        if pool:
            pool.shutdown()
    result.params = params
    return result


# files -------------------------------------------------------------------

def roundlog_csv(records) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(ROUNDLOG_HEADER)
    for rec in records:
        w.writerow([rec.round, f"{rec.accuracy:.6f}", f"{rec.mean_train_loss:.6f}"])
    return out.getvalue()


def save_model(params: ModelParams, path) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack("<4I", MODEL_MAGIC, params.d, params.h, params.l))
        f.write(params.vector.astype("<f8").tobytes())


def load_model(path) -> ModelParams:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 16:
        raise ShapeMismatch(f"{path}: too short for a model header")
    magic, d, h, l = struct.unpack("<4I", buf[:16])
    if magic != MODEL_MAGIC:
        raise ShapeMismatch(f"{path}: not a model file (magic 0x{magic:08x})")
    count = param_count(d, h, l)
    if len(buf) != 16 + 8 * count:
        raise ShapeMismatch(f"{path}: expected {count} parameters for a {d}-{h}-{l} MLP")
    return ModelParams(d, h, l, np.frombuffer(buf, dtype="<f8", offset=16).astype(np.float64))
