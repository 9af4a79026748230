"""Client partitioners: FedSym (entropy-controlled, rotated), Dirichlet and quantity-based label skew."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import DatasetIndex
from .entropy import entropy_balance, largest_remainder, solve_sigma
from .errors import PartitionInfeasible

log = logging.getLogger(__name__)

FEDSYM = "FedSym"
DIRICHLET = "Dirichlet"
QUANTITY = "QuantityLabel"
METHODS = (FEDSYM, DIRICHLET, QUANTITY)


@dataclass
class ClientShard:
    client_id: int
    class_counts: np.ndarray
    sample_indices: np.ndarray
    beta: float
    empty: bool = False


@dataclass
class PartitionPlan:
    method: str
    params: dict
    seed: int
    clients: list = field(default_factory=list)
    s_per_client: int | None = None

    @property
    def k(self) -> int:
        return len(self.clients)

    def shard_sizes(self) -> np.ndarray:
        return np.array([len(c.sample_indices) for c in self.clients], dtype=np.int64)


@dataclass(frozen=True)
class HeterogeneityReport:
    per_client_beta: np.ndarray
    min: float
    max: float
    mean: float
    std: float


def _shard(client_id: int, counts: np.ndarray, indices: np.ndarray) -> ClientShard:
    counts = np.asarray(counts, dtype=np.int64)
    if counts.sum() == 0:
        log.warning("client %d received no samples; reporting beta = 0", client_id)
        return ClientShard(client_id, counts, indices, 0.0, empty=True)
    return ClientShard(client_id, counts, indices, entropy_balance(counts))


def _deal(index: DatasetIndex, per_client_counts: np.ndarray, rng: np.random.Generator) -> list:
    """Draw each class's samples without replacement, client 0 first.

    ``per_client_counts`` is (k, l). Every class is shuffled once with ``rng``
    (classes in ascending order) and its indices are consumed in order.
    """
    k, l = per_client_counts.shape
    chunks = [[] for _ in range(k)]
    for c in range(l):
        pool = rng.permutation(index.by_class[c])
        ends = np.cumsum(per_client_counts[:, c])
        if ends[-1] > pool.size:
            raise PartitionInfeasible(c, int(ends[-1]), int(pool.size))
        starts = ends - per_client_counts[:, c]
        for j in range(k):
            chunks[j].append(pool[starts[j]:ends[j]])
    return [
        _shard(j, per_client_counts[j], np.sort(np.concatenate(chunks[j])).astype(np.int64))
        for j in range(k)
    ]


# FedSym ------------------------------------------------------------------

def rotate_counts(counts, offset: int) -> np.ndarray:
    """Right rotation: ``out[i] = counts[(i - offset) % l]``."""
    if offset < 0:
        raise ValueError(f"offset must be non-negative, got {offset}")
    return np.roll(np.asarray(counts), offset)


def fedsym_demand(counts, k: int) -> np.ndarray:
    """Per-class sample totals needed to give k clients rotated copies of ``counts``."""
    counts = np.asarray(counts, dtype=np.int64)
    demand = np.zeros_like(counts)
    for j in range(k):
        demand += rotate_counts(counts, j % counts.size)
    return demand


def _trim(S: int, k: int, l: int) -> int:
    while S > 0 and (k * S) % l:
        S -= 1
    return S


def fedsym_partition(
    index: DatasetIndex,
    k: int,
    beta: float,
    eps: float = 1e-3,
    seed: int = 0,
    s_per_client: int | None = None,
) -> PartitionPlan:
    """Give every client a rotation of one count vector with entropy balance ``beta``.

    Without ``s_per_client`` the per-client size starts at ``n // k`` and is
    lowered until ``l`` divides ``k * S`` and every class can cover its
    demand. An explicit ``s_per_client`` is used as-is and raises
    PartitionInfeasible when some class runs short.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    l = index.l
    avail = index.class_sizes()

    if s_per_client is not None:
        if s_per_client < 1:
            raise ValueError(f"s_per_client must be positive, got {s_per_client}")
        S = s_per_client
        result = solve_sigma(beta, l, S, eps)
        demand = fedsym_demand(result.counts, k)
    else:
        S = _trim(index.n // k, k, l)
        if S < 1:
            raise PartitionInfeasible(0, k, int(avail[0]))
        while True:
            result = solve_sigma(beta, l, S, eps)
            demand = fedsym_demand(result.counts, k)
            if (demand <= avail).all():
                break
            # demand scales roughly linearly in S; jump close to the feasible size
            ratio = float(np.min(avail[demand > 0] / demand[demand > 0]))
            smaller = _trim(min(int(S * ratio), S - 1), k, l)
            if smaller < 1:
                break
            S = smaller

    short = np.flatnonzero(demand > avail)
    if short.size:
        c = int(short[0])
        raise PartitionInfeasible(c, int(demand[c]), int(avail[c]))

    per_client = np.stack([rotate_counts(result.counts, j % l) for j in range(k)])
    clients = _deal(index, per_client, np.random.default_rng(seed))
    params = {
        "beta": beta,
        "eps": eps,
        "sigma": result.sigma,
        "achieved_beta": result.achieved_beta,
        "solver_iterations": result.iterations,
    }
    return PartitionPlan(FEDSYM, params, seed, clients, s_per_client=S)


# baselines ---------------------------------------------------------------

def dirichlet_partition(index: DatasetIndex, k: int, alpha: float, seed: int = 0) -> PartitionPlan:
    """Per-class Dirichlet(alpha) split of every sample across k clients."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    sizes = index.class_sizes()
    per_client = np.zeros((k, index.l), dtype=np.int64)
    for c in range(index.l):
        p = rng.dirichlet(np.full(k, float(alpha)))
        if not np.isfinite(p).all() or p.sum() <= 0:
            p = np.full(k, 1.0 / k)
        per_client[:, c] = largest_remainder(p, int(sizes[c]))
    clients = _deal(index, per_client, rng)
    return PartitionPlan(DIRICHLET, {"alpha": alpha}, seed, clients)


def quantity_label_partition(index: DatasetIndex, k: int, labels_per_client: int, seed: int = 0) -> PartitionPlan:
    """Each client holds ``labels_per_client`` distinct labels; holders split a label evenly.

    Labels are dealt round-robin over a seeded shuffle, so every label has a
    holder whenever ``k * labels_per_client >= l``.
    """
    l = index.l
    if not 1 <= labels_per_client <= l:
        raise ValueError(f"labels_per_client must lie in [1, {l}], got {labels_per_client}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(l)
    holders = [[] for _ in range(l)]
    for j in range(k):
        for t in range(labels_per_client):
            holders[order[(j * labels_per_client + t) % l]].append(j)
    per_client = np.zeros((k, l), dtype=np.int64)
    sizes = index.class_sizes()
    for c in range(l):
        if holders[c]:
            per_client[holders[c], c] = largest_remainder(np.ones(len(holders[c])), int(sizes[c]))
    clients = _deal(index, per_client, rng)
    return PartitionPlan(QUANTITY, {"labels_per_client": labels_per_client}, seed, clients)


# reporting ---------------------------------------------------------------

def heterogeneity_report(plan: PartitionPlan) -> HeterogeneityReport:
    betas = np.array([c.beta for c in plan.clients], dtype=np.float64)
    return HeterogeneityReport(betas, float(betas.min()), float(betas.max()), float(betas.mean()), float(betas.std()))


def alpha_sweep(index: DatasetIndex, k: int, alphas, seed: int = 0) -> list:
    """Mean client entropy balance of one Dirichlet partition per alpha."""
    return [(a, heterogeneity_report(dirichlet_partition(index, k, a, seed)).mean) for a in alphas]


def beta_sweep(index: DatasetIndex, k: int, betas, seed: int = 0, eps: float = 1e-3) -> list:
    return [(b, heterogeneity_report(fedsym_partition(index, k, b, eps, seed)).mean) for b in betas]


def validate_plan(plan: PartitionPlan, labels) -> None:
    """Check disjointness and that every shard's counts match its labels. Raises ValueError."""
    labels = np.asarray(labels)
    seen = np.zeros(labels.shape[0], dtype=bool)
    for shard in plan.clients:
        idx = np.asarray(shard.sample_indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= labels.shape[0]):
            raise ValueError(f"client {shard.client_id}: sample index out of range")
        if np.unique(idx).size != idx.size or seen[idx].any():
            raise ValueError(f"client {shard.client_id}: sample assigned twice")
        seen[idx] = True
        hist = np.bincount(labels[idx], minlength=len(shard.class_counts))
        if not np.array_equal(hist, shard.class_counts):
            raise ValueError(f"client {shard.client_id}: class_counts do not match sample labels")


# serialization -----------------------------------------------------------

def plan_to_dict(plan: PartitionPlan) -> dict:
    return {
        "method": plan.method,
        "params": plan.params,
        "seed": plan.seed,
        "s_per_client": plan.s_per_client,
        "clients": [
            {
                "id": c.client_id,
                "class_counts": [int(x) for x in c.class_counts],
                "beta": c.beta,
                "sample_indices": [int(x) for x in c.sample_indices],
            }
            for c in plan.clients
        ],
    }


def plan_to_json(plan: PartitionPlan) -> str:
    return json.dumps(plan_to_dict(plan)) + "\n"


def plan_from_dict(doc: dict) -> PartitionPlan:
    if doc.get("method") not in METHODS:
        raise ValueError(f"unknown partition method {doc.get('method')!r}")
    clients = []
    for c in doc["clients"]:
        counts = np.asarray(c["class_counts"], dtype=np.int64)
        clients.append(
            ClientShard(
                int(c["id"]),
                counts,
                np.asarray(c["sample_indices"], dtype=np.int64),
                float(c["beta"]),
                empty=bool(counts.sum() == 0),
            )
        )
    return PartitionPlan(doc["method"], dict(doc["params"]), int(doc["seed"]), clients, doc.get("s_per_client"))


def plan_from_json(text: str) -> PartitionPlan:
    return plan_from_dict(json.loads(text))
