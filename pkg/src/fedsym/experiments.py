"""The standard desk-scale benchmark: FedSym vs Dirichlet plans over a heterogeneity sweep."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import SampleStore, index_of, synth_classification
from .flsim import FederationResult, Strategy, TrainConfig, run_federation
from .partition import dirichlet_partition, fedsym_partition

HETEROGENEITY = tuple(round(0.1 * i, 1) for i in range(1, 11))

# l=10 classes, d=16 features, separation 4, 500 train / 200 test samples per class
STANDARD = {"l": 10, "n": 500, "d": 16, "sep": 4.0, "k": 10, "n_test": 200}


def standard_data(seed: int = 0) -> tuple[SampleStore, SampleStore]:
    s = STANDARD
    train = synth_classification(s["l"], s["n"], s["d"], s["sep"], seed)
    test = synth_classification(s["l"], s["n_test"], s["d"], s["sep"], seed + 1000)
    return train, test


@dataclass
class Benchmark:
    strategy: Strategy
    indices: tuple
    fedsym: list = field(default_factory=list)
    dirichlet: list = field(default_factory=list)

    def final_accuracies(self, family: str) -> np.ndarray:
        return np.array([r.final_accuracy for r in getattr(self, family)])


def run_benchmark(
    strategy: Strategy,
    cfg: TrainConfig | None = None,
    indices=HETEROGENEITY,
    seed: int = 0,
    data: tuple[SampleStore, SampleStore] | None = None,
) -> Benchmark:
    """Train one global model per heterogeneity index for both partitioners."""
    cfg = cfg or TrainConfig(seed=seed)
    train, test = data or standard_data(seed)
    index = index_of(train)
    k = STANDARD["k"]
    out = Benchmark(Strategy(strategy), tuple(indices))
    for x in indices:
        plan = fedsym_partition(index, k, x, seed=seed)
        out.fedsym.append(run_federation(plan, train, test, strategy, cfg))
        plan = dirichlet_partition(index, k, x, seed=seed)
        out.dirichlet.append(run_federation(plan, train, test, strategy, cfg))
    return out


def final_params(results: list[FederationResult]) -> list:
    return [r.params for r in results]
