"""Entropy-balanced (FedSym) client partitioning and desk-scale federated learning benchmarks."""

from .cka import CkaMatrix, cka_matrix, linear_cka
from .dataset import DatasetIndex, SampleStore, index_of, load_idx, synth_classification
from .entropy import (
    GaussianSpec,
    SolverResult,
    counts_from_pmf,
    discrete_gaussian_pmf,
    entropy_balance,
    shannon_entropy,
    sigma_lower_bound,
    solve_sigma,
)
from .flsim import ModelParams, Strategy, TrainConfig, aggregate, evaluate, forward, run_federation
from .partition import (
    PartitionPlan,
    alpha_sweep,
    dirichlet_partition,
    fedsym_partition,
    heterogeneity_report,
    quantity_label_partition,
    rotate_counts,
)

__version__ = "0.1.0"
