import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedsym.dataset import index_labels
from fedsym.entropy import entropy_balance, solve_sigma
from fedsym.errors import PartitionInfeasible
from fedsym.partition import (
    ClientShard,
    PartitionPlan,
    alpha_sweep,
    dirichlet_partition,
    fedsym_demand,
    fedsym_partition,
    heterogeneity_report,
    plan_from_json,
    plan_to_json,
    quantity_label_partition,
    rotate_counts,
    validate_plan,
)


def _check_plan(plan, index):
    """Exhaustive disjointness and label-histogram consistency."""
    validate_plan(plan, index.labels)
    owner = {}
    for shard in plan.clients:
        for i in shard.sample_indices.tolist():
            assert i not in owner
            owner[i] = shard.client_id
        hist = np.bincount(index.labels[shard.sample_indices], minlength=index.l)
        assert hist.tolist() == shard.class_counts.tolist()
        if not shard.empty:
            assert abs(shard.beta - entropy_balance(shard.class_counts)) <= 1e-12


# rotation ----------------------------------------------------------------

def test_rotate_right():
    assert rotate_counts(["a", "b", "c"], 1).tolist() == ["c", "a", "b"]


def test_rotate_full_cycle():
    c = [4, 8, 15, 16, 23, 42]
    assert rotate_counts(c, 6).tolist() == c


@given(st.lists(st.integers(0, 500), min_size=2, max_size=20).filter(lambda c: sum(c) > 0), st.integers(0, 100))
def test_rotation_preserves_balance_exactly(counts, r):
    assert entropy_balance(rotate_counts(counts, r)) == entropy_balance(counts)


def _demand_oracle(counts, k):
    l = len(counts)
    demand = [0] * l
    for j in range(k):
        for i in range(l):
            demand[i] += counts[(i - j % l) % l]
    return demand


def test_demand_k_equals_l():
    counts = solve_sigma(0.7, 10, 5000).counts
    assert fedsym_demand(counts, 10).tolist() == [5000] * 10


def test_demand_single_client():
    counts = [1, 2, 3, 4]
    assert fedsym_demand(counts, 1).tolist() == counts


@pytest.mark.parametrize("k", [3, 7, 20, 23])
def test_demand_matches_brute_force(k):
    counts = solve_sigma(0.4, 10, 1000).counts.tolist()
    assert fedsym_demand(counts, k).tolist() == _demand_oracle(counts, k)


# FedSym ------------------------------------------------------------------

def test_fedsym_equal_balance_on_big_index(big_index):
    plan = fedsym_partition(big_index, 10, 0.7, seed=1)
    rep = heterogeneity_report(plan)
    assert all(abs(b - 0.7) < 1e-3 for b in rep.per_client_beta)
    assert rep.std <= 1e-9
    assert plan.s_per_client == 5000
    _check_plan(plan, big_index)


def test_fedsym_uniform(big_index):
    plan = fedsym_partition(big_index, 10, 1.0, seed=0)
    assert all(c.class_counts.tolist() == [500] * 10 for c in plan.clients)


def test_fedsym_shards_are_rotations(index):
    plan = fedsym_partition(index, 10, 0.4, seed=3)
    base = plan.clients[0].class_counts
    for j, c in enumerate(plan.clients):
        assert c.class_counts.tolist() == rotate_counts(base, j).tolist()
        assert c.beta == plan.clients[0].beta


def test_fedsym_utilization(index):
    plan = fedsym_partition(index, 10, 0.3, seed=0)
    total = sum(len(c.sample_indices) for c in plan.clients)
    assert total == 10 * plan.s_per_client <= index.n
    assert (10 * plan.s_per_client) % index.l == 0


def test_fedsym_more_clients_than_classes(index):
    plan = fedsym_partition(index, 15, 0.5, seed=0)
    assert plan.k == 15
    assert plan.clients[12].class_counts.tolist() == rotate_counts(plan.clients[0].class_counts, 2).tolist()
    _check_plan(plan, index)


def test_fedsym_fewer_clients_shrinks_s(index):
    plan = fedsym_partition(index, 3, 0.2, seed=0)
    assert plan.s_per_client < index.n // 3
    _check_plan(plan, index)


def _skewed_index():
    sizes = [5000] * 10
    sizes[4] = 100
    return index_labels(np.repeat(np.arange(10), sizes), 10)


def test_fedsym_infeasible_peak_class():
    ix = _skewed_index()
    counts = solve_sigma(0.1, 10, 4500).counts
    assert fedsym_demand(counts, 10)[4] > 100
    with pytest.raises(PartitionInfeasible) as exc:
        fedsym_partition(ix, 10, 0.1, s_per_client=4500)
    assert exc.value.cls == 4 and exc.value.available == 100


def test_fedsym_auto_size_fits_skewed_index():
    ix = _skewed_index()
    plan = fedsym_partition(ix, 10, 0.1, seed=0)
    assert plan.s_per_client <= 100
    _check_plan(plan, ix)


def test_fedsym_is_deterministic(index):
    a = plan_to_json(fedsym_partition(index, 10, 0.6, seed=9))
    b = plan_to_json(fedsym_partition(index, 10, 0.6, seed=9))
    assert a == b
    c = plan_to_json(fedsym_partition(index, 10, 0.6, seed=10))
    assert a != c


# Dirichlet ---------------------------------------------------------------

def test_dirichlet_huge_alpha_is_near_uniform(index):
    rep = heterogeneity_report(dirichlet_partition(index, 10, 1e6, seed=0))
    assert rep.min >= 0.99


def test_dirichlet_small_alpha_is_spread(index):
    wide = 0
    for seed in range(10):
        rep = heterogeneity_report(dirichlet_partition(index, 10, 0.1, seed=seed))
        wide += rep.max - rep.min > 0.2
    assert wide >= 8


def test_dirichlet_full_allocation(index):
    plan = dirichlet_partition(index, 10, 0.3, seed=2)
    totals = np.sum([c.class_counts for c in plan.clients], axis=0)
    assert totals.tolist() == index.class_sizes().tolist()
    _check_plan(plan, index)


def test_dirichlet_empty_shards_flagged():
    ix = index_labels(np.repeat(np.arange(2), 3), 2)
    plan = dirichlet_partition(ix, 20, 0.05, seed=0)
    empties = [c for c in plan.clients if c.empty]
    assert empties and all(c.beta == 0.0 for c in empties)
    _check_plan(plan, ix)


def test_dirichlet_strict_report_ordering(index):
    strict = 0
    for seed in range(10):
        rep = heterogeneity_report(dirichlet_partition(index, 10, 0.5, seed=seed))
        strict += rep.min < rep.mean < rep.max
    assert strict >= 9


# quantity-based ----------------------------------------------------------

def test_quantity_all_labels(index):
    plan = quantity_label_partition(index, 10, 10, seed=0)
    assert all(abs(c.beta - 1.0) < 1e-9 for c in plan.clients)


def test_quantity_one_label_each(index):
    plan = quantity_label_partition(index, 10, 1, seed=0)
    assert all(c.beta == 0.0 for c in plan.clients)
    assert sorted(int(np.flatnonzero(c.class_counts)[0]) for c in plan.clients) == list(range(10))


@pytest.mark.parametrize("seed", range(5))
def test_quantity_two_labels(index, seed):
    plan = quantity_label_partition(index, 10, 2, seed=seed)
    assert all(np.count_nonzero(c.class_counts) == 2 for c in plan.clients)
    _check_plan(plan, index)


def test_quantity_rejects_too_many_labels(index):
    with pytest.raises(ValueError):
        quantity_label_partition(index, 10, 11)


# reports and sweeps ------------------------------------------------------

def test_report_single_client():
    shard = ClientShard(0, np.array([3, 1]), np.arange(4), entropy_balance([3, 1]))
    rep = heterogeneity_report(PartitionPlan("Dirichlet", {"alpha": 1.0}, 0, [shard]))
    assert rep.min == rep.max == rep.mean and rep.std == 0.0


def test_report_uses_population_std():
    shards = [ClientShard(i, np.array(c), np.arange(0), entropy_balance(c)) for i, c in enumerate([[1, 1], [3, 1]])]
    rep = heterogeneity_report(PartitionPlan("Dirichlet", {}, 0, shards))
    b = [1.0, entropy_balance([3, 1])]
    assert rep.std == pytest.approx(abs(b[0] - b[1]) / 2)


def test_alpha_sweep_trend(index):
    rows = alpha_sweep(index, 10, [0.1, 1, 10, 100], seed=0)
    means = [m for _, m in rows]
    assert sum(b >= a for a, b in zip(means, means[1:])) >= 2


def test_alpha_sweep_huge_alpha(index):
    assert alpha_sweep(index, 10, [1e6])[0][1] > 0.99


def test_alpha_sweep_empty(index):
    assert alpha_sweep(index, 10, []) == []


# serialization -----------------------------------------------------------

def test_plan_json_field_order_and_round_trip(index):
    plan = fedsym_partition(index, 10, 0.5, seed=4)
    text = plan_to_json(plan)
    doc = json.loads(text)
    assert list(doc) == ["method", "params", "seed", "s_per_client", "clients"]
    assert list(doc["clients"][0]) == ["id", "class_counts", "beta", "sample_indices"]
    back = plan_from_json(text)
    assert plan_to_json(back) == text
    _check_plan(back, index)
