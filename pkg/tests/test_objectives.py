import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from containalloc.model import AllocationPlan, Scenario, build_two_rack_topology
from containalloc.objectives import (
    FitnessTuple,
    cluster_balance,
    evaluate,
    is_feasible,
    network_distance,
    sov,
    system_failure,
    threshold_distance,
)

import oracles
from oracles import make_scenario

TOL = 1e-9


# --- threshold distance -------------------------------------------------------

def test_threshold_exact_match_is_zero():
    sc = make_scenario([((), 2.0, 5.0, 10.0, 0.0)], caps=[100])
    assert threshold_distance(AllocationPlan.of([[0]]), sc) == pytest.approx(0.0, abs=TOL)


@pytest.mark.parametrize("scale,expected", [(1, 7.38), (2, 21.31)])
def test_threshold_front_end(scale, expected):
    sc = make_scenario([((), 15.1, 3.8, 50.0, 0.003)], caps=[100, 100])
    plan = AllocationPlan.of([[0] * scale])
    assert threshold_distance(plan, sc) == pytest.approx(expected, abs=TOL)


def test_threshold_is_sum_of_terms():
    rows = [((), 15.1, 3.8, 50.0, 0.0), ((), 3.2, 0.1, 1.0, 0.0)]
    sc = make_scenario(rows, caps=[100])
    both = threshold_distance(AllocationPlan.of([[0], [0, 0]]), sc)
    first = threshold_distance(AllocationPlan.of([[0]]), make_scenario(rows[:1], caps=[100]))
    second = threshold_distance(AllocationPlan.of([[0, 0]]), make_scenario(rows[1:], caps=[100]))
    assert both == pytest.approx(first + second, abs=TOL)


# --- cluster balance ----------------------------------------------------------

def test_balance_uniform_usage_is_zero():
    sc = make_scenario([((), 5.0, 1.0, 1.0, 0.0), ((), 10.0, 1.0, 1.0, 0.0)], caps=[10, 20])
    assert cluster_balance(AllocationPlan.of([[0], [1]]), sc) == pytest.approx(0.0, abs=TOL)


def test_balance_population_std():
    sc = make_scenario([((), 2.0, 1.0, 1.0, 0.0), ((), 4.0, 1.0, 1.0, 0.0)], caps=[10, 10, 10])
    assert cluster_balance(AllocationPlan.of([[0], [1]]), sc) == pytest.approx(0.1, abs=TOL)


def test_balance_ignores_unused_machines():
    topo = build_two_rack_topology(400, [100, 200, 400, 800], 0.025, 1.0, 4.0)
    sc = make_scenario([((), 2.0, 1.0, 1.0, 0.0)] * 3, caps=[m.cap for m in topo.machines], dist=topo.dist)
    assert cluster_balance(AllocationPlan.of([[7], [7, 7], [7]]), sc) == pytest.approx(0.0, abs=TOL)


# --- system failure -----------------------------------------------------------

def test_failure_perfect_components():
    sc = make_scenario([((), 1.0, 1.0, 1.0, 0.0)], caps=[10], machine_fail=0.0)
    assert system_failure(AllocationPlan.of([[0]]), sc) == pytest.approx(0.0, abs=TOL)


def test_failure_colocated_replicas():
    sc = make_scenario([((), 3.2, 26.3, 80.0, 0.04)], caps=[800, 800], machine_fail=0.025)
    assert system_failure(AllocationPlan.of([[0, 0]]), sc) == pytest.approx(0.0266, abs=TOL)


def test_failure_spread_replicas():
    sc = make_scenario([((), 3.2, 26.3, 80.0, 0.04)], caps=[800, 800], machine_fail=0.025)
    assert system_failure(AllocationPlan.of([[0, 1]]), sc) == pytest.approx(0.004225, abs=TOL)


@given(n=st.integers(1, 8), fail=st.floats(0.0, 1.0))
def test_failure_non_increasing_with_extra_local_replica(n, fail):
    sc = make_scenario([((), 1.0, 1.0, 1.0, fail)], caps=[1e9, 1e9], machine_fail=0.025)
    assert system_failure(AllocationPlan.of([[0] * (n + 1)]), sc) <= system_failure(
        AllocationPlan.of([[0] * n]), sc
    )


# --- network distance ---------------------------------------------------------

def _consumer_provider(caps, dist):
    return make_scenario([({1}, 1.0, 1.0, 1.0, 0.0), ((), 1.0, 1.0, 1.0, 0.0)], caps=caps, dist=dist)


def test_network_colocated_is_zero():
    topo = build_two_rack_topology(4, [100], 0.0, 1.0, 4.0)
    sc = _consumer_provider([100] * 4, topo.dist)
    assert network_distance(AllocationPlan.of([[0], [0]]), sc) == pytest.approx(0.0, abs=TOL)


def test_network_provider_across_racks():
    topo = build_two_rack_topology(4, [100], 0.0, 1.0, 4.0)
    sc = _consumer_provider([100] * 4, topo.dist)
    # consumer on 0 (rack 0), provider on 1 (rack 0) and 2 (rack 1)
    assert network_distance(AllocationPlan.of([[0], [1, 2]]), sc) == pytest.approx(2.5, abs=TOL)


def test_network_service_without_providers_contributes_zero():
    sc = make_scenario([((), 1.0, 1.0, 1.0, 0.0), ((), 1.0, 1.0, 1.0, 0.0)], caps=[100, 100])
    assert network_distance(AllocationPlan.of([[0], [1]]), sc) == 0.0


def test_network_large_plans_use_the_same_value():
    topo = build_two_rack_topology(300, [800], 0.0, 1.0, 4.0)
    sc = _consumer_provider([800] * 300, topo.dist)
    rng = np.random.default_rng(3)
    plan = AllocationPlan.of([rng.integers(0, 300, 180).tolist(), rng.integers(0, 300, 150).tolist()])
    assert network_distance(plan, sc) == pytest.approx(oracles.network(plan, sc), abs=TOL)


def test_network_invariant_under_relabeling_within_rack():
    topo = build_two_rack_topology(6, [100], 0.0, 1.0, 4.0)
    sc = _consumer_provider([100] * 6, topo.dist)
    plan = AllocationPlan.of([[0, 3], [1, 4, 4]])
    swapped = {0: 2, 2: 0, 1: 1, 3: 5, 5: 3, 4: 4}
    relabeled = AllocationPlan.of([[swapped[m] for m in lst] for lst in plan.alloc])
    assert network_distance(relabeled, sc) == pytest.approx(network_distance(plan, sc), abs=TOL)


# --- feasibility and evaluation ----------------------------------------------

def test_feasible_under_capacity():
    sc = make_scenario([((), 99.9, 1.0, 1.0, 0.0)], caps=[100])
    assert is_feasible(AllocationPlan.of([[0]]), sc)


def test_feasible_is_strict_at_capacity():
    sc = make_scenario([((), 100.0, 1.0, 1.0, 0.0)], caps=[100])
    assert not is_feasible(AllocationPlan.of([[0]]), sc)


def test_feasible_requires_every_machine():
    sc = make_scenario([((), 50.0, 1.0, 1.0, 0.0), ((), 150.0, 1.0, 1.0, 0.0)], caps=[100, 100])
    assert not is_feasible(AllocationPlan.of([[0], [1]]), sc)


def test_evaluate_infeasible_is_all_infinite():
    sc = make_scenario([((), 100.0, 1.0, 1.0, 0.0)], caps=[100])
    fit = evaluate(AllocationPlan.of([[0]]), sc)
    assert fit == FitnessTuple(math.inf, math.inf, math.inf, math.inf, False)


def test_evaluate_feasible_matches_components():
    topo = build_two_rack_topology(4, [100, 800], 0.025, 1.0, 4.0)
    sc = make_scenario(
        [({1}, 3.0, 2.0, 4.0, 0.02), ((), 5.0, 1.0, 3.0, 0.04)],
        caps=[m.cap for m in topo.machines], dist=topo.dist, machine_fail=0.025,
    )
    plan = AllocationPlan.of([[0, 3], [3, 2, 2]])
    fit = evaluate(plan, sc)
    assert fit.feasible
    assert fit.values == (
        threshold_distance(plan, sc),
        cluster_balance(plan, sc),
        system_failure(plan, sc),
        network_distance(plan, sc),
    )


def test_evaluate_empty_scenario():
    sc = Scenario((), build_two_rack_topology(2, [100], 0.0, 1.0, 4.0))
    assert evaluate(AllocationPlan(()), sc) == FitnessTuple(0.0, 0.0, 0.0, 0.0, True)


# --- SOV -----------------------------------------------------------------------

MINS, MAXS = (1.0, 0.1, 0.0, 2.0), (3.0, 0.5, 0.2, 10.0)


def test_sov_at_minima():
    assert sov(FitnessTuple(*MINS), MINS, MAXS) == pytest.approx(0.0, abs=TOL)


def test_sov_at_maxima():
    assert sov(FitnessTuple(*MAXS), MINS, MAXS) == pytest.approx(1.0, abs=TOL)


def test_sov_half():
    fit = FitnessTuple(MINS[0], MAXS[1], MINS[2], MAXS[3])
    assert sov(fit, MINS, MAXS) == pytest.approx(0.5, abs=TOL)


def test_sov_degenerate_range_contributes_zero():
    fit = FitnessTuple(5.0, 0.5, 0.2, 10.0)
    assert sov(fit, (5.0, 0.1, 0.0, 2.0), (5.0, 0.5, 0.2, 10.0)) == pytest.approx(0.75, abs=TOL)


def test_sov_rejects_infeasible():
    with pytest.raises(ValueError):
        sov(FitnessTuple.infeasible(), MINS, MAXS)


# --- brute-force evaluator agreement ----------------------------------------------

@st.composite
def tiny_instances(draw, discrete_caps=False):
    n_ms = draw(st.integers(1, 3))
    n_pm = draw(st.integers(1, 4))
    rows = []
    for i in range(n_ms):
        providers = draw(st.sets(st.integers(0, n_ms - 1).filter(lambda p, i=i: p != i)))
        rows.append((
            providers,
            draw(st.floats(0.0, 10.0)),
            draw(st.floats(0.0, 10.0)),
            draw(st.floats(0.5, 50.0)),
            draw(st.floats(0.0, 1.0)),
        ))
    cap = st.sampled_from([100.0, 800.0]) if discrete_caps else st.floats(1.0, 200.0)
    caps = draw(st.lists(cap, min_size=n_pm, max_size=n_pm))
    fails = draw(st.lists(st.floats(0.0, 0.1), min_size=n_pm, max_size=n_pm))
    upper = draw(st.lists(st.floats(0.0, 5.0), min_size=n_pm * n_pm, max_size=n_pm * n_pm))
    d = np.array(upper).reshape(n_pm, n_pm)
    d = np.triu(d, 1)
    d = d + d.T
    sc = make_scenario(rows, caps=caps, dist=d, machine_fail=fails, ureq=draw(st.floats(0.5, 2.0)))
    plan = AllocationPlan.of(
        [draw(st.lists(st.integers(0, n_pm - 1), min_size=1, max_size=2)) for _ in range(n_ms)]
    )
    return sc, plan


@settings(max_examples=300, deadline=None)
@given(tiny_instances())
def test_objectives_match_container_enumeration(case):
    sc, plan = case
    fit = evaluate(plan, sc)
    assert fit.feasible == oracles.feasible(plan, sc)
    assert threshold_distance(plan, sc) == pytest.approx(oracles.threshold(plan, sc), abs=TOL)
    assert cluster_balance(plan, sc) == pytest.approx(oracles.balance(plan, sc), abs=TOL)
    assert system_failure(plan, sc) == pytest.approx(oracles.failure(plan, sc), abs=TOL)
    assert network_distance(plan, sc) == pytest.approx(oracles.network(plan, sc), abs=TOL)
    if fit.feasible:
        assert all(v >= 0 for v in fit.values)


@settings(max_examples=100, deadline=None)
@given(tiny_instances(discrete_caps=True), st.randoms(use_true_random=False))
def test_balance_invariant_under_equal_capacity_permutation(case, rnd):
    sc, plan = case
    caps = [m.cap for m in sc.topology.machines]
    # shuffle machine ids within each capacity class
    perm = list(range(len(caps)))
    for c in set(caps):
        ids = [m for m in perm if caps[m] == c]
        shuffled = ids[:]
        rnd.shuffle(shuffled)
        for a, b in zip(ids, shuffled):
            perm[a] = b
    permuted = AllocationPlan.of([[perm[m] for m in lst] for lst in plan.alloc])
    assert cluster_balance(permuted, sc) == pytest.approx(cluster_balance(plan, sc), abs=TOL)
