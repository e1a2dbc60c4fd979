import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from llmo.errors import BoundsError, StructuralError
from llmo.population import (
    ActionVector,
    BestRecord,
    Box,
    MemoryBuffer,
    Population,
    SamplerKind,
    elitist_sample,
    lifo_sample,
    update_best,
    update_memory,
)

BOX1 = Box.uniform(1)


def pop(rewards, tag=0.0):
    r = np.asarray(rewards, dtype=float)
    X = (np.arange(r.size) + tag * 10 + 1)[:, None] / 100.0
    return Population(X, r, BOX1)


def best(r):
    return BestRecord(ActionVector(np.array([0.0]), BOX1), r, 0)


def test_action_vector_rejects_out_of_bounds():
    with pytest.raises(BoundsError):
        ActionVector(np.array([1.5]), BOX1)
    with pytest.raises(BoundsError):
        Population(np.array([[-0.1]]), None, BOX1)


def test_elitist_top_two():
    mem = MemoryBuffer(pop([0.5, 0.9]), pop([0.1, 0.7], tag=1))
    out = elitist_sample(mem, 2)
    assert out.rewards.tolist() == [0.9, 0.7]


def test_elitist_ties_keep_canonical_order():
    new, ex = pop([0.4, 0.4]), pop([0.4, 0.4], tag=1)
    out = elitist_sample(MemoryBuffer(new, ex), 2)
    assert np.array_equal(out.actions, new.actions)


def test_elitist_dominating_new_block_returns_it_sorted():
    new, ex = pop([0.6, 0.9, 0.8]), pop([0.1, 0.2, 0.3], tag=1)
    out = elitist_sample(MemoryBuffer(new, ex), 3)
    order = np.argsort(-new.rewards)
    assert np.array_equal(out.actions, new.actions[order])


def test_elitist_needs_enough_rows():
    with pytest.raises(StructuralError):
        elitist_sample(MemoryBuffer(pop([0.1]), Population.empty(1, BOX1)), 2)


def test_lifo_single_agent_identity():
    new = pop([0.1, 0.8])
    assert lifo_sample(MemoryBuffer(new, pop([0.9, 0.95], tag=1)), 2) is new


def test_lifo_ensemble_top_of_recent_block():
    new = pop([0.1, 0.8, 0.3, 0.9])
    out = lifo_sample(MemoryBuffer(new, pop([5.0, 6.0], tag=1)), 2)
    assert out.rewards.tolist() == [0.9, 0.8]


def test_lifo_ignores_examples_and_rejects_empty():
    new = pop([0.1, 0.2])
    out = lifo_sample(MemoryBuffer(new, pop([99.0, 98.0], tag=1)), 2)
    assert 99.0 not in out.rewards
    with pytest.raises(StructuralError):
        lifo_sample(MemoryBuffer(Population.empty(1, BOX1), pop([1.0])), 1)


@pytest.mark.parametrize("incumbent,new_max,expected", [(0.7, 0.9, 0.9), (0.7, 0.7, 0.7), (0.7, 0.2, 0.7)])
def test_update_best(incumbent, new_max, expected):
    b = update_best(best(incumbent), pop([0.0, new_max]), 3)
    assert b.reward == expected
    assert b.iteration_found == (3 if expected != incumbent else 0)


def test_update_memory_overwrites():
    a, b, c = pop([0.1]), pop([0.2], 1), pop([0.3, 0.4, 0.5, 0.6], 2)
    m = update_memory(a, b)
    assert m.new_block is a and m.example_block is b
    m = update_memory(c, a)
    assert m.new_block is c and m.n_rows == 5
    with pytest.raises(StructuralError):
        update_memory(Population(np.array([[0.1]]), None, BOX1), a)


def test_sampler_parse():
    assert SamplerKind.parse("LIFO") is SamplerKind.LIFO
    assert SamplerKind.parse(SamplerKind.ELITIST) is SamplerKind.ELITIST


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=12), st.integers(1, 6))
def test_elitist_is_top_p_of_sorted_oracle(rewards, P):
    half = len(rewards) // 2
    new, ex = pop(rewards[:half]), pop(rewards[half:], 1)
    if len(rewards) < P:
        return
    out = elitist_sample(MemoryBuffer(new, ex), P)
    assert sorted(out.rewards, reverse=True) == out.rewards.tolist()
    assert out.rewards.tolist() == sorted(rewards, reverse=True)[:P]
