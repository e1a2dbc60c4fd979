import numpy as np
import pytest

from llmo.agents import ExploringAgent, SyntheticAgent
from llmo.errors import AgentFailure, RewardEvaluationError
from llmo.grid import Grid
from llmo.optimizer import LlmoConfig, RewardCache, run_llmo
from llmo.population import Box, Population, SamplerKind
from llmo.rewards import IfcModel, grid_reward_table, ifc_ee


@pytest.fixture
def ee2():
    model = IfcModel(np.array([[1.0, 0.3], [0.2, 0.8]]))
    return lambda x: float(ifc_ee(x, model))


def test_delta_agent_reaches_optimum_at_t1(ee2):
    grid = Grid.unit(10, 2, 2)
    table = grid_reward_table(ee2, 10, 2)
    a = table.argmax[0]
    target = grid.encode(np.vstack([table.actions[a], table.actions[a]]))
    trace = run_llmo(LlmoConfig(2, Box.uniform(2), levels=10), [SyntheticAgent.delta(grid, target)], ee2, T=3)
    assert trace.best_rewards[0] == table.best
    assert trace.metadata["best_iteration"] in (0, 1)


@pytest.mark.parametrize("seed", range(5))
def test_elitist_best_and_example_floor_are_monotone(ee2, seed):
    cfg = LlmoConfig(3, Box.uniform(2))
    trace = run_llmo(cfg, [ExploringAgent(epsilon=0.3)], ee2, T=40, seed=seed)
    best = trace.best_rewards
    assert np.all(np.diff(best) >= 0)
    floor = [trace.initial_examples.rewards.min()] + [r.examples.rewards.min() for r in trace.records]
    assert np.all(np.diff(floor) >= 0)
    assert best[-1] == max(trace.metadata["initial_best"], max(r.population.rewards.max() for r in trace.records))


def test_lifo_examples_equal_previous_output(ee2):
    trace = run_llmo(LlmoConfig(3, Box.uniform(2)), [ExploringAgent()], ee2, sampler="lifo", T=20)
    for r in trace.records:
        assert r.examples.same_as(r.population)


def test_traces_byte_identical_for_same_seed(ee2):
    def run(seed):
        agents = [ExploringAgent(levels=10), ExploringAgent(levels=10)]
        return run_llmo(LlmoConfig(4, Box.uniform(2), levels=10), agents, ee2, T=30, seed=seed)

    a, b, c = run(11), run(11), run(12)
    assert a.to_csv() == b.to_csv() and a.to_json(True) == b.to_json(True)
    assert a.to_json(True) != c.to_json(True)


class Broken:
    name = "broken"

    def __init__(self, fail_at):
        self.fail_at = set(fail_at)
        self.inner = ExploringAgent()

    def generate(self, examples, ctx):
        if ctx.iteration in self.fail_at:
            raise AgentFailure("down")
        return self.inner.generate(examples, ctx)


def test_failed_iteration_keeps_examples(ee2):
    cfg = LlmoConfig(2, Box.uniform(2), retries=2)
    trace = run_llmo(cfg, [Broken({3})], ee2, T=5)
    r2, r3 = trace.records[1], trace.records[2]
    assert r3.failed and np.isnan(r3.mean_reward) and r3.failures == 3
    assert r3.best_reward == r2.best_reward
    assert r3.examples.same_as(r2.examples)
    assert not trace.records[3].failed
    assert "nan" in trace.to_csv().splitlines()[4]


def test_reward_error_aborts():
    def bad(x):
        raise ValueError("no")

    with pytest.raises(RewardEvaluationError):
        run_llmo(LlmoConfig(2, Box.uniform(1)), [ExploringAgent()], bad, T=2)


def test_reward_cache_counts_distinct_actions():
    calls = []
    cache = RewardCache(lambda x: calls.append(1) or float(x.sum()))
    out = cache(np.array([[0.1, 0.2], [0.1, 0.2], [0.3, 0.3]]))
    assert out.tolist() == pytest.approx([0.3, 0.3, 0.6])
    assert cache.evaluations == 2 == len(calls)


def test_multi_agent_population_has_LP_rows(ee2):
    trace = run_llmo(LlmoConfig(3, Box.uniform(2)), [ExploringAgent()] * 3, ee2, T=2)
    assert len(trace.records[0].population) == 9
    assert trace.metadata["L"] == 3


def test_violation_column(ee2):
    cfg = LlmoConfig(2, Box.uniform(2), violation=lambda x: max(0.0, x.sum() - 1.0))
    trace = run_llmo(cfg, [ExploringAgent()], ee2, T=3)
    v = trace.column("violation")
    expect = [np.mean([max(0.0, x.sum() - 1) for x in r.examples.actions]) for r in trace.records]
    assert np.allclose(v, expect)
