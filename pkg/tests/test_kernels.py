import numpy as np
import pytest

from llmo import kernels
from llmo.agents import SyntheticAgent
from llmo.grid import Grid
from llmo.markov import enumerate_and_order
from llmo.optimizer import LlmoConfig, agent_streams, run_llmo
from llmo.population import Box

BACKENDS = kernels.backends()


def problem(seed, levels=3, P=2, D=1, L=2):
    g = Grid.unit(levels, P, D)
    rng = np.random.default_rng(seed)
    r = rng.permutation(g.n_actions).astype(float)
    lams = np.stack([SyntheticAgent.random(g, rng).lam for _ in range(L)])
    return g, r, lams


def test_fallback_always_present():
    assert "python" in BACKENDS and kernels.BACKEND in BACKENDS


@pytest.mark.skipif("cython" not in BACKENDS, reason="extension not built")
@pytest.mark.parametrize("lifo", [False, True])
@pytest.mark.parametrize("L", [1, 2, 3])
def test_backends_agree(lifo, L):
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    g, r, lams = problem(L, L=L)
    A, P = g.n_actions, g.P
    assert np.allclose(py.exact_transition(lams, r, P, A, lifo), cy.exact_transition(lams, r, P, A, lifo),
                       atol=1e-15, rtol=0)
    rng = np.random.default_rng(0)
    new = rng.integers(0, g.n_states, size=(100, L))
    ex = rng.integers(0, g.n_states, size=100)
    assert np.array_equal(py.select_codes(new, ex, r, P, A, lifo), cy.select_codes(new, ex, r, P, A, lifo))
    cdfs = np.cumsum(np.transpose(lams, (0, 2, 1)), axis=2)
    init = rng.integers(0, g.n_states, size=500)
    u = rng.random((20, 500, L))
    assert np.array_equal(py.simulate_chain(cdfs, init, u, r, P, A, lifo),
                          cy.simulate_chain(cdfs, init, u, r, P, A, lifo))


def test_select_codes_ties_prefer_new_rows():
    g = Grid.unit(2, 2, 1)
    r = np.array([1.0, 1.0])
    # new population (action 1, action 1) vs examples (0, 0): all tied -> new rows win
    new = np.array([[g.encode_actions(np.array([1, 1]))]])
    ex = np.array([g.encode_actions(np.array([0, 0]))])
    assert kernels.select_codes(new, ex, r, 2, 2, False)[0] == 3


@pytest.mark.parametrize("sampler", ["elitist", "lifo"])
@pytest.mark.parametrize("L", [1, 2])
def test_optimizer_reproduces_kernel_trajectory(sampler, L):
    g = Grid.unit(4, 2, 1)
    rng = np.random.default_rng(10 + L)
    agents = [SyntheticAgent.random(g, rng) for _ in range(L)]
    reward = np.array([0.1, 0.9, 0.4, 0.6])
    space = enumerate_and_order(g, reward)
    T, seed = 40, 123
    cfg = LlmoConfig(2, Box.uniform(1), levels=4, retries=0)
    trace = run_llmo(cfg, agents, lambda x: reward[int(round(x[0] * 3))], sampler=sampler, T=T, seed=seed)
    codes = trace.example_codes(g)

    _, streams = agent_streams(seed, L)
    u = np.array([[s.random() for s in streams] for _ in range(T)])[:, None, :]
    cdfs = np.stack([a.cdf for a in agents])
    counts = kernels.simulate_chain(cdfs, codes[:1], u, space.action_rewards, 2, 4, sampler == "lifo")
    assert np.array_equal(np.argmax(counts, axis=1), codes)


def test_last_positive():
    cdfs = np.array([[[0.5, 1.0, 1.0], [0.0, 0.0, 1.0]]])
    assert kernels.last_positive(cdfs).tolist() == [[1, 2]]


def test_fallback_selected_by_environment():
    import os
    import subprocess
    import sys

    code = "from llmo import kernels; print(kernels.BACKEND, kernels.exact_transition.__module__)"
    env = {**os.environ, "LLMO_KERNELS": "python"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    assert out.split() == ["python", "llmo._kernels_py"]
