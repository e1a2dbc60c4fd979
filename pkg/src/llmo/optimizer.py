"""The LLMO loop: sample examples, query agents, evaluate, keep the best."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .agents import AgentContext, ensemble_generate
from .errors import AgentFailure, RewardEvaluationError
from .population import (
    ActionVector,
    BestRecord,
    Box,
    MemoryBuffer,
    Population,
    SamplerKind,
    update_best,
    update_memory,
)
from .trace import ExperimentTrace, IterationRecord, config_hash

log = logging.getLogger(__name__)


@dataclass
class LlmoConfig:
    P: int
    box: Box
    levels: int | None = None  # initialise on a grid with this many levels per dimension
    retries: int = 3
    constraint_text: str | None = None
    violation: object = None  # callable x -> float, reported per iteration
    keep_populations: bool = True

    def __post_init__(self):
        if self.P < 1:
            raise ValueError("P must be >= 1")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    def describe(self) -> dict:
        return {
            "P": self.P,
            "x_min": self.box.x_min.tolist(),
            "x_max": self.box.x_max.tolist(),
            "levels": self.levels,
            "retries": self.retries,
            "constraint_text": self.constraint_text,
        }


class RewardCache:
    """Evaluate each distinct action once."""

    def __init__(self, reward_model):
        self.reward_model = reward_model
        self._cache: dict[tuple, float] = {}
        self.evaluations = 0

    def __call__(self, X) -> np.ndarray:
        out = np.empty(len(X))
        for p, x in enumerate(np.asarray(X, dtype=float)):
            key = tuple(x.tolist())
            r = self._cache.get(key)
            if r is None:
                try:
                    r = float(self.reward_model(x))
                except Exception as exc:
                    raise RewardEvaluationError(f"reward model failed at x={x.tolist()}: {exc!r}") from exc
                self._cache[key] = r
                self.evaluations += 1
            out[p] = r
        return out


def initial_population(config: LlmoConfig, rng) -> Population:
    box = config.box
    if config.levels is None:
        X = box.sample(rng, config.P)
    else:
        k = rng.integers(0, config.levels, size=(config.P, box.D))
        X = box.x_min + k * (box.x_max - box.x_min) / (config.levels - 1)
    return Population(X, None, box)


def agent_streams(seed, L):
    """Initialisation stream and one independent stream per agent."""
    children = np.random.SeedSequence(seed).spawn(1 + L)
    return np.random.default_rng(children[0]), [np.random.default_rng(c) for c in children[1:]]


def run_llmo(config: LlmoConfig, agents, reward_model, sampler=SamplerKind.ELITIST, T=100, seed=0,
             metadata=None) -> ExperimentTrace:
    if T < 1:
        raise ValueError("T must be >= 1")
    agents = list(agents)
    if not agents:
        raise ValueError("at least one agent is required")
    sampler = SamplerKind.parse(sampler)
    P, box = config.P, config.box
    init_rng, rngs = agent_streams(seed, len(agents))
    reward = RewardCache(reward_model)
    viol = config.violation

    X0 = initial_population(config, init_rng)
    X0 = X0.with_rewards(reward(X0.actions))
    best = update_best(BestRecord(ActionVector(X0.actions[0], box), -np.inf, 0), X0, 0)
    memory = MemoryBuffer(X0, Population.empty(box.D, box))
    examples = sampler.sample(memory, P)

    meta = {
        "config_hash": config_hash(config.describe()),
        "seed": seed,
        "T": T,
        "L": len(agents),
        "sampler": sampler.value,
        "agents": [getattr(a, "name", type(a).__name__) for a in agents],
        "initial_best": best.reward,
    }
    if metadata:
        meta.update(metadata)
    trace = ExperimentTrace(metadata=meta, initial_examples=examples if config.keep_populations else None)

    for t in range(1, T + 1):
        contexts = [AgentContext(P, box, rngs[l], t, config.constraint_text) for l in range(len(agents))]
        try:
            new, failed = ensemble_generate(agents, examples, contexts, retries=config.retries)
        except AgentFailure as exc:
            # memory and examples are left as they were; the next iteration re-prompts with them
            n_fail = len(getattr(exc, "failures", [])) or 1
            log.warning("iteration %d failed after %d attempts: %s", t, n_fail, exc)
            trace.records.append(IterationRecord(
                t, best.reward, float("nan"), _violation(viol, examples), n_fail, reward.evaluations,
                failed=True,
                examples=examples if config.keep_populations else None,
            ))
            continue
        new = new.with_rewards(reward(new.actions))
        best = update_best(best, new, t)
        memory = update_memory(new, examples)
        examples = sampler.sample(memory, P)
        trace.records.append(IterationRecord(
            t, best.reward, float(np.mean(new.rewards)), _violation(viol, examples), len(failed),
            reward.evaluations,
            population=new if config.keep_populations else None,
            examples=examples if config.keep_populations else None,
        ))

    trace.metadata["best_action"] = best.action.values.tolist()
    trace.metadata["best_iteration"] = best.iteration_found
    trace.metadata["evaluations"] = reward.evaluations
    return trace


def _violation(fn, examples: Population) -> float:
    if fn is None:
        return 0.0
    return float(np.mean([fn(x) for x in examples.actions]))
