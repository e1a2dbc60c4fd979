"""Agents that map prompted examples to a new population.

Three families share one calling convention, ``agent.generate(examples, ctx)``:
a remote chat-completions model, synthetic agents whose transition law is known
exactly, and uniform random search.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import requests

from .errors import AgentFailure, ApiFailure, DegenerateError, ParseError, TransportFailure, ValidationError
from .grid import Grid
from .population import Box, Population
from .prompt import parse_population, render_prompt

log = logging.getLogger(__name__)


@dataclass
class AgentContext:
    P: int
    box: Box
    rng: np.random.Generator
    iteration: int = 0
    constraint_text: str | None = None


# --- sampling primitives -------------------------------------------------------


def top_k_set(logits, k) -> np.ndarray:
    """Boolean mask of the ``k`` largest logits (ties resolved by index)."""
    logits = np.asarray(logits, dtype=float)
    k = int(min(max(k, 1), logits.size))
    keep = np.argsort(-logits, kind="stable")[:k]
    mask = np.zeros(logits.size, dtype=bool)
    mask[keep] = True
    return mask


def softmax_with_temperature(logits, alpha, restricted=None) -> np.ndarray:
    """Temperature softmax renormalised over ``restricted`` (a boolean mask or index set)."""
    if not alpha > 0 or not np.isfinite(alpha):
        raise ValueError("temperature must be a positive finite number")
    b = np.asarray(logits, dtype=float).reshape(-1)
    if restricted is None:
        mask = np.ones(b.size, dtype=bool)
    else:
        restricted = np.asarray(restricted)
        if restricted.dtype == bool:
            mask = restricted.reshape(-1)
        else:
            mask = np.zeros(b.size, dtype=bool)
            mask[restricted.astype(np.int64)] = True
    if not mask.any():
        raise DegenerateError("restricted set is empty")
    z = np.where(mask, b / alpha, -np.inf)
    top = np.max(z)
    if not np.isfinite(top):
        raise DegenerateError("all logits on the restricted set are -inf")
    w = np.exp(z - top)
    return w / w.sum()


def sample_index(cdf_row, last_pos, u) -> int:
    """Inverse-CDF draw: first index whose cumulative mass exceeds ``u``."""
    g = int(np.searchsorted(cdf_row, u, side="right"))
    return min(g, int(last_pos))


def check_stochastic(lam, atol=1e-12):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
        raise ValidationError("transition law must be a square matrix")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValidationError("transition probabilities must be finite and non-negative")
    dev = np.max(np.abs(lam.sum(axis=0) - 1.0))
    if dev > atol:
        raise ValidationError(f"columns must sum to 1 (max deviation {dev:.3e})")
    return lam


# --- synthetic agents ------------------------------------------------------------


class SyntheticAgent:
    """Grid agent with an explicit transition law.

    ``lam[g, j]`` is the probability of emitting the population with state code
    ``g`` when prompted with the examples whose code is ``j``.
    """

    def __init__(self, grid: Grid, lam, name="synthetic"):
        lam = check_stochastic(lam)
        if lam.shape[0] != grid.n_states:
            raise ValidationError(f"law has {lam.shape[0]} states, grid has {grid.n_states}")
        self.grid = grid
        self.name = name
        self.lam = lam
        self.lam.setflags(write=False)
        self.cdf = np.cumsum(lam.T, axis=1)  # cdf[j, g]
        self.last_pos = (lam.shape[0] - 1 - np.argmax(lam.T[:, ::-1] > 0, axis=1)).astype(np.int64)
        self._actions = grid.action_values()

    @classmethod
    def from_logits(cls, grid, logits, alpha=1.0, top_k=None, name="synthetic"):
        """Law induced column by column from successor logits ``logits[g, j]``."""
        logits = np.asarray(logits, dtype=float)
        cols = []
        for j in range(logits.shape[1]):
            mask = None if top_k is None else top_k_set(logits[:, j], top_k)
            cols.append(softmax_with_temperature(logits[:, j], alpha, mask))
        return cls(grid, np.column_stack(cols), name)

    @classmethod
    def uniform(cls, grid, name="uniform"):
        S = grid.n_states
        return cls(grid, np.full((S, S), 1.0 / S), name)

    @classmethod
    def delta(cls, grid, target, name="delta"):
        S = grid.n_states
        lam = np.zeros((S, S))
        lam[int(target), :] = 1.0
        return cls(grid, lam, name)

    @classmethod
    def random(cls, grid, rng, concentration=1.0, floor=1e-3, name="random-law"):
        """Dirichlet columns mixed with a uniform floor so every entry is positive."""
        S = grid.n_states
        lam = rng.dirichlet(np.full(S, concentration), size=S).T
        lam = (1 - floor) * lam + floor / S
        lam /= lam.sum(axis=0, keepdims=True)
        return cls(grid, lam, name)

    def state_of(self, examples: Population) -> int:
        return int(self.grid.encode_actions(self.grid.action_index(examples.actions)))

    def sample_state(self, current: int, rng) -> int:
        return sample_index(self.cdf[current], self.last_pos[current], rng.random())

    def generate(self, examples: Population, ctx: AgentContext) -> Population:
        g = self.sample_state(self.state_of(examples), ctx.rng)
        return Population(self._actions[self.grid.state_actions(g)], None, ctx.box)


def synthetic_generate(policy: SyntheticAgent, current_state: int, rng) -> Population:
    g = policy.sample_state(int(current_state), rng)
    box = Box(np.asarray(policy.grid.x_min), np.asarray(policy.grid.x_max))
    return Population(policy.grid.decode(g), None, box)


class RandomAgent:
    """Uniform proposals over the box, or over grid points when ``levels`` is set."""

    def __init__(self, levels=None, name="random"):
        self.levels = levels
        self.name = name

    def generate(self, examples, ctx: AgentContext) -> Population:
        D = ctx.box.D
        if self.levels is None:
            X = ctx.box.sample(ctx.rng, ctx.P)
        else:
            k = ctx.rng.integers(0, self.levels, size=(ctx.P, D))
            X = ctx.box.x_min + k * (ctx.box.x_max - ctx.box.x_min) / (self.levels - 1)
        return Population(X, None, ctx.box)


class ExploringAgent:
    """Local-search agent with a factorised, everywhere-positive proposal law.

    Each output row perturbs an example row chosen by a temperature softmax over
    example rank; with probability ``epsilon`` the row is drawn uniformly instead.
    On a grid the per-coordinate move is a softmax over offsets ``-step..step``
    restricted to in-bounds levels; off-grid it is a Gaussian step clipped to the box.
    """

    def __init__(self, levels=None, epsilon=0.2, step=1, sigma=0.05, alpha=1.0, name="exploring"):
        if not 0 <= epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        self.levels = levels
        self.epsilon = epsilon
        self.step = int(step)
        self.sigma = sigma
        self.alpha = alpha
        self.name = name

    def _parent_probs(self, n):
        # examples arrive best-first from the elitist sampler; rank 0 is favoured
        return softmax_with_temperature(-np.arange(n, dtype=float), self.alpha)

    def generate(self, examples: Population, ctx: AgentContext) -> Population:
        rng, box = ctx.rng, ctx.box
        D = box.D
        n_ex = len(examples)
        probs = self._parent_probs(n_ex)
        rows = np.empty((ctx.P, D))
        if self.levels is not None:
            span = (box.x_max - box.x_min) / (self.levels - 1)
            offsets = np.arange(-self.step, self.step + 1)
            logits = -np.abs(offsets).astype(float)
        for p in range(ctx.P):
            explore = rng.random() < self.epsilon
            parent = examples.actions[rng.choice(n_ex, p=probs)]
            if self.levels is None:
                if explore:
                    rows[p] = box.sample(rng, 1)[0]
                else:
                    rows[p] = np.clip(parent + rng.normal(0.0, self.sigma, D) * (box.x_max - box.x_min),
                                      box.x_min, box.x_max)
                continue
            if explore:
                k = rng.integers(0, self.levels, size=D)
            else:
                k = np.rint((parent - box.x_min) / span).astype(np.int64)
                for d in range(D):
                    allowed = (k[d] + offsets >= 0) & (k[d] + offsets < self.levels)
                    k[d] += offsets[rng.choice(offsets.size, p=softmax_with_temperature(logits, self.alpha, allowed))]
            rows[p] = box.x_min + k * span
        return Population(rows, None, box)


# --- remote chat-completions agent ----------------------------------------------------


@dataclass
class HttpLlmAgentConfig:
    endpoint: str
    model: str
    temperature: float = 1.0
    retries: int = 2
    timeout: float = 30.0
    api_key_env: str | None = "OPENAI_API_KEY"
    backoff: float = 0.5
    integer_mode: bool = True
    n_digit: int = 3

    def __post_init__(self):
        if not np.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError("temperature must be finite and >= 0")
        if self.retries < 0:
            raise ValueError("retry budget must be >= 0")


@dataclass
class Completion:
    text: str
    retries: int
    failures: list = field(default_factory=list)


def _request_once(config: HttpLlmAgentConfig, prompt_text: str, session) -> str:
    headers = {"Content-Type": "application/json"}
    if config.api_key_env:
        key = os.environ.get(config.api_key_env)
        if not key:
            raise AgentFailure(f"environment variable {config.api_key_env} is not set")
        headers["Authorization"] = f"Bearer {key}"
    body = {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt_text}],
        "temperature": config.temperature,
    }
    url = config.endpoint.rstrip("/") + "/chat/completions"
    try:
        resp = session.post(url, json=body, headers=headers, timeout=config.timeout)
    except (requests.Timeout, requests.ConnectionError) as exc:
        raise TransportFailure(f"{type(exc).__name__}: {exc}") from exc
    except requests.RequestException as exc:
        raise TransportFailure(str(exc)) from exc
    if not 200 <= resp.status_code < 300:
        raise ApiFailure(f"HTTP {resp.status_code}: {resp.text[:200]}", status=resp.status_code)
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ApiFailure(f"unexpected response body: {exc}", status=resp.status_code) from exc


def http_generate(config: HttpLlmAgentConfig, prompt_text: str, session=None) -> Completion:
    """POST one chat-completions request, retrying transport and API failures."""
    own = session is None
    session = session or requests.Session()
    failures = []
    try:
        for attempt in range(config.retries + 1):
            try:
                return Completion(_request_once(config, prompt_text, session), attempt, failures)
            except (TransportFailure, ApiFailure) as exc:
                failures.append(exc)
                log.warning("chat request attempt %d failed: %s", attempt + 1, exc)
                if attempt < config.retries and config.backoff > 0:
                    time.sleep(config.backoff * 2**attempt)
        last = failures[-1]
        last.attempts = len(failures)
        raise last
    finally:
        if own:
            session.close()


class HttpLlmAgent:
    concurrent = True

    def __init__(self, config: HttpLlmAgentConfig, name=None):
        self.config = config
        self.name = name or config.model
        self.last_completion: Completion | None = None

    def generate(self, examples: Population, ctx: AgentContext) -> Population:
        D = ctx.box.D
        prompt_text = render_prompt(
            examples, ctx.box, ctx.P, D, ctx.constraint_text,
            n_digit=self.config.n_digit, integer_mode=self.config.integer_mode,
        )
        completion = http_generate(self.config, prompt_text)
        self.last_completion = completion
        return parse_population(completion.text, ctx.P, D, ctx.box, integer_mode=self.config.integer_mode)


# --- ensembles -------------------------------------------------------------------


def ensemble_generate(agents, examples: Population, contexts, retries=0) -> tuple[Population, list]:
    """Query every agent with the same examples and stack outputs in agent order.

    Each agent gets ``1 + retries`` attempts.  Returns the stacked population and
    a list of ``(agent_index, error)`` for every failed attempt; raises
    :class:`AgentFailure` (with that list as ``.failures``) if no agent succeeded.
    """
    if not agents:
        raise ValueError("at least one agent is required")

    def call(i):
        errors = []
        for _ in range(retries + 1):
            try:
                return agents[i].generate(examples, contexts[i]), errors
            except (AgentFailure, ParseError) as exc:
                log.info("agent %s failed: %s", getattr(agents[i], "name", i), exc)
                errors.append((i, exc))
        return None, errors

    if len(agents) > 1 and any(getattr(a, "concurrent", False) for a in agents):
        with ThreadPoolExecutor(max_workers=len(agents)) as pool:
            results = list(pool.map(call, range(len(agents))))
    else:
        results = [call(i) for i in range(len(agents))]
    outputs = [pop for pop, _ in results if pop is not None]
    failed = [e for _, errs in results for e in errs]
    if not outputs:
        err = AgentFailure(f"all {len(agents)} agents failed; last error: {failed[-1][1]}")
        err.failures = failed
        raise err
    return Population.concat(outputs), failed
