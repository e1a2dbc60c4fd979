"""Populations, the two-block memory and the example samplers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, StructuralError


@dataclass(frozen=True)
class Box:
    """Per-dimension bounds ``x_min <= x <= x_max``."""

    x_min: np.ndarray
    x_max: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.x_min, dtype=float))
        hi = np.atleast_1d(np.asarray(self.x_max, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("x_min and x_max must be 1-d and of equal length")
        if np.any(lo > hi) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite with x_min <= x_max")
        object.__setattr__(self, "x_min", lo)
        object.__setattr__(self, "x_max", hi)

    @classmethod
    def uniform(cls, D, lo=0.0, hi=1.0):
        return cls(np.full(D, float(lo)), np.full(D, float(hi)))

    @property
    def D(self) -> int:
        return self.x_min.size

    def contains(self, X) -> bool:
        X = np.asarray(X, dtype=float)
        return bool(np.all(np.isfinite(X)) and np.all(X >= self.x_min) and np.all(X <= self.x_max))

    def check(self, X):
        if not self.contains(X):
            raise BoundsError(f"action outside [{self.x_min.tolist()}, {self.x_max.tolist()}]")

    def sample(self, rng, n) -> np.ndarray:
        return rng.uniform(self.x_min, self.x_max, size=(n, self.D))


@dataclass(frozen=True)
class ActionVector:
    values: np.ndarray
    box: Box

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.box.D:
            raise StructuralError(f"expected {self.box.D} values, got {v.size}")
        self.box.check(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass
class Population:
    """``P`` action rows with an optional reward per row."""

    actions: np.ndarray
    rewards: np.ndarray | None = None
    box: Box | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.asarray(self.actions, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1) if X.size else X.reshape(0, 0)
        if X.ndim != 2:
            raise StructuralError("actions must be a 2-d array")
        if self.box is not None and len(X):
            if X.shape[1] != self.box.D:
                raise StructuralError(f"expected D={self.box.D} columns, got {X.shape[1]}")
            self.box.check(X)
        self.actions = X
        if self.rewards is not None:
            r = np.asarray(self.rewards, dtype=float).reshape(-1)
            if r.size != X.shape[0]:
                raise StructuralError("one reward per action row is required")
            self.rewards = r

    @classmethod
    def empty(cls, D, box=None):
        return cls(np.zeros((0, D)), np.zeros(0), box)

    def __len__(self):
        return self.actions.shape[0]

    @property
    def evaluated(self) -> bool:
        return self.rewards is not None

    def take(self, idx) -> Population:
        idx = np.asarray(idx, dtype=np.int64)
        r = None if self.rewards is None else self.rewards[idx]
        return Population(self.actions[idx], r, self.box)

    def with_rewards(self, rewards) -> Population:
        return Population(self.actions, rewards, self.box)

    @staticmethod
    def concat(pops) -> Population:
        pops = list(pops)
        if not pops:
            raise StructuralError("nothing to concatenate")
        X = np.concatenate([p.actions for p in pops], axis=0)
        if all(p.evaluated for p in pops):
            r = np.concatenate([p.rewards for p in pops])
        else:
            r = None
        return Population(X, r, pops[0].box)

    def same_as(self, other: Population) -> bool:
        if self.actions.shape != other.actions.shape or not np.array_equal(self.actions, other.actions):
            return False
        if self.rewards is None or other.rewards is None:
            return self.rewards is None and other.rewards is None
        return np.array_equal(self.rewards, other.rewards)


@dataclass
class MemoryBuffer:
    """The latest agent output and the examples it was prompted with."""

    new_block: Population
    example_block: Population

    @property
    def n_rows(self) -> int:
        return len(self.new_block) + len(self.example_block)

    def stacked(self) -> Population:
        return Population.concat([self.new_block, self.example_block])


@dataclass
class BestRecord:
    action: ActionVector
    reward: float
    iteration_found: int


def _top(pop: Population, P: int) -> Population:
    # stable: earlier rows win ties
    order = np.argsort(-pop.rewards, kind="stable")[:P]
    return pop.take(order)


def elitist_sample(memory: MemoryBuffer, P: int) -> Population:
    """The ``P`` highest-reward rows across both blocks, best first.

    Ties keep new-block rows ahead of example rows, then row order.
    """
    stacked = memory.stacked()
    if not stacked.evaluated:
        raise StructuralError("memory rows must be evaluated before sampling")
    if len(stacked) < P:
        raise StructuralError(f"memory holds {len(stacked)} rows, need {P}")
    return _top(stacked, P)


def lifo_sample(memory: MemoryBuffer, P: int) -> Population:
    """Most recent agent output.

    With a single agent (exactly ``P`` new rows) the block is returned as is;
    with an ensemble the ``P`` best rows of the new block are kept.
    """
    new = memory.new_block
    if len(new) == 0:
        raise StructuralError("LIFO sampling needs a non-empty new block")
    if len(new) < P:
        raise StructuralError(f"new block holds {len(new)} rows, need {P}")
    if len(new) == P:
        return new
    if not new.evaluated:
        raise StructuralError("new block must be evaluated to rank an ensemble output")
    return _top(new, P)


class SamplerKind(enum.Enum):
    ELITIST = "elitist"
    LIFO = "lifo"

    def sample(self, memory: MemoryBuffer, P: int) -> Population:
        if self is SamplerKind.ELITIST:
            return elitist_sample(memory, P)
        return lifo_sample(memory, P)

    @classmethod
    def parse(cls, value) -> SamplerKind:
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


def update_best(best: BestRecord, pop: Population, iteration: int) -> BestRecord:
    """Replace the incumbent only on strict improvement."""
    if not pop.evaluated or len(pop) == 0:
        return best
    p = int(np.argmax(pop.rewards))
    if best.reward < pop.rewards[p]:
        box = pop.box if pop.box is not None else best.action.box
        return BestRecord(ActionVector(pop.actions[p], box), float(pop.rewards[p]), iteration)
    return best


def update_memory(new_pop: Population, examples: Population) -> MemoryBuffer:
    if not (new_pop.evaluated and examples.evaluated):
        raise StructuralError("both blocks must be evaluated")
    return MemoryBuffer(new_block=new_pop, example_block=examples)
