"""Classical comparators: GA, random-forest BO, random search, WMMSE, Dinkelbach."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .optimizer import RewardCache
from .population import Box, Population
from .rewards import BcModel, IfcModel, ifc_rates
from .trace import ExperimentTrace, IterationRecord, config_hash

log = logging.getLogger(__name__)


def _record(trace, t, best, rewards, X, violation, evaluations):
    v = 0.0 if violation is None else float(np.mean([violation(x) for x in X]))
    pop = Population(np.array(X, dtype=float), np.array(rewards, dtype=float))
    trace.records.append(IterationRecord(t, best, float(np.mean(rewards)), v, 0, evaluations, population=pop))


# --- genetic algorithm -----------------------------------------------------------------------


@dataclass
class GaConfig:
    P: int = 5
    crossover_prob: float = 0.5
    parent_portion: float = 0.3
    mutation_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("crossover_prob", "parent_portion", "mutation_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.P < 1:
            raise ValueError("P must be >= 1")


def uniform_crossover(a, b, mask) -> np.ndarray:
    """Gene ``d`` comes from ``a`` where ``mask[d]`` is set, else from ``b``."""
    return np.where(np.asarray(mask, dtype=bool), a, b)


def run_ga(config: GaConfig, reward, box: Box, T: int, init=None, violation=None) -> ExperimentTrace:
    """Elitist GA: keep the best individual, breed the rest from the top parents.

    Parents are picked by binary tournaments within the top
    ``ceil(parent_portion * P)`` individuals.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(config.seed)
    evaluate = RewardCache(reward)
    P = config.P
    X = box.sample(rng, P) if init is None else np.array(init, dtype=float)
    r = evaluate(X)
    trace = ExperimentTrace(metadata={"method": "ga", "config_hash": config_hash(vars(config)), "seed": config.seed,
                                      "initial_best": float(r.max())})
    n_par = max(1, math.ceil(config.parent_portion * P))
    for t in range(1, T + 1):
        order = np.argsort(-r, kind="stable")
        X, r = X[order], r[order]
        pool = X[:n_par]

        def pick():
            i, j = rng.integers(0, n_par, size=2)
            return pool[min(i, j)]  # pool is sorted best-first

        children = [X[0]]
        for _ in range(P - 1):
            a, b = pick(), pick()
            child = uniform_crossover(a, b, rng.random(box.D) < config.crossover_prob)
            mut = rng.random(box.D) < config.mutation_prob
            child = np.where(mut, rng.uniform(box.x_min, box.x_max), child)
            children.append(child)
        X = np.array(children)
        r = evaluate(X)
        _record(trace, t, float(r.max()) if t == 1 else max(trace.records[-1].best_reward, float(r.max())),
                r, X, violation, evaluate.evaluations)
    trace.metadata["evaluations"] = evaluate.evaluations
    return trace


# --- Bayesian optimisation ------------------------------------------------------------------------


@dataclass
class BoConfig:
    P: int = 5
    n_trees: int = 32
    max_depth: int = 6
    n_candidates: int = 2000
    xi: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.P < 1:
            raise ValueError("batch size must be >= 1")


def expected_improvement(mu, sigma, best, xi=0.0) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    imp = mu - best - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, imp / sigma, 0.0)
        ei = np.where(sigma > 0, imp * stats.norm.cdf(z) + sigma * stats.norm.pdf(z), np.maximum(imp, 0.0))
    return np.maximum(ei, 0.0)


def run_bo(config: BoConfig, reward, box: Box, T: int, violation=None) -> ExperimentTrace:
    """Batch BO with a random-forest surrogate; EI from the per-tree spread."""
    from sklearn.ensemble import RandomForestRegressor

    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(config.seed)
    evaluate = RewardCache(reward)
    X = box.sample(rng, config.P)
    y = evaluate(X)
    trace = ExperimentTrace(metadata={"method": "bo", "config_hash": config_hash(vars(config)), "seed": config.seed,
                                      "initial_best": float(y.max())})
    best = float(y.max())
    for t in range(1, T + 1):
        if np.ptp(y) == 0:
            Xn = box.sample(rng, config.P)
        else:
            forest = RandomForestRegressor(
                n_estimators=config.n_trees, max_depth=config.max_depth, bootstrap=True,
                random_state=int(rng.integers(2**31 - 1)),
            ).fit(X, y)
            cand = box.sample(rng, config.n_candidates)
            per_tree = np.stack([tree.predict(cand) for tree in forest.estimators_])
            ei = expected_improvement(per_tree.mean(axis=0), per_tree.std(axis=0), best, config.xi)
            Xn = cand[np.argsort(-ei, kind="stable")[: config.P]]
        yn = evaluate(Xn)
        X, y = np.vstack([X, Xn]), np.concatenate([y, yn])
        best = max(best, float(yn.max()))
        _record(trace, t, best, yn, Xn, violation, evaluate.evaluations)
    trace.metadata["evaluations"] = evaluate.evaluations
    return trace


# --- random search ------------------------------------------------------------------------------------


def brute_force(n_per_iter, reward, box: Box, T, seed=0, violation=None) -> ExperimentTrace:
    """``n_per_iter`` i.i.d. uniform proposals per iteration."""
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(seed)
    evaluate = RewardCache(reward)
    trace = ExperimentTrace(metadata={"method": "brute-force", "seed": seed,
                                      "config_hash": config_hash({"n": n_per_iter, "seed": seed})})
    best = -np.inf
    for t in range(1, T + 1):
        X = box.sample(rng, n_per_iter)
        r = evaluate(X)
        best = max(best, float(r.max()))
        _record(trace, t, best, r, X, violation, evaluate.evaluations)
    trace.metadata["evaluations"] = evaluate.evaluations
    return trace


# --- local optimisers for power control --------------------------------------------------------------


@dataclass
class LocalResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    def __iter__(self):  # allows ``x, value = result``
        return iter((self.x, self.value))


def _gain_matrix(model):
    """``G[j, d]``: effective gain from transmitter ``j`` to receiver ``d``."""
    if isinstance(model, BcModel):
        return np.tile(model.gains, (model.D, 1))
    return model.gains


def _se(v, G):
    x = v**2
    direct = np.diag(G) * x
    return float(np.sum(np.log1p(direct / (1.0 + x @ G - direct))))


def _power_step(num, den, sum_power, upper=1.0):
    """``v = clip(num / (den + mu), 0, upper)`` with the smallest feasible ``mu >= 0``."""
    v = np.clip(num / den, 0.0, upper)
    if not sum_power or np.sum(v**2) <= 1.0:
        return v
    lo, hi = 0.0, 1.0
    while np.sum(np.clip(num / (den + hi), 0.0, upper) ** 2) > 1.0:
        hi *= 2.0
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        if np.sum(np.clip(num / (den + mu), 0.0, upper) ** 2) > 1.0:
            lo = mu
        else:
            hi = mu
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return np.clip(num / (den + hi), 0.0, upper)


def wmmse(model, init=None, max_iter=1000, tol=1e-8) -> LocalResult:
    """Scalar WMMSE for sum-rate maximisation.

    Broadcast models additionally enforce the sum-power constraint through a
    bisection on its multiplier.
    """
    G = _gain_matrix(model)
    a = np.sqrt(np.diag(G))
    D = G.shape[0]
    sum_power = isinstance(model, BcModel)
    if init is None:
        init = np.full(D, 1.0 / D) if sum_power else np.ones(D)
    v = np.sqrt(np.clip(np.asarray(init, dtype=float), 0.0, 1.0))
    se = _se(v, G)
    history = [se]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        u = a * v / (1.0 + (v**2) @ G)
        w = 1.0 / (1.0 - u * a * v)
        den = G @ (w * u**2)  # sum_j w_j u_j^2 G[d, j]
        v = _power_step(w * u * a, den, sum_power)
        new = _se(v, G)
        history.append(new)
        if abs(new - se) < tol:
            se = new
            converged = True
            break
        se = new
    if not converged:
        log.warning("WMMSE did not converge in %d iterations", max_iter)
    return LocalResult(v**2, se, it, converged, history)


def _ee_and_grad(x, model: IfcModel):
    G = model.gains
    D = G.shape[0]
    total = 1.0 + x @ G
    interf = total - np.diag(G) * x
    off = 1.0 - np.eye(D)
    # J[d, j] = d f_d / d x_j
    J = G.T / total[:, None] - (G.T * off) / interf[:, None]
    f = np.log(total) - np.log(interf)
    den = model.P_fix + model.P_tx * x
    return f, den, J


def dinkelbach_ee(model: IfcModel, init=None, max_iter=1000, tol=1e-12) -> LocalResult:
    """Parametric ascent for the per-link energy-efficiency sum ``sum_d f_d / den_d``.

    Each outer step fixes the ratio parameters ``y_d = sqrt(f_d) / den_d`` at the
    current point and maximises the concave-in-ratio surrogate
    ``sum_d 2 y_d sqrt(f_d) - y_d^2 den_d`` over the box (L-BFGS-B, warm-started).
    The surrogate lower-bounds the objective and touches it at the current point,
    so the objective never decreases.  Stops when an outer step gains less than ``tol``.
    """
    D = model.D
    x = np.ones(D) if init is None else np.clip(np.asarray(init, dtype=float), 0.0, 1.0)

    def ee(z):
        f, den, _ = _ee_and_grad(z, model)
        return float(np.sum(f / den))

    value = ee(x)
    history = [value]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        f, den, _ = _ee_and_grad(x, model)
        y = np.sqrt(f) / den

        def neg_surrogate(z):
            fz, denz, J = _ee_and_grad(z, model)
            root = np.sqrt(np.maximum(fz, 1e-300))
            val = np.sum(2 * y * root - y**2 * denz)
            grad = J.T @ (y / root) - y**2 * model.P_tx
            return -val, -grad

        res = optimize.minimize(neg_surrogate, x, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * D,
                                options={"ftol": 1e-15, "gtol": 1e-13, "maxiter": 1000})
        cand = np.clip(res.x, 0.0, 1.0)
        new = ee(cand)
        if new <= value:  # no ascent left at this precision
            history.append(value)
            converged = True
            break
        gain = new - value
        x, value = cand, new
        history.append(value)
        if gain < tol:
            converged = True
            break
    if not converged:
        log.warning("fractional-programming iteration did not converge in %d steps", max_iter)
    return LocalResult(x, value, it, converged, history)


# --- multi-start -----------------------------------------------------------------------------------------


@dataclass
class MultiStartResult:
    best: LocalResult
    values: np.ndarray
    inits: np.ndarray

    @property
    def x(self):
        return self.best.x

    @property
    def value(self):
        return self.best.value


def multi_start(optimizer, n_starts=50, seed=0, box: Box | None = None, D=None, workers=1) -> MultiStartResult:
    """Run ``optimizer(init)`` from ``n_starts`` uniform initial points and keep the best.

    Initial points are drawn row by row from one seeded stream, so the first
    ``k`` starts are shared by every ``n_starts >= k``.
    """
    if n_starts < 1:
        raise ValueError("need at least one start")
    if box is None:
        if D is None:
            raise ValueError("give either box or D")
        box = Box.uniform(D)
    inits = box.sample(np.random.default_rng(seed), n_starts)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(optimizer, inits))
    else:
        results = [optimizer(x0) for x0 in inits]
    values = np.array([r.value for r in results])
    return MultiStartResult(results[int(np.argmax(values))], values, inits)
