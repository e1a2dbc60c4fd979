"""Exact Markov-chain analysis of grid LLMO runs.

States are example populations on a quantised grid.  Matrices are
column-stochastic, ``M[s, s~] = Pr(next = s | current = s~)``, and live in
*rank order*: index 0 is the best state, the first ``n_optimal`` indices are
the states holding a globally optimal action.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .errors import CapacityError, DegenerateError, FitError, ValidationError
from .grid import Grid
from .population import SamplerKind

log = logging.getLogger(__name__)

DEFAULT_CAP = 10_000


# --- state space -------------------------------------------------------------------


@dataclass
class StateSpace:
    grid: Grid
    action_rewards: np.ndarray  # (A,)
    order: np.ndarray  # rank -> code
    rank: np.ndarray  # code -> rank
    n_optimal: int
    r_star: float
    best: np.ndarray  # best action reward per rank
    sorted_rewards: np.ndarray  # (S, P) descending, per rank

    @property
    def size(self) -> int:
        return self.order.size

    @property
    def optimal(self) -> slice:
        return slice(0, self.n_optimal)

    def codes_to_rank(self, M) -> np.ndarray:
        """Reindex a code-indexed matrix or vector into rank order."""
        M = np.asarray(M)
        if M.ndim == 1:
            return M[self.order]
        return M[np.ix_(self.order, self.order)]

    def population(self, rank_index) -> np.ndarray:
        return self.grid.decode(int(self.order[rank_index]))


def enumerate_and_order(grid: Grid, reward, cap=DEFAULT_CAP) -> StateSpace:
    """Enumerate all grid populations and sort them best first.

    States compare by their descending reward lists (largest first, then the
    next largest, ...).  Equal lists are broken by the row-order reward list,
    then by state code, which makes elitist transition blocks triangular.
    """
    S = grid.n_states
    if S > cap:
        raise CapacityError(f"{S} states exceed the cap of {cap}")
    if callable(reward):
        r_act = np.array([float(reward(x)) for x in grid.action_values()])
    else:
        r_act = np.asarray(reward, dtype=float).reshape(-1)
    if r_act.size != grid.n_actions:
        raise ValidationError(f"need {grid.n_actions} action rewards, got {r_act.size}")
    codes = np.arange(S, dtype=np.int64)
    raw = r_act[grid.state_actions(codes)]  # (S, P)
    srt = -np.sort(-raw, axis=1)
    keys = [codes] + [-raw[:, p] for p in range(grid.P - 1, -1, -1)] + [-srt[:, p] for p in range(grid.P - 1, -1, -1)]
    order = np.lexsort(keys)
    rank = np.empty(S, dtype=np.int64)
    rank[order] = np.arange(S)
    r_star = float(r_act.max())
    best = srt[order, 0]
    n_opt = int(np.count_nonzero(best == r_star))
    return StateSpace(grid, r_act, order, rank, n_opt, r_star, best, srt[order])


def initial_distribution(space: StateSpace, sampler=SamplerKind.ELITIST) -> np.ndarray:
    """Rank-order law of the first example state when ``X0`` is uniform on the grid."""
    sampler = SamplerKind.parse(sampler)
    g = space.grid
    codes = np.arange(space.size, dtype=np.int64)
    if sampler is SamplerKind.LIFO:
        s0 = codes
    else:
        rows = g.state_actions(codes)
        idx = np.argsort(-space.action_rewards[rows], axis=1, kind="stable")
        s0 = g.encode_actions(np.take_along_axis(rows, idx, axis=1))
    pi = np.bincount(space.rank[s0], minlength=space.size).astype(float)
    return pi / pi.sum()


# --- transition models ----------------------------------------------------------------


@dataclass
class TransitionModel:
    matrix: np.ndarray  # rank order
    space: StateSpace
    sampler: SamplerKind
    L: int = 1
    construction: str = "exact"

    @property
    def k(self) -> int:
        return self.space.n_optimal

    # P1..P4 (Q1..Q3 for ensembles: Q1=P1, Q2=P2, Q3=P4; P3 vanishes)
    @property
    def P1(self):
        return self.matrix[: self.k, : self.k]

    @property
    def P2(self):
        return self.matrix[: self.k, self.k:]

    @property
    def P3(self):
        return self.matrix[self.k:, : self.k]

    @property
    def P4(self):
        return self.matrix[self.k:, self.k:]

    Q1 = P1
    Q2 = P2
    Q3 = P4


def _check_law(lam, S):
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (S, S):
        raise ValidationError(f"law must be {S}x{S}, got {lam.shape}")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValidationError("law entries must be finite and non-negative")
    dev = np.max(np.abs(lam.sum(axis=0) - 1.0))
    if dev > 1e-12:
        raise ValidationError(f"law columns must sum to 1 (max deviation {dev:.3e})")
    return lam


def _law_of(policy):
    return getattr(policy, "lam", policy)


def build_exact_transition(space: StateSpace, policies, sampler=SamplerKind.ELITIST) -> TransitionModel:
    """Exact chain of the optimizer: sum over every joint agent output."""
    sampler = SamplerKind.parse(sampler)
    policies = list(policies)
    S, g = space.size, space.grid
    lams = np.stack([_check_law(_law_of(p), S) for p in policies])
    M = kernels.exact_transition(lams, space.action_rewards, g.P, g.n_actions, sampler is SamplerKind.LIFO)
    return TransitionModel(space.codes_to_rank(M), space, sampler, len(policies), "exact")


def build_single_transition(space: StateSpace, policy, sampler=SamplerKind.ELITIST) -> TransitionModel:
    """``p = sum_g lam(g | s~) 1[sampler(g, s~) = s]`` over the finite space."""
    return build_exact_transition(space, [policy], sampler)


def build_multi_transition(space: StateSpace, policies, sampler=SamplerKind.ELITIST) -> TransitionModel:
    """State-level ensemble chain: the next state is the best of the agents' states.

    With ``A_i = prod_l sum_{i' >= i} lam_l[i', j]`` (rank order, larger index =
    worse), the elitist entries are ``A_i - A_{i+1}`` above the diagonal, ``A_j``
    on it and zero below; the LIFO variant uses ``A_i - A_{i+1}`` everywhere.
    """
    sampler = SamplerKind.parse(sampler)
    policies = list(policies)
    S = space.size
    A = np.ones((S + 1, S))
    A[S] = 0.0
    for p in policies:
        lam = space.codes_to_rank(_check_law(_law_of(p), S))
        tail = np.cumsum(lam[::-1], axis=0)[::-1]  # tail[i, j] = sum_{i' >= i} lam[i', j]
        A[:S] *= np.minimum(tail, 1.0)
    Q = A[:S] - A[1:]
    if sampler is SamplerKind.ELITIST:
        Q = np.triu(Q, k=1)
        Q[np.diag_indices(S)] = np.diag(A[:S])
    return TransitionModel(Q, space, sampler, len(policies), "state-max")


# --- structure -------------------------------------------------------------------------


def is_upper_triangular(M) -> bool:
    return not np.any(np.tril(M, k=-1))


def spectral_radius(M, tol=1e-12, max_iter=10_000) -> float:
    """Spectral radius; read off the diagonal when ``M`` is triangular."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    if is_upper_triangular(M) or is_upper_triangular(M.T):
        return float(np.max(np.abs(np.diag(M))))
    x = np.full(M.shape[0], 1.0 / np.sqrt(M.shape[0]))
    est = 0.0
    for _ in range(max_iter):
        y = np.abs(M) @ x if np.all(M >= 0) else M @ x
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        y /= norm
        new = float(y @ (M @ y))
        if abs(new - est) <= tol * max(abs(new), 1e-300):
            return abs(new)
        est, x = new, y
    log.warning("power iteration hit the iteration cap; falling back to eigvals")
    return float(np.max(np.abs(np.linalg.eigvals(M))))


@dataclass
class StructureReport:
    sampler: SamplerKind
    column_error: float
    p3_zero: bool
    p1_upper: bool
    p4_upper: bool
    p2_columns_positive: bool
    rho_p4: float
    all_blocks_positive: bool

    @property
    def stochastic(self) -> bool:
        return self.column_error <= 1e-12

    @property
    def elitist_ok(self) -> bool:
        return (self.stochastic and self.p3_zero and self.p1_upper and self.p4_upper
                and self.p2_columns_positive and self.rho_p4 < 1)

    @property
    def lifo_ok(self) -> bool:
        return self.stochastic and self.all_blocks_positive

    @property
    def ok(self) -> bool:
        return self.elitist_ok if self.sampler is SamplerKind.ELITIST else self.lifo_ok


def check_structure(model: TransitionModel) -> StructureReport:
    M = model.matrix
    P2 = model.P2
    return StructureReport(
        sampler=model.sampler,
        column_error=float(np.max(np.abs(M.sum(axis=0) - 1.0))),
        p3_zero=not np.any(model.P3),
        p1_upper=is_upper_triangular(model.P1),
        p4_upper=is_upper_triangular(model.P4),
        p2_columns_positive=bool(P2.shape[1] == 0 or np.all(np.any(P2 > 0, axis=0))),
        rho_p4=spectral_radius(model.P4),
        all_blocks_positive=bool(np.all(M > 0)),
    )


# --- propagation ------------------------------------------------------------------------


def _as_distribution(pi0, S):
    pi = np.asarray(pi0, dtype=float).reshape(-1)
    if pi.size != S:
        raise ValidationError(f"distribution must have {S} entries")
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-9:
        raise ValidationError("initial distribution must be non-negative and sum to 1")
    return pi


def propagate(model: TransitionModel, pi0, t: int) -> tuple[np.ndarray, np.ndarray]:
    """``pi^(0..t)`` as a ``(t+1, S)`` array and the optimal mass per step."""
    M = model.matrix
    pi = _as_distribution(pi0, M.shape[0])
    out = np.empty((t + 1, pi.size))
    out[0] = pi
    for i in range(1, t + 1):
        pi = M @ pi
        pi /= pi.sum()
        out[i] = pi
    return out, out[:, : model.k].sum(axis=1)


def stationary_distribution(model: TransitionModel) -> np.ndarray:
    """Solve ``M pi = pi``, ``sum(pi) = 1`` (unique for an irreducible chain)."""
    M = model.matrix
    S = M.shape[0]
    A = M - np.eye(S)
    A[-1] = 1.0
    b = np.zeros(S)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def expected_best(space: StateSpace, pi) -> np.ndarray:
    """Expected best reward for each distribution (last axis = states)."""
    return np.asarray(pi) @ space.best


def gap(space: StateSpace, pi) -> np.ndarray:
    """``r* - expected best``, summed over non-optimal states only to keep precision."""
    k = space.n_optimal
    return np.asarray(pi)[..., k:] @ (space.r_star - space.best[k:])


def acr_series(rbar, r_star) -> np.ndarray:
    """``gamma^(t) = (|r* - rbar_t| / |r* - rbar_0|)^(1/t)`` for ``t = 1..``."""
    rbar = np.asarray(rbar, dtype=float)
    return acr_from_gaps(np.abs(r_star - rbar))


def acr_from_gaps(gaps) -> np.ndarray:
    gaps = np.asarray(gaps, dtype=float)
    if gaps[0] == 0:
        raise DegenerateError("initial gap is zero: already optimal")
    t = np.arange(1, gaps.size)
    return (gaps[1:] / gaps[0]) ** (1.0 / t)


# --- rates ------------------------------------------------------------------------------


@dataclass
class EigenInit:
    q_max: float
    pi0: np.ndarray  # rank order, zero on the optimal states
    index: int  # rank of the state whose diagonal attains q_max
    fallback: bool = False


def q_max_and_eigen_init(model: TransitionModel) -> EigenInit:
    Q3 = model.Q3
    k = model.k
    S = model.matrix.shape[0]
    if Q3.size == 0:
        raise DegenerateError("every state is optimal")
    d = np.diag(Q3)
    q = float(d.max())
    top = int(np.flatnonzero(d == q)[0])  # strictly larger diagonal above it is impossible
    pi0 = np.zeros(S)
    if not is_upper_triangular(Q3):
        log.warning("Q3 is not upper triangular; using a point mass at the q_max state")
        pi0[k + top] = 1.0
        return EigenInit(q, pi0, k + top, fallback=True)
    v = np.zeros(Q3.shape[0])
    v[top] = 1.0
    for j in range(top - 1, -1, -1):
        v[j] = Q3[j, j + 1: top + 1] @ v[j + 1: top + 1] / (q - d[j])
    if not (np.all(np.isfinite(v)) and np.all(v >= 0)):
        log.warning("eigenvector back-substitution was ill-posed; using a point mass")
        pi0[k + top] = 1.0
        return EigenInit(q, pi0, k + top, fallback=True)
    pi0[k:] = v / v.sum()
    return EigenInit(q, pi0, k + top)


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    min_r2: float = 0.99

    @property
    def reliable(self) -> bool:
        return self.r2 >= self.min_r2

    def checked_slope(self) -> float | None:
        """The slope, or ``None`` when the fit is too poor to assert one."""
        return self.slope if self.reliable else None


def fit_semilog_slope(t, y, min_r2=0.99) -> SlopeFit:
    """Least-squares line through ``(t, log10 y)``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(y) & (y > 0)
    t, y = t[keep], y[keep]
    if t.size < 5:
        raise FitError(f"need at least 5 positive points, got {t.size}")
    z = np.log10(y)
    X = np.column_stack([t, np.ones_like(t)])
    (slope, icpt), *_ = np.linalg.lstsq(X, z, rcond=None)
    resid = z - (slope * t + icpt)
    ss_tot = np.sum((z - z.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum(resid**2) / ss_tot
    return SlopeFit(float(slope), float(icpt), float(r2), min_r2)


@dataclass
class RateReport:
    q_max: float
    gaps: np.ndarray  # t = 0..T
    gamma: np.ndarray  # t = 1..T
    step_ratio: np.ndarray  # gap_t / gap_{t-1}
    predicted_gap: np.ndarray
    gamma_error: float
    ratio_error: float
    fit: SlopeFit | None = None

    def ok(self, tol=1e-10) -> bool:
        return self.gamma_error <= tol and self.ratio_error <= tol

    def to_csv(self) -> str:
        lines = ["t,gap,gamma,predicted_gap"]
        for t in range(self.gaps.size):
            g = "" if t == 0 else repr(float(self.gamma[t - 1]))
            lines.append(f"{t},{float(self.gaps[t])!r},{g},{float(self.predicted_gap[t])!r}")
        return "\n".join(lines) + "\n"


def verify_rate_laws(model: TransitionModel, pi0=None, T=50) -> RateReport:
    """Propagate from ``pi0`` (eigen-init by default) and compare with ``q_max^t``."""
    ei = q_max_and_eigen_init(model)
    if pi0 is None:
        pi0 = ei.pi0
    pis, _ = propagate(model, pi0, T)
    gaps = gap(model.space, pis)
    gamma = acr_from_gaps(gaps)
    ratio = gaps[1:] / gaps[:-1]
    predicted = gaps[0] * ei.q_max ** np.arange(T + 1)
    fit = None
    if T >= 5:
        try:
            fit = fit_semilog_slope(np.arange(T + 1), gaps)
        except FitError:
            fit = None
    return RateReport(
        ei.q_max, gaps, gamma, ratio, predicted,
        float(np.max(np.abs(gamma - ei.q_max))), float(np.max(np.abs(ratio - ei.q_max))), fit,
    )


@dataclass
class EnsembleRateReport:
    L: list
    q_max: np.ndarray
    predicted_q_max: np.ndarray  # q_max(1) ** L
    slopes: np.ndarray  # fitted semilog gap slopes
    fits: list = field(default_factory=list)

    @property
    def q_error(self) -> float:
        return float(np.max(np.abs(self.q_max - self.predicted_q_max)))

    @property
    def slope_ratio(self) -> np.ndarray:
        """``slope(L) / slope(1)``; equals ``L`` under the power law."""
        return self.slopes / self.slopes[0]

    @property
    def slope_rel_error(self) -> float:
        L = np.asarray(self.L, dtype=float)
        return float(np.max(np.abs(self.slope_ratio - L / L[0]) / (L / L[0])))


def ensemble_rate_law(space: StateSpace, policy, Ls=(1, 2, 3), T=50, init="eigen", fit_from=0) -> EnsembleRateReport:
    """Identical-agent ensembles: ``q_max(L)`` and semilog gap slopes per ``L``.

    ``init`` is ``"eigen"`` (per-L eigen-init) or ``"uniform"`` (the law of the
    first example state under a uniform grid start); slopes are fitted on
    ``t >= fit_from``.
    """
    Ls = list(Ls)
    qs, slopes, fits = [], [], []
    for L in Ls:
        model = build_multi_transition(space, [policy] * L, SamplerKind.ELITIST)
        ei = q_max_and_eigen_init(model)
        pi0 = ei.pi0 if init == "eigen" else initial_distribution(space, SamplerKind.ELITIST)
        pis, _ = propagate(model, pi0, T)
        gaps = gap(space, pis)
        t = np.arange(T + 1)
        fit = fit_semilog_slope(t[fit_from:], gaps[fit_from:])
        qs.append(ei.q_max)
        slopes.append(fit.slope)
        fits.append(fit)
    qs = np.array(qs)
    L0 = Ls[0]
    pred = (qs[0] ** (1.0 / L0)) ** np.array(Ls, dtype=float) if L0 != 1 else qs[0] ** np.array(Ls, dtype=float)
    return EnsembleRateReport(Ls, qs, pred, np.array(slopes), fits)


# --- Monte-Carlo cross-check --------------------------------------------------------------


@dataclass
class DivergenceReport:
    """Empirical vs propagated occupancy with exact binomial bands.

    A cell ``(t, s)`` passes when its count lies inside the central
    ``n_sigma``-equivalent coverage interval of ``Binomial(N, pi_t[s])``.
    """

    empirical: np.ndarray  # (T+1, S) rank order, frequencies
    predicted: np.ndarray
    N: int
    lower: np.ndarray  # band on counts
    upper: np.ndarray
    n_sigma: float = 3.0

    @property
    def counts(self) -> np.ndarray:
        return np.rint(self.empirical * self.N).astype(np.int64)

    @property
    def outside(self) -> np.ndarray:
        c = self.counts
        return (c < self.lower) | (c > self.upper)

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.empirical - self.predicted)))

    @property
    def z(self) -> np.ndarray:
        sd = np.sqrt(self.predicted * (1 - self.predicted) / self.N)
        diff = self.empirical - self.predicted
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(sd > 0, diff / sd, np.where(np.abs(diff) > 1e-12, np.inf, 0.0))

    @property
    def exceedances(self) -> int:
        return int(np.count_nonzero(self.outside))

    @property
    def n_tests(self) -> int:
        """Cells with a non-degenerate band (0 < pi < 1)."""
        return int(np.count_nonzero((self.predicted > 0) & (self.predicted < 1)))

    @property
    def expected_false_exceedances(self) -> float:
        return self.n_tests * 2 * stats.norm.sf(self.n_sigma)

    @property
    def passed(self) -> bool:
        return self.exceedances == 0

    def worst(self):
        z = np.abs(self.z)
        t, s = np.unravel_index(np.argmax(z), z.shape)
        return int(t), int(s), float(self.z[t, s])

    def summary(self) -> dict:
        return {
            "N": self.N,
            "T": self.empirical.shape[0] - 1,
            "n_sigma": self.n_sigma,
            "cells": self.n_tests,
            "exceedances": self.exceedances,
            "expected_false_exceedances": self.expected_false_exceedances,
            "max_deviation": self.max_deviation,
            "passed": self.passed,
        }


def binomial_band(p, N, n_sigma=3.0):
    """Central count interval of ``Binomial(N, p)`` with the coverage of +-n_sigma."""
    tail = stats.norm.sf(n_sigma)
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    lo = stats.binom.ppf(tail, N, p)
    hi = stats.binom.isf(tail, N, p)
    return np.nan_to_num(lo, nan=0.0).astype(np.int64), np.nan_to_num(hi, nan=float(N)).astype(np.int64)


def monte_carlo_validate(model: TransitionModel, policies, N=100_000, T=50, seed=0, pi0=None,
                         n_sigma=3.0, batch=25_000) -> DivergenceReport:
    """Simulate ``N`` optimizer trajectories driven by ``policies`` and compare
    their state occupancy with matrix propagation of ``model``.

    Trajectories start from the sampler applied to a uniform grid population.
    Pass policies that differ from the ones behind ``model`` for a negative control.
    """
    space = model.space
    g = space.grid
    S = space.size
    lifo = model.sampler is SamplerKind.LIFO
    cdfs = np.stack([p.cdf if hasattr(p, "cdf") else np.cumsum(np.asarray(p, dtype=float).T, axis=1)
                     for p in policies])
    L = cdfs.shape[0]
    rng = np.random.default_rng(seed)
    counts = np.zeros((T + 1, S), dtype=np.int64)
    if pi0 is None:
        pi0 = initial_distribution(space, model.sampler)
    for lo in range(0, N, batch):
        n = min(batch, N - lo)
        init = space.order[rng.choice(S, size=n, p=pi0)]
        u = rng.random((T, n, L))
        counts += kernels.simulate_chain(cdfs, init, u, space.action_rewards, g.P, g.n_actions, lifo)
    pred, _ = propagate(model, pi0, T)
    lower, upper = binomial_band(pred, N, n_sigma)
    return DivergenceReport(counts[:, space.order] / N, pred, N, lower, upper, n_sigma)
