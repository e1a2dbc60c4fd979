"""Reference numpy implementation of the grid-chain kernels.

Every function mirrors one in ``_kernels.pyx`` argument for argument; the two
are checked against each other in the test-suite.
"""

from __future__ import annotations

import itertools

import numpy as np


def _digits(codes, P, A):
    powers = A ** np.arange(P - 1, -1, -1, dtype=np.int64)
    return (np.asarray(codes, dtype=np.int64)[..., None] // powers) % A


def _encode(actions, A):
    P = actions.shape[-1]
    powers = A ** np.arange(P - 1, -1, -1, dtype=np.int64)
    return (actions * powers).sum(axis=-1)


def select_codes(new_codes, ex_codes, action_rewards, P, A, lifo):
    """Example-state codes chosen by the sampler from ``[new block; example block]``.

    ``new_codes`` is ``(N, L)`` (one population per agent), ``ex_codes`` is ``(N,)``.
    """
    new_codes = np.asarray(new_codes, dtype=np.int64)
    ex_codes = np.asarray(ex_codes, dtype=np.int64)
    N, L = new_codes.shape
    if lifo and L == 1:
        return new_codes[:, 0].copy()
    rows = _digits(new_codes, P, A).reshape(N, L * P)
    if not lifo:
        rows = np.concatenate([rows, _digits(ex_codes, P, A)], axis=1)
    r = np.asarray(action_rewards)[rows]
    order = np.argsort(-r, axis=1, kind="stable")[:, :P]
    return _encode(np.take_along_axis(rows, order, axis=1), A)


def exact_transition(lams, action_rewards, P, A, lifo):
    """Column-stochastic matrix over state codes, summing over all agent outputs.

    ``lams[l, g, j]`` is the probability that agent ``l`` emits population ``g``
    when prompted with examples ``j``.
    """
    lams = np.asarray(lams, dtype=float)
    L, S, _ = lams.shape
    M = np.zeros((S, S))
    for j in range(S):
        supports = [np.flatnonzero(lams[l, :, j]) for l in range(L)]
        tuples = np.array(list(itertools.product(*supports)), dtype=np.int64).reshape(-1, L)
        prob = np.ones(len(tuples))
        for l in range(L):
            prob *= lams[l, tuples[:, l], j]
        out = select_codes(tuples, np.full(len(tuples), j), action_rewards, P, A, lifo)
        np.add.at(M[:, j], out, prob)
    return M


def _sample(cdf_rows, last_pos, u):
    g = (cdf_rows <= u[:, None]).sum(axis=1)
    return np.minimum(g, last_pos)


def simulate_chain(cdfs, init_codes, uniforms, action_rewards, P, A, lifo):
    """State-occupancy counts ``(T+1, S)`` of ``N`` independent trajectories.

    ``cdfs[l, j, :]`` is agent ``l``'s cumulative successor distribution given
    examples ``j``; ``uniforms`` has shape ``(T, N, L)``.
    """
    cdfs = np.asarray(cdfs, dtype=float)
    L, S, _ = cdfs.shape
    T, N, _ = uniforms.shape
    last_pos = last_positive(cdfs)
    cur = np.asarray(init_codes, dtype=np.int64).copy()
    counts = np.zeros((T + 1, S), dtype=np.int64)
    counts[0] = np.bincount(cur, minlength=S)
    chunk = max(1, 20_000_000 // max(S, 1))
    for t in range(T):
        nxt = np.empty_like(cur)
        for lo in range(0, N, chunk):
            hi = min(N, lo + chunk)
            c = cur[lo:hi]
            new = np.empty((hi - lo, L), dtype=np.int64)
            for l in range(L):
                new[:, l] = _sample(cdfs[l, c], last_pos[l, c], uniforms[t, lo:hi, l])
            nxt[lo:hi] = select_codes(new, c, action_rewards, P, A, lifo)
        cur = nxt
        counts[t + 1] = np.bincount(cur, minlength=S)
    return counts


def last_positive(cdfs):
    """Index of the last successor with positive probability, per ``(l, j)``."""
    pmf = np.diff(cdfs, axis=2, prepend=0.0)
    S = cdfs.shape[2]
    rev = np.argmax(pmf[:, :, ::-1] > 0, axis=2)
    return (S - 1 - rev).astype(np.int64)
