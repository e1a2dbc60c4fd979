# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid-chain kernels; same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

from ._kernels_py import last_positive

cnp.import_array()


cdef inline void _decode(long long code, int P, long long A, long long* out) noexcept nogil:
    cdef int p
    for p in range(P - 1, -1, -1):
        out[p] = code % A
        code //= A


cdef inline long long _select(long long* rows, int n_rows, int P, long long A,
                              const double[::1] rewards, char* used) noexcept nogil:
    # stable top-P by reward: earlier rows win ties
    cdef int k, i, best
    cdef double r_best
    cdef long long code = 0
    for i in range(n_rows):
        used[i] = 0
    for k in range(P):
        best = -1
        for i in range(n_rows):
            if used[i]:
                continue
            if best < 0 or rewards[rows[i]] > r_best:
                best = i
                r_best = rewards[rows[i]]
        used[best] = 1
        code = code * A + rows[best]
    return code


cdef long long _outcome(const long long* new_codes, int L, long long ex_code, int P, long long A,
                        bint lifo, const double[::1] rewards,
                        long long* rows, char* used) noexcept nogil:
    cdef int l, n_rows
    if lifo and L == 1:
        return new_codes[0]
    for l in range(L):
        _decode(new_codes[l], P, A, rows + l * P)
    n_rows = L * P
    if not lifo:
        _decode(ex_code, P, A, rows + n_rows)
        n_rows += P
    return _select(rows, n_rows, P, A, rewards, used)


def select_codes(new_codes, ex_codes, action_rewards, int P, long long A, bint lifo):
    cdef long long[:, ::1] nc = np.ascontiguousarray(new_codes, dtype=np.int64)
    cdef long long[::1] ec = np.ascontiguousarray(ex_codes, dtype=np.int64)
    cdef const double[::1] rw = np.ascontiguousarray(action_rewards, dtype=np.float64)
    cdef Py_ssize_t N = nc.shape[0], n
    cdef int L = nc.shape[1]
    out = np.empty(N, dtype=np.int64)
    cdef long long[::1] o = out
    cdef long long[::1] rows = np.empty((L + 1) * P, dtype=np.int64)
    cdef char[::1] used = np.empty((L + 1) * P, dtype=np.int8)
    with nogil:
        for n in range(N):
            o[n] = _outcome(&nc[n, 0], L, ec[n], P, A, lifo, rw, &rows[0], &used[0])
    return out


def exact_transition(lams, action_rewards, int P, long long A, bint lifo):
    cdef const double[:, :, ::1] lam = np.ascontiguousarray(lams, dtype=np.float64)
    cdef const double[::1] rw = np.ascontiguousarray(action_rewards, dtype=np.float64)
    cdef int L = lam.shape[0]
    cdef Py_ssize_t S = lam.shape[1], j, l, k, n_sup
    M = np.zeros((S, S), dtype=np.float64)
    cdef double[:, ::1] m = M
    support_np = np.zeros((L, S), dtype=np.int64)
    counts_np = np.zeros(L, dtype=np.int64)
    cdef long long[:, ::1] support = support_np
    cdef long long[::1] n_support = counts_np
    cdef long long[::1] idx = np.zeros(L, dtype=np.int64)
    cdef long long[::1] gen = np.zeros(L, dtype=np.int64)
    cdef long long[::1] rows = np.empty((L + 1) * P, dtype=np.int64)
    cdef char[::1] used = np.empty((L + 1) * P, dtype=np.int8)
    cdef double prob
    cdef long long out
    cdef bint done
    with nogil:
        for j in range(S):
            for l in range(L):
                n_sup = 0
                for k in range(S):
                    if lam[l, k, j] > 0.0:
                        support[l, n_sup] = k
                        n_sup += 1
                n_support[l] = n_sup
                idx[l] = 0
            done = False
            for l in range(L):
                if n_support[l] == 0:
                    done = True
            while not done:
                prob = 1.0
                for l in range(L):
                    gen[l] = support[l, idx[l]]
                    prob *= lam[l, gen[l], j]
                out = _outcome(&gen[0], L, j, P, A, lifo, rw, &rows[0], &used[0])
                m[out, j] += prob
                # odometer over the agents' supports
                l = L - 1
                while True:
                    idx[l] += 1
                    if idx[l] < n_support[l]:
                        break
                    idx[l] = 0
                    if l == 0:
                        done = True
                        break
                    l -= 1
    return M


cdef inline long long _sample(const double[::1] cdf_row, long long last_pos, double u) noexcept nogil:
    # first index with cdf > u
    cdef long long lo = 0, hi = cdf_row.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf_row[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    if lo > last_pos:
        lo = last_pos
    return lo


def simulate_chain(cdfs, init_codes, uniforms, action_rewards, int P, long long A, bint lifo):
    cdef const double[:, :, ::1] cdf = np.ascontiguousarray(cdfs, dtype=np.float64)
    cdef const double[:, :, ::1] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef const double[::1] rw = np.ascontiguousarray(action_rewards, dtype=np.float64)
    cdef const long long[:, ::1] last = np.ascontiguousarray(last_positive(np.asarray(cdfs)), dtype=np.int64)
    cdef int L = cdf.shape[0]
    cdef Py_ssize_t S = cdf.shape[1], T = u.shape[0], N = u.shape[1], t, n, l
    cur_np = np.array(init_codes, dtype=np.int64, copy=True)
    cdef long long[::1] cur = cur_np
    counts = np.zeros((T + 1, S), dtype=np.int64)
    cdef long long[:, ::1] c = counts
    cdef long long[::1] gen = np.zeros(L, dtype=np.int64)
    cdef long long[::1] rows = np.empty((L + 1) * P, dtype=np.int64)
    cdef char[::1] used = np.empty((L + 1) * P, dtype=np.int8)
    with nogil:
        for n in range(N):
            c[0, cur[n]] += 1
        for t in range(T):
            for n in range(N):
                for l in range(L):
                    gen[l] = _sample(cdf[l, cur[n]], last[l, cur[n]], u[t, n, l])
                cur[n] = _outcome(&gen[0], L, cur[n], P, A, lifo, rw, &rows[0], &used[0])
                c[t + 1, cur[n]] += 1
    return counts
