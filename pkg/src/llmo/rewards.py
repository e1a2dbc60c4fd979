"""Wireless power-control rewards.

Rates are in nats (natural log).  Channel gains enter as
``G[j, d] = P_tx |h_jd|^2``, the gain from transmitter ``j`` to receiver ``d``.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, CapacityError, ModelError


def dbm_to_watt(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float)) + 30.0


def db_to_linear(v_db):
    return 10.0 ** (np.asarray(v_db, dtype=float) / 10.0)


def rayleigh_channels(shape, seed) -> np.ndarray:
    """i.i.d. CN(0, 1) draws."""
    rng = np.random.default_rng(seed)
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _unit_box(x, D):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != D:
        raise BoundsError(f"expected {D} power ratios, got shape {x.shape}")
    if not np.all(np.isfinite(x)) or np.any(x < 0) or np.any(x > 1):
        raise BoundsError("power ratios must lie in [0, 1]")
    return x


# --- interference channel ---------------------------------------------------------------


@dataclass
class IfcModel:
    H: np.ndarray  # (D, D) complex, H[j, d] from transmitter j to receiver d
    P_tx: float = 10.0
    P_fix: float = 1.0

    def __post_init__(self):
        H = np.asarray(self.H)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("H must be a square matrix")
        if not np.all(np.isfinite(H)):
            raise ValueError("H must be finite")
        if not (self.P_tx > 0 and self.P_fix > 0):
            raise ValueError("P_tx and P_fix must be positive")
        self.H = H

    @property
    def D(self) -> int:
        return self.H.shape[0]

    @property
    def gains(self) -> np.ndarray:
        return self.P_tx * np.abs(self.H) ** 2

    @classmethod
    def rayleigh(cls, D, seed, **kw):
        return cls(rayleigh_channels((D, D), seed), **kw)


def ifc_rates(x, model: IfcModel) -> np.ndarray:
    """Per-link rates ``f_d``; ``x`` may be ``(D,)`` or ``(n, D)``."""
    x = _unit_box(x, model.D)
    G = model.gains
    direct = np.diag(G) * x
    interference = x @ G - direct  # sum_{j != d} G[j, d] x_j
    return np.log1p(direct / (1.0 + interference))


def ifc_se(x, model: IfcModel):
    return ifc_rates(x, model).sum(axis=-1)


def ifc_ee(x, model: IfcModel):
    x = np.asarray(x, dtype=float)
    return (ifc_rates(x, model) / (model.P_fix + model.P_tx * x)).sum(axis=-1)


# --- broadcast channel ---------------------------------------------------------------------


@dataclass
class BcModel:
    h: np.ndarray  # (D,) complex
    P_tx: float = 10.0
    penalty: float = -1000.0

    def __post_init__(self):
        self.h = np.asarray(self.h).reshape(-1)
        if not self.P_tx > 0:
            raise ValueError("P_tx must be positive")

    @property
    def D(self) -> int:
        return self.h.size

    @property
    def gains(self) -> np.ndarray:
        return self.P_tx * np.abs(self.h) ** 2

    @classmethod
    def rayleigh(cls, D, seed, **kw):
        return cls(rayleigh_channels(D, seed), **kw)


def bc_rates(x, model: BcModel) -> np.ndarray:
    x = _unit_box(x, model.D)
    g = model.gains
    others = x.sum(axis=-1, keepdims=True) - x
    return np.log1p(g * x / (1.0 + g * others))


def bc_se(x, model: BcModel):
    return bc_rates(x, model).sum(axis=-1)


def sum_power_violation(x):
    return np.maximum(0.0, np.asarray(x, dtype=float).sum(axis=-1) - 1.0)


def bc_penalized(x, model: BcModel):
    se = bc_se(x, model)
    return np.where(sum_power_violation(x) > 0, model.penalty, se)[()]


# --- massive MIMO -------------------------------------------------------------------------------


@dataclass
class MmimoModel:
    """Cell-average energy efficiency of a multi-user MRT downlink.

    Channels are i.i.d. Rayleigh scaled by ``beta`` (large-scale gain); the
    estimate is ``h_hat = rho (h + e)`` with ``rho = beta K p_ul / (beta K p_ul + s2)``
    and ``e ~ CN(0, s2 / (K p_ul))``.  Power is
    ``P0 + c_M M + c_K K + c_p p_dl[W] + c_r sum_k f_k``.
    """

    C: int = 1800
    noise_dbm: float = -96.0
    p_ul_dbm: float = 23.0
    beta_db: float = -110.0
    M_max: int = 256
    K_max: int = 256
    p_min_dbm: float = 0.0
    p_max_dbm: float = 50.0
    n_samples: int = 20
    P0: float = 18.0
    c_M: float = 1.0
    c_K: float = 0.1
    c_p: float = 1 / 0.39
    c_r: float = 1.15

    @property
    def bounds(self):
        return np.array([1.0, 1.0, self.p_min_dbm]), np.array([float(self.M_max), float(self.K_max), self.p_max_dbm])


def mmimo_rates(M, K, p_dl_dbm, model: MmimoModel, rng) -> np.ndarray:
    """Per-user rates ``(n_samples, K)`` for one draw of channels and estimates."""
    n = model.n_samples
    beta = db_to_linear(model.beta_db)
    s2 = dbm_to_watt(model.noise_dbm)
    p_ul = dbm_to_watt(model.p_ul_dbm)
    p = dbm_to_watt(p_dl_dbm) / K
    cplx = lambda: (rng.standard_normal((n, M, K)) + 1j * rng.standard_normal((n, M, K))) / np.sqrt(2.0)
    H = np.sqrt(beta) * cplx()
    E = np.sqrt(s2 / (K * p_ul)) * cplx()
    rho = beta * K * p_ul / (beta * K * p_ul + s2)
    Hhat = rho * (H + E)
    W = Hhat / np.linalg.norm(Hhat, axis=1, keepdims=True)  # unit-norm MRT precoders
    G = np.abs(np.einsum("nmk,nmj->nkj", H.conj(), W)) ** 2  # G[k, j] = |h_k^H w_j|^2
    signal = p * np.einsum("nkk->nk", G)
    interference = p * G.sum(axis=2) - signal
    return (1.0 - K / model.C) * np.log1p(signal / (s2 + interference))


def mmimo_ee(x, model: MmimoModel, seed=0) -> float:
    """Monte-Carlo cell-average EE for ``x = [M, K, p_dl (dBm)]``.

    ``M`` and ``K`` are rounded to the nearest integer.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != 3:
        raise BoundsError("x must be [M, K, p_dl]")
    M, K = int(round(x[0])), int(round(x[1]))
    p_dl = float(x[2])
    if K > model.C:
        raise ModelError(f"K={K} exceeds the coherence block C={model.C}")
    if not 1 <= K <= M:
        raise ModelError(f"need 1 <= K <= M, got M={M}, K={K}")
    if M > model.M_max or K > model.K_max or p_dl > model.p_max_dbm or p_dl < model.p_min_dbm:
        raise BoundsError(f"x={x.tolist()} outside the model bounds")
    if K == model.C:
        return 0.0
    rng = np.random.default_rng(seed)
    rates = mmimo_rates(M, K, p_dl, model, rng)
    sum_rate = rates.sum(axis=1)
    power = model.P0 + model.c_M * M + model.c_K * K + model.c_p * dbm_to_watt(p_dl) + model.c_r * sum_rate
    return float(np.mean(sum_rate / power))


# --- grid tables ------------------------------------------------------------------------------


@dataclass
class GridTable:
    actions: np.ndarray  # (A, D), row a = grid action index a
    rewards: np.ndarray  # (A,)
    argmax: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def best(self) -> float:
        return float(self.rewards.max())


def grid_reward_table(reward, levels, D, x_min=0.0, x_max=1.0, cap=1_000_000, rtol=1e-12) -> GridTable:
    """Rewards at every grid point and the set of global maximisers."""
    if levels**D > cap:
        raise CapacityError(f"{levels}^{D} grid points exceed the cap of {cap}")
    lo = np.broadcast_to(np.asarray(x_min, dtype=float), (D,))
    hi = np.broadcast_to(np.asarray(x_max, dtype=float), (D,))
    k = np.stack(np.meshgrid(*[np.arange(levels)] * D, indexing="ij"), axis=-1).reshape(-1, D)
    X = lo + k * (hi - lo) / (levels - 1)
    r = np.array([float(reward(x)) for x in X])
    top = r.max()
    argmax = np.flatnonzero(r >= top - rtol * max(1.0, abs(top)))
    return GridTable(X, r, argmax)


# --- fixtures ------------------------------------------------------------------------------------


def save_channels(path, H):
    """Persist a complex channel array as ``.npz`` or as ``.csv`` (flat real/imag columns)."""
    H = np.asarray(H, dtype=complex)
    path = os.fspath(path)
    if path.endswith(".npz"):
        np.savez(path, real=H.real, imag=H.imag, shape=np.array(H.shape))
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["# shape"] + list(H.shape))
        w.writerow(["real", "imag"])
        for z in H.reshape(-1):
            w.writerow([repr(float(z.real)), repr(float(z.imag))])


def load_channels(path) -> np.ndarray:
    path = os.fspath(path)
    if path.endswith(".npz"):
        with np.load(path) as f:
            return (f["real"] + 1j * f["imag"]).reshape(tuple(f["shape"]))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    shape = tuple(int(v) for v in rows[0][1:])
    vals = np.array([[float(a), float(b)] for a, b in rows[2:]])
    return (vals[:, 0] + 1j * vals[:, 1]).reshape(shape)
