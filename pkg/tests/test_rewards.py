import math

import numpy as np
import pytest

from llmo.errors import BoundsError, CapacityError, ModelError
from llmo.rewards import (
    BcModel,
    IfcModel,
    MmimoModel,
    bc_penalized,
    bc_se,
    dbm_to_watt,
    grid_reward_table,
    ifc_ee,
    ifc_rates,
    ifc_se,
    load_channels,
    mmimo_ee,
    rayleigh_channels,
    save_channels,
    sum_power_violation,
    watt_to_dbm,
)

LN11 = math.log(11.0)


def test_ifc_examples():
    one = IfcModel(np.eye(1))
    assert ifc_se([0.0], one) == 0 and ifc_ee([0.0], one) == 0
    assert ifc_se([1.0], one) == pytest.approx(LN11, abs=1e-15)
    assert ifc_ee([1.0], one) == pytest.approx(LN11 / 11, abs=1e-15)
    assert ifc_se([1.0, 1.0], IfcModel(np.eye(2))) == pytest.approx(2 * LN11, abs=1e-12)


def test_ifc_against_loop_oracle():
    H = rayleigh_channels((3, 3), 4)
    m = IfcModel(H, P_tx=7.0, P_fix=2.0)
    x = np.array([0.3, 0.9, 0.5])
    g = 7.0 * np.abs(H) ** 2
    f = [math.log(1 + g[d, d] * x[d] / (1 + sum(g[j, d] * x[j] for j in range(3) if j != d))) for d in range(3)]
    assert np.allclose(ifc_rates(x, m), f, rtol=1e-14)
    assert ifc_ee(x, m) == pytest.approx(sum(fd / (2 + 7 * xd) for fd, xd in zip(f, x)), rel=1e-14)
    X = np.vstack([x, x[::-1]])
    assert np.allclose(ifc_se(X, m), [ifc_se(x, m), ifc_se(x[::-1], m)])


def test_bounds_checked():
    with pytest.raises(BoundsError):
        ifc_se([1.2], IfcModel(np.eye(1)))
    with pytest.raises(BoundsError):
        bc_se([0.5], BcModel(np.ones(2)))


def test_bc_examples():
    m = BcModel(np.ones(2))
    assert bc_se([1.0, 0.0], m) == pytest.approx(LN11, abs=1e-15)
    assert bc_se([0.5, 0.5], m) == pytest.approx(2 * math.log(1 + 5 / 6), abs=1e-15)
    assert round(bc_se([0.5, 0.5], m), 4) == 1.2123
    assert sum_power_violation([0.6, 0.6]) == pytest.approx(0.2)
    assert bc_penalized([0.6, 0.6], m) == -1000
    assert bc_penalized([0.5, 0.5], m) == bc_se([0.5, 0.5], m)


def test_units():
    assert dbm_to_watt(30) == pytest.approx(1.0)
    assert dbm_to_watt(-96) == pytest.approx(10 ** (-12.6))
    assert watt_to_dbm(dbm_to_watt(23.0)) == pytest.approx(23.0)


def test_rayleigh_moments_and_seed():
    h = rayleigh_channels(100_000, 0)
    n = h.size
    assert abs(h.real.mean()) < 3 * np.sqrt(0.5 / n) and abs(h.imag.mean()) < 3 * np.sqrt(0.5 / n)
    p = np.abs(h) ** 2  # Exp(1): variance 1
    assert abs(p.mean() - 1) < 3 / np.sqrt(n)
    assert np.array_equal(rayleigh_channels((2, 2), 5), rayleigh_channels((2, 2), 5))


def test_channel_files_round_trip(tmp_path):
    H = rayleigh_channels((3, 3), 1)
    for name in ("h.npz", "h.csv"):
        save_channels(tmp_path / name, H)
        assert np.allclose(load_channels(tmp_path / name), H, rtol=0, atol=1e-15)


def test_mmimo_edges():
    m = MmimoModel(C=4, n_samples=5)
    assert mmimo_ee([8, 4, 30], m) == 0.0
    with pytest.raises(ModelError):
        mmimo_ee([8, 5, 30], m)
    with pytest.raises(ModelError):
        mmimo_ee([4, 6, 30], MmimoModel())
    with pytest.raises(BoundsError):
        mmimo_ee([300, 6, 30], MmimoModel())


def test_mmimo_low_power_vanishes_and_is_seeded():
    m = MmimoModel(n_samples=10, p_min_dbm=-200)
    lo = mmimo_ee([64, 8, -150], m)
    hi = mmimo_ee([64, 8, 30], m)
    assert 0 <= lo < 1e-6 * hi
    assert mmimo_ee([64, 8, 30], m, seed=3) == mmimo_ee([64, 8, 30], m, seed=3)
    assert mmimo_ee([64.4, 7.6, 30], m) == hi


def test_grid_table_examples():
    t = grid_reward_table(lambda x: x[0], 3, 1)
    assert t.argmax.tolist() == [2]
    t = grid_reward_table(lambda x: -abs(abs(x[0] - 0.5) - 0.25), 5, 1)
    assert t.argmax.tolist() == [1, 3]
    with pytest.raises(CapacityError):
        grid_reward_table(lambda x: 0.0, 101, 3)


def test_grid_argmax_agrees_with_dinkelbach():
    from llmo.baselines import dinkelbach_ee, multi_start

    m = IfcModel(rayleigh_channels((2, 2), 0))
    t = grid_reward_table(lambda x: ifc_ee(x, m), 10, 2)
    ms = multi_start(lambda x0: dinkelbach_ee(m, x0), n_starts=20, seed=0, D=2)
    assert ms.value >= t.best - 1e-12
    # the continuous optimum lies within one grid cell of the grid argmax
    assert np.max(np.abs(ms.x - t.actions[t.argmax[0]])) <= 1 / 9 + 1e-12
