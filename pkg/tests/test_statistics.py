import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from randgas import statistics as S
from randgas.dynamics import ParticleSet
from randgas.geometry import Box3, ContactParams


def gaussian_states(rng, n_snap=20, K=400, theta=1.3):
    return rng.normal(scale=math.sqrt(theta), size=(n_snap, K, 3))


def test_temperature(rng):
    v = rng.normal(size=(1000, 3))
    assert S.temperature(v) == pytest.approx(np.sum(v * v) / (3 * 1000))
    st_ = ParticleSet(np.zeros((1000, 3)), v, Box3.cube(10.0))
    assert S.temperature(st_) == S.temperature(v)


def test_temperature_zero_warns(caplog):
    with caplog.at_level(logging.WARNING):
        assert S.temperature(np.zeros((5, 3))) == 0.0
    assert "zero" in caplog.text


def test_histogram_fill_and_merge():
    h = S.Histogram1D.empty([0, 1, 2, 3]).fill([0.5, 1.5, 1.6, 9.0])
    assert h.counts.tolist() == [1, 2, 0]
    g = S.Histogram1D.empty([0, 1, 2, 3]).fill([2.5])
    m = h.merge(g)
    assert m.counts.tolist() == [1, 2, 1] and m.weight_total == 4
    with pytest.raises(ValueError):
        h.merge(S.Histogram1D.empty([0, 1]))
    with pytest.raises(ValueError):
        S.Histogram1D.empty([0, 0, 1])


def test_maxwellian_distance(rng):
    v = gaussian_states(rng, theta=1.3)
    d = S.maxwellian_distance(v, 1.3)
    assert d < S.ks_critical(v.size, 0.01)
    assert S.maxwellian_distance(rng.uniform(-2, 2, size=(5, 400, 3)), 1.3) > 0.05
    assert S.ks_critical(10**4, 0.01) == pytest.approx(1.628 / 100, rel=0.01)


def test_velocity_kl(rng):
    v = gaussian_states(rng)
    kl, se, n = S.velocity_kl_estimate(v, 1.3)
    floor = S.kl_bias_floor(n, np.random.default_rng(1))
    assert n == v.size and se > 0
    assert kl < floor + 4 * se
    assert S.velocity_kl(rng.uniform(-2, 2, size=(5, 400, 3)), 1.3) > 0.1


def test_windowed_kl_shapes(rng):
    v = gaussian_states(rng, n_snap=30)
    t = np.arange(30.0)
    tm, kl, se, n = S.windowed_kl(t, v, 10.0)
    assert np.allclose(tm, [5, 15, 25])
    assert np.all(n == 10 * 400 * 3)


def test_pair_correlation_ideal_gas(rng):
    box = Box3.cube(12.0)
    x = rng.uniform(0, 12.0, size=(40, 500, 3))
    g = S.pair_correlation(x, ContactParams(), r_max=3.0, n_bins=10, box=box)
    assert np.all(np.abs(g.g_values - 1) < 5 * g.stderr())
    assert g.r_mid[0] == pytest.approx(0.15)


def test_pair_correlation_rejects_large_rmax(rng):
    with pytest.raises(ValueError):
        S.pair_correlation(rng.uniform(0, 4, size=(2, 10, 3)), ContactParams(), r_max=3.0, box=Box3.cube(4.0))


def test_overlap_ratio_ideal_gas_contains_one(rng):
    box = Box3.cube(10.0)
    x = rng.uniform(0, 10.0, size=(200, 300, 3))
    est = S.overlap_ratio(x, ContactParams(lam=0.0), box=box)
    assert est.contains(1.0)
    assert not est.wide
    assert est.ci_low < est.ratio < est.ci_high


def test_overlap_ratio_few_samples_flagged(rng):
    x = rng.uniform(0, 10.0, size=(2, 20, 3))
    est = S.overlap_ratio(x, ContactParams(), box=Box3.cube(10.0))
    assert est.wide


def random_instance(rng, shape):
    F = rng.random(shape) + 0.01
    F /= F.sum()
    psi = rng.random(shape) + 0.1
    ps = [rng.random(n) + 0.01 for n in shape]
    ps = [p / p.sum() for p in ps]
    return F, psi, ps


def test_kl_identity_random_instances(rng):
    for _ in range(100):
        shape = tuple(rng.integers(2, 6, size=rng.integers(2, 4)))
        lhs, rhs, err = S.kl_marginal_identity_check(*random_instance(rng, shape))
        assert err < 1e-12


@given(st.integers(0, 2**32 - 1))
def test_kl_identity_property(seed):
    rng = np.random.default_rng(seed)
    F, psi, ps = random_instance(rng, (3, 4))
    F[0, 0] = 0.0
    F /= F.sum()
    assert S.kl_marginal_identity_check(F, psi, ps)[2] < 1e-12


def test_kl_identity_undefined():
    F = np.full((2, 2), 0.25)
    with pytest.raises(ValueError):
        S.kl_marginal_identity_check(F, np.ones((2, 2)), [np.array([1.0, 0.0]), np.array([0.5, 0.5])])
    with pytest.raises(ValueError):
        S.kl_marginal_identity_check(F, np.ones((2, 2)), [np.array([0.5, 0.5])])


def test_noble_gas_fit():
    table = S.NobleGasTable.read()
    assert table.element == ["He", "Ne", "Ar", "Kr", "Xe", "Rn"]
    slope, intercept, res = S.noble_gas_fit(table)
    assert slope > 0
    assert table.element[int(np.argmax(np.abs(res)))] == "Ne"
    # least-squares normal equations
    m = np.cbrt(table.mass_amu)
    assert abs(res.sum()) < 1e-9 and abs(res @ m) < 1e-8


def test_noble_gas_fit_from_file(tmp_path):
    path = tmp_path / "gases.csv"
    path.write_text("# test\nelement,mass_amu,diameter_pm\nA,1,10\nB,8,20\nC,27,30\n")
    slope, intercept, res = S.noble_gas_fit(S.NobleGasTable.read(path))
    assert slope == pytest.approx(10.0) and intercept == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(res, 0, atol=1e-12)


def test_noble_gas_degenerate():
    with pytest.raises(np.linalg.LinAlgError):
        S.noble_gas_fit(S.NobleGasTable(["A", "B", "C"], [4, 4, 4], [1, 2, 3]))
    with pytest.raises(ValueError):
        S.NobleGasTable(["A"], [-1], [1])
