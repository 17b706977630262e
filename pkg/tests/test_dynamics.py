import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from randgas import dynamics as D
from randgas.geometry import Box3, ContactParams, mollifier_constant


def small_cfg(**kw):
    base = dict(K=100, volume_fraction=0.02, sigma=1.0, alpha=0.1, theta=1.0, t_end=3.0, seed=11)
    base["lambda"] = kw.pop("lam", 1.0)
    base.update(kw)
    return D.SimConfig.from_dict(base)


def test_pair_intensity_examples():
    p = ContactParams(sigma=1.0, alpha=0.1, lam=1.0)
    assert D.pair_intensity([0, 0, 0], [2, 0, 0], [-1, 0, 0], [1, 0, 0], p) == 0
    # receding pair inside the zone
    assert D.pair_intensity([0, 0, 0], [1, 0, 0], [-1, 0, 0], [1, 0, 0], p) == 0
    h = D.pair_intensity([0, 0, 0], [1, 0, 0], [1, 0, 0], [-1, 0, 0], p)
    assert h == pytest.approx(2 * mollifier_constant() / 0.1 / math.e, rel=1e-14)
    assert h == pytest.approx(16.571, abs=1e-3)
    assert D.pair_intensity([0, 0, 0], [0, 0, 0], [1, 0, 0], [-1, 0, 0], p) == 0


def test_pair_intensity_min_image():
    p = ContactParams()
    box = Box3.cube(10.0)
    h = D.pair_intensity([0.5, 0, 0], [9.5, 0, 0], [-1, 0, 0], [1, 0, 0], p, box)
    assert h == pytest.approx(D.pair_intensity([0, 0, 0], [1, 0, 0], [1, 0, 0], [-1, 0, 0], p))


@given(st.lists(st.floats(-3, 3), min_size=12, max_size=12), st.floats(0.85, 1.15))
def test_intensity_bound_holds(vals, r):
    v = np.array(vals).reshape(4, 3)
    vi, vj = v[0], v[1]
    n = v[2] / max(np.linalg.norm(v[2]), 1e-9)
    E = 0.5 * (vi @ vi + vj @ vj)
    p = ContactParams(lam=2.0)
    h = D.pair_intensity(r * n, np.zeros(3), vi, vj, p)
    assert h <= D.intensity_bound(p, E) * (1 + 1e-12) + 1e-300


def test_pair_event_invariant():
    D.PairEvent(0, 1, 1.0, 2.0)
    with pytest.raises(ValueError):
        D.PairEvent(0, 1, 3.0, 2.0)


def test_init_state_two_particles():
    cfg = D.SimConfig(K=2, contact=ContactParams(), box=Box3.cube(10.0), energy_E=1.0, dt_max=0.05, t_end=0.0)
    s = D.init_state(cfg, np.random.default_rng(0))
    assert np.allclose(s.velocities[0], -s.velocities[1], atol=1e-15)
    assert np.linalg.norm(s.velocities[0]) == pytest.approx(1.0, rel=1e-14)


def test_init_state_shell_and_variance():
    cfg = small_cfg(K=1000)
    s = D.init_state(cfg, np.random.default_rng(3))
    assert np.all(np.abs(s.momentum) < 1e-12 * cfg.K)
    assert s.energy == pytest.approx(cfg.energy_E, rel=1e-14)
    var = s.velocities.var(axis=0)
    assert np.all(np.abs(var / (2 * cfg.energy_E / (3 * cfg.K)) - 1) < 0.1)
    assert np.all((s.positions >= 0) & (s.positions < cfg.box.sides))


def test_config_validation():
    with pytest.raises(ValueError):
        small_cfg(dt_max=1.0)
    cfg = small_cfg()
    assert cfg.dt_max == pytest.approx(0.1 / (2 * math.sqrt(cfg.energy_E)))
    assert cfg.theta == pytest.approx(1.0)


def test_step_free_flight_when_lambda_zero(rng):
    cfg = small_cfg(lam=0.0)
    s = D.init_state(cfg, rng)
    ev = []
    s2 = D.step(s, cfg.dt_max, cfg.contact, rng, events=ev)
    assert ev == []
    assert np.array_equal(s2.velocities, s.velocities)
    assert np.allclose(s2.positions, cfg.box.wrap(s.positions + cfg.dt_max * s.velocities), atol=1e-12)


def test_step_far_apart_pair_is_free_flight(rng):
    box = Box3.cube(20.0)
    pos = np.array([[1.0, 1, 1], [10.0, 10, 10]])
    vel = np.array([[0.5, 0, 0], [-0.5, 0, 0]])
    s = D.ParticleSet(pos, vel, box)
    s2 = D.step(s, 0.05, ContactParams(lam=50.0), rng)
    assert np.array_equal(s2.velocities, vel)


def test_step_rejects_large_dt(rng):
    cfg = small_cfg()
    s = D.init_state(cfg, rng)
    with pytest.raises(ValueError):
        D.step(s, 10 * cfg.dt_max, cfg.contact, rng)


def test_run_trivial_cases():
    rec = D.run(small_cfg(t_end=0.0))
    assert rec.event_count == 0 and rec.n_steps == 0
    rec = D.run(small_cfg(lam=0.0, t_end=1.0))
    assert rec.event_count == 0


def test_run_smoke_conservation():
    rec = D.run(small_cfg(K=100, t_end=5.0))
    assert rec.event_count > 0
    assert rec.final_E_drift < 1e-9
    assert rec.momentum_drift < 1e-9
    assert 0 < rec.max_bound_ratio <= 1.0
    assert len(rec.events) == rec.event_count


def test_run_deterministic():
    a = D.run(small_cfg(t_end=2.0))
    b = D.run(small_cfg(t_end=2.0))
    assert a.events == b.events
    assert np.array_equal(a.final_state.positions, b.final_state.positions)


@pytest.mark.skipif(D.BACKEND != "compiled", reason="compiled kernel not built")
def test_backends_agree_bitwise():
    cfg = small_cfg(K=60, t_end=1.0)
    a = D.run(cfg, backend="compiled")
    b = D.run(cfg, backend="python")
    assert a.events == b.events
    assert np.array_equal(a.final_state.velocities, b.final_state.velocities)
    assert np.array_equal(a.final_state.positions, b.final_state.positions)


def test_ensemble_independent_of_workers():
    cfg = small_cfg(K=40, t_end=1.0, ensemble_size=3)
    one = D.run_ensemble(cfg, threads=1)
    two = D.run_ensemble(cfg, threads=2)
    for a, b in zip(one, two):
        assert a.events == b.events


def test_snapshot_schedule():
    cfg = small_cfg(t_end=2.0)
    rec = D.run(cfg, [D.SnapshotRecorder(0.5)])
    t = rec.observers["snapshots"]["times"]
    assert np.allclose(t, [0, 0.5, 1.0, 1.5, 2.0])


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_pass_through_fraction(lam):
    r = D.pass_through_trials(lam, 20_000, np.random.default_rng(int(lam * 10)))
    assert abs(r.fraction - math.exp(-lam)) < 3 * r.binomial_se


def test_first_jump_matches_inverse_compensator():
    lam = 1.0
    sim = D.pass_through_trials(lam, 10_000, np.random.default_rng(21)).first_jump
    ref = D.first_jump_oracle(lam, 10_000, np.random.default_rng(22))
    res = stats.ks_2samp(sim[~np.isnan(sim)], ref[~np.isnan(ref)])
    assert res.pvalue > 0.01
