import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alrmom import (BatchSampler, HBState, InvalidArgument, MAGState, Schedule, StoConfig,
                    StoOptimizer, alr_mag_step, alr_shb_step, alr_smag_step, alr_smag_wd_step,
                    gen_least_squares, gen_logistic_overlap, gen_logistic_synthetic, hb_step,
                    run_epochs, sgdm_step, sps_max_step)
from alrmom.diagnostics import check_dk_recurrence

NO_BATCH = np.arange(1)


@pytest.fixture(scope="module")
def logreg():
    return gen_logistic_synthetic(120, 6, 0.1, 11)


# -- single steps ----------------------------------------------------------------


def test_alr_smag_step_value():
    cfg = StoConfig(beta=0.5, c=5.0, eta_max=100.0, epsilon=0.0)
    g = np.array([4.0, 0.0])
    state, eta = alr_smag_step(None, MAGState.start(np.zeros(2)), NO_BATCH, cfg, 100.0,
                               fg=(8.0, g))
    assert eta == pytest.approx(0.1, rel=1e-15)
    np.testing.assert_allclose(state.x, [-0.4, 0.0], rtol=1e-15)


def test_alr_smag_step_is_capped():
    cfg = StoConfig(beta=0.5, c=5.0, epsilon=0.0)
    _, eta = alr_smag_step(None, MAGState.start(np.zeros(2)), NO_BATCH, cfg, 0.01,
                           fg=(8.0, np.array([4.0, 0.0])))
    assert eta == 0.01


def test_alr_shb_zero_step_pure_momentum():
    cfg = StoConfig(beta=0.5, c=1.0, epsilon=0.0)
    state = HBState(np.array([0.0]), np.array([2.0]))
    new, eta = alr_shb_step(None, state, NO_BATCH, cfg, math.inf, fg=(2.0, np.array([2.0])))
    assert eta == 0.0 and new.x[0] == -1.0 and not new.truncated


def test_alr_shb_clamps_negative_steps():
    state = HBState(np.array([0.0]), np.array([4.0]))
    fg = (2.0, np.array([2.0]))
    new, eta = alr_shb_step(None, state, NO_BATCH, StoConfig(beta=0.5, epsilon=0.0), math.inf,
                            fg=fg)
    assert eta == 0.0 and new.truncated
    _, eta = alr_shb_step(None, state, NO_BATCH,
                          StoConfig(beta=0.5, epsilon=0.0, clamp=False), math.inf, fg=fg)
    assert eta == pytest.approx(-0.5)


def test_alr_shb_first_step_is_sps():
    cfg = StoConfig(beta=0.7, c=2.0)
    g = np.array([1.0, -3.0])
    _, eta = alr_shb_step(None, HBState.start(np.ones(2)), NO_BATCH, cfg, 0.3, fg=(5.0, g))
    assert eta == min(5.0 / (2.0 * 10.0 + cfg.epsilon), 0.3)


def test_weight_decay_algebra():
    lam, c = 0.0005, 0.3
    cfg = StoConfig(beta=0.9, c=c, weight_decay=lam)
    x = np.array([1.0, -2.0, 0.5])
    d_prev = np.array([0.1, 0.2, -0.3])
    g = np.array([0.4, -0.1, 0.2])
    state = MAGState(x, d_prev)
    new, eta = alr_smag_wd_step(None, state, NO_BATCH, cfg, c, 100.0, fg=(1.3, g))
    d = 0.9 * d_prev + g
    assert eta == pytest.approx(1.3 / (c * float(d @ d) + cfg.epsilon), rel=1e-15)
    np.testing.assert_allclose(new.x, (1 - eta * lam) * x - eta * d, rtol=1e-15)


def test_weight_decay_zero_is_alr_smag():
    cfg = StoConfig(beta=0.9, c=2.0)
    state = MAGState(np.array([1.0, 2.0]), np.array([0.5, 0.5]))
    fg = (0.7, np.array([0.2, -0.4]))
    a, ea = alr_smag_wd_step(None, state, NO_BATCH, cfg, cfg.c, 3.0, fg=fg)
    b, eb = alr_smag_step(None, state, NO_BATCH, cfg, 3.0, fg=fg)
    assert ea == eb
    np.testing.assert_array_equal(a.x, b.x)


def test_weight_decay_at_origin():
    cfg = StoConfig(beta=0.9, c=2.0, weight_decay=0.1)
    state = MAGState(np.zeros(2), np.array([0.5, 0.5]))
    fg = (0.7, np.array([0.2, -0.4]))
    a, _ = alr_smag_wd_step(None, state, NO_BATCH, cfg, 2.0, 3.0, fg=fg)
    b, _ = alr_smag_step(None, state, NO_BATCH, cfg, 3.0, fg=fg)
    np.testing.assert_array_equal(a.x, b.x)


def test_sgd_from_zero_on_logistic(logreg):
    batch = np.arange(0, 120, 7)
    s = sgdm_step(logreg, HBState.start(np.zeros(6)), batch, 1.0, 0.0)
    A, y = logreg.features[batch], logreg.labels[batch]
    np.testing.assert_allclose(s.x, (y[:, None] * A).mean(axis=0) / 2, rtol=1e-14)


def test_sgdm_full_batch_is_hb():
    p = gen_least_squares(8, 20.0, 0)
    state = HBState(np.ones(8), np.zeros(8))
    a = sgdm_step(p, state, np.arange(8), 0.3, 0.6)
    b = hb_step(p, state, 0.3, 0.6)
    np.testing.assert_allclose(a.x, b.x, rtol=1e-14, atol=1e-15)


def test_sgdm_rejects_nonpositive_eta():
    with pytest.raises(InvalidArgument):
        sgdm_step(None, HBState.start([1.0]), NO_BATCH, -1.0, 0.5, fg=(1.0, np.ones(1)))


def test_full_batch_alr_smag_matches_deterministic():
    p = gen_least_squares(10, 50.0, 2)
    cfg = StoConfig(beta=0.8, c=1.0, epsilon=0.0)
    s_sto = s_det = MAGState.start(np.random.default_rng(0).standard_normal(10))
    for _ in range(100):
        s_sto, e1 = alr_smag_step(p, s_sto, np.arange(10), cfg, math.inf)
        s_det, e2 = alr_mag_step(p, s_det, 0.8)
        assert e1 == pytest.approx(e2, rel=1e-10)
    np.testing.assert_allclose(s_sto.x, s_det.x, rtol=1e-9, atol=1e-14)


def test_config_validation():
    with pytest.raises(InvalidArgument):
        StoConfig(c=0.0)
    with pytest.raises(InvalidArgument):
        StoConfig(epsilon=-1.0)
    with pytest.raises(InvalidArgument):
        StoConfig(fstar_policy="guess")
    with pytest.raises(InvalidArgument):
        StoConfig(c=0.5).require_theory_regime()
    StoConfig(c=2.0).require_theory_regime()
    with pytest.raises(InvalidArgument):
        StoOptimizer("sgdm")
    with pytest.raises(InvalidArgument):
        StoOptimizer("adam")


# -- sampler -------------------------------------------------------------------


@given(st.integers(1, 300), st.integers(1, 64), st.integers(0, 2**31))
def test_sampler_epoch_is_permutation(n, batch, seed):
    sampler = BatchSampler(n, batch, seed)
    for _ in range(2):
        batches = list(sampler.epoch())
        assert len(batches) == sampler.batches_per_epoch
        np.testing.assert_array_equal(np.sort(np.concatenate(batches)), np.arange(n))


def test_sampler_is_deterministic():
    a = [b.tolist() for b in BatchSampler(50, 8, 3).epoch()]
    b = [b.tolist() for b in BatchSampler(50, 8, 3).epoch()]
    assert a == b


# -- driver --------------------------------------------------------------------


def test_single_batch_epoch_is_one_step(logreg):
    opt = StoOptimizer("alr-smag", StoConfig(batch_size=120))
    trace = run_epochs(logreg, opt, epochs=1)
    assert len(trace) == 2 and trace["k"][0] == 1


def test_runs_are_deterministic(logreg):
    opt = StoOptimizer("alr-shb", StoConfig(batch_size=16, c=2.0))
    a = run_epochs(logreg, opt, epochs=3, seed=9)
    b = run_epochs(logreg, opt, epochs=3, seed=9)
    assert a == b
    c = run_epochs(logreg, opt, epochs=3, seed=10)
    assert not np.array_equal(a["eta"], c["eta"], equal_nan=True)


def test_beta_zero_matches_sps_max(logreg):
    cfg = StoConfig(beta=0.0, c=2.0, eta_max=5.0, batch_size=10)
    a = run_epochs(logreg, StoOptimizer("alr-smag", cfg), epochs=5, seed=1)
    b = run_epochs(logreg, StoOptimizer("sps-max", cfg), epochs=5, seed=1)
    np.testing.assert_array_equal(a["eta"], b["eta"])
    np.testing.assert_array_equal(a.extras["final_x"], b.extras["final_x"])


def test_schedules_are_applied(logreg):
    cfg = StoConfig(beta=0.9, c=2.0, batch_size=10)
    sched = {"eta_max": Schedule("warmup_etamax", 1.0, slope=0.01)}
    trace = run_epochs(logreg, StoOptimizer("alr-smag", cfg), sched, epochs=2, seed=0)
    k = trace["k"][:-1]
    assert np.all(trace["eta"][:-1] <= 0.01 * k + 1e-15)


def test_step_errors_carry_index(logreg):
    sched = {"c": Schedule("cosine", 1.0, total=5)}
    with pytest.raises(InvalidArgument, match="step 6"):
        run_epochs(logreg, StoOptimizer("alr-smag", StoConfig(batch_size=10)), sched, epochs=1)


def test_divergence_is_recorded():
    p = gen_least_squares(10, 10.0, 0)
    opt = StoOptimizer("sgdm", StoConfig(beta=0.9, batch_size=2), eta=100.0)
    trace = run_epochs(p, opt, epochs=200, x0=np.ones(10))
    assert trace.termination == "diverged"
    assert trace.final("f_gap") == math.inf


@given(st.integers(0, 1000), st.sampled_from(["alr-smag", "alr-shb", "sps-max"]),
       st.floats(0.0, 0.95), st.floats(0.2, 5.0), st.floats(0.01, 100.0))
def test_step_sizes_capped_and_nonnegative(seed, algo, beta, c, eta_max):
    p = gen_logistic_synthetic(40, 4, 0.1, seed)
    cfg = StoConfig(beta=beta, c=c, eta_max=eta_max, batch_size=8)
    trace = run_epochs(p, StoOptimizer(algo, cfg), epochs=2, seed=seed)
    eta = trace["eta"][:-1]
    assert np.all(eta <= eta_max) and np.all(eta >= 0.0)


@given(st.integers(0, 1000), st.floats(0.0, 0.95))
def test_dk_recurrence_with_batch_gradients(seed, beta):
    p = gen_logistic_synthetic(40, 4, 0.1, seed)
    trace = run_epochs(p, StoOptimizer("alr-smag", StoConfig(beta=beta, batch_size=8)),
                       epochs=2, seed=seed)
    assert check_dk_recurrence(trace, beta).passed


def test_interpolation_trend():
    p = gen_logistic_synthetic(300, 10, 0.05, 0)
    cfg = StoConfig(beta=0.9, c=2.0, batch_size=32)
    trace = run_epochs(p, StoOptimizer("alr-smag", cfg), epochs=60, seed=0)
    loss = trace.extras["epoch_loss"]
    assert loss[-1] < 1e-3
    assert np.all(loss[6:] <= 1.1 * loss[5:-1])


def test_noise_floor_on_overlapping_clusters():
    p = gen_logistic_overlap(500, 10, 0.5, 0)
    cfg = StoConfig(beta=0.9, c=2.0, batch_size=16)
    trace = run_epochs(p, StoOptimizer("alr-smag", cfg), epochs=30, seed=0)
    gap = trace["f_gap"]
    tail = gap[int(0.8 * len(gap)):]
    assert np.nanmin(tail) >= 1e-4
