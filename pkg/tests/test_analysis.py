import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delayed_ftrl import analysis as an
from delayed_ftrl.engine import EngineFlags, run
from delayed_ftrl.environments import Environment, FixedDelay, ObliviousEnv, StochasticEnv
from delayed_ftrl.schedules import outstanding_counts


def test_adversarial_overlay_examples():
    assert an.adversarial_overlay(0, 3, 0, 4) == pytest.approx(4 * 3 ** (1 / 3) * math.log(3))
    assert an.adversarial_overlay(100, 2, 0, 0) == pytest.approx(math.sqrt(200))
    # independent evaluation: sqrt(4e4) + sqrt(1e5 ln 4) + 50 * 4^(1/3) ln 4
    expected = 200.0 + math.sqrt(1e5 * 1.3862943611198906) + 50 * 1.5874010519681994 * 1.3862943611198906
    assert an.adversarial_overlay(1e4, 4, 1e5, 50) == pytest.approx(expected, rel=1e-14)
    assert an.adversarial_overlay(1e4, 4, 1e5, 50) == pytest.approx(682.3599974648682, rel=1e-14)


def test_stochastic_overlay_examples():
    assert an.stochastic_overlay(math.e, [1.0], 0, 0, 2) == pytest.approx(1.0)
    one = an.stochastic_overlay(100, [0.5], 0, 0, 3)
    two = an.stochastic_overlay(100, [0.5, 0.5], 0, 0, 3)
    assert two == pytest.approx(2 * one)
    expected = 70 * math.log(1e4) + 70 * 20 / math.log(8) + 30 * 2.0 * math.log(8)
    assert an.stochastic_overlay(1e4, [0.1] * 7, 20, 30, 8) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        an.stochastic_overlay(10, [0.0], 0, 0, 2)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e6), st.floats(0, 1e6), st.integers(0, 100), st.integers(2, 64))
def test_adversarial_overlay_monotone(t, D, d, K):
    base = an.adversarial_overlay(t, K, D, d)
    assert an.adversarial_overlay(t + 1, K, D, d) >= base
    assert an.adversarial_overlay(t, K, D + 1, d) >= base
    assert an.adversarial_overlay(t, K, D, d + 1) >= base


@settings(max_examples=100, deadline=None)
@given(st.floats(1, 1e6), st.integers(0, 100), st.integers(0, 100), st.floats(0.01, 1.0))
def test_stochastic_overlay_monotone(t, smax, d, gap):
    base = an.stochastic_overlay(t, [gap], smax, d, 4)
    assert an.stochastic_overlay(t + 1, [gap], smax, d, 4) >= base
    assert an.stochastic_overlay(t, [gap], smax + 1, d, 4) >= base
    assert an.stochastic_overlay(t, [gap], smax, d + 1, 4) >= base
    # smaller gaps mean a larger bound
    assert an.stochastic_overlay(t, [gap / 2], smax, d, 4) >= base


def test_explicit_constant_bounds_dominate_unit_overlays():
    t = np.arange(1, 1001)
    sig = outstanding_counts([5] * 1000)
    unit = an.stochastic_overlay(t, [0.2], sig.max(), 5, 2)
    explicit = an.stochastic_bound_explicit(t, [0.2], sig.max(), 5, 2)
    assert np.all(explicit >= unit)
    adv = an.adversarial_bound_explicit(sig, 2, 5)
    assert adv.shape == (1000,) and np.all(np.diff(adv) > 0)
    assert math.isinf(an.stochastic_bound_explicit(10, [0.2], 0, 0, 2))


def test_drift_examples():
    X = np.tile([0.2, 0.3, 0.5], (10, 1))
    assert an.max_drift_ratio(X, 0)[0] == 1.0
    assert an.max_drift_ratio(X, 5)[0] == 1.0
    Y = np.array([[0.5, 0.5], [0.25, 0.75], [0.6, 0.4]])
    r, wit = an.max_drift_ratio(Y, 1)
    assert r == pytest.approx(2.4) and wit == (2, 3, 0)


def test_drift_on_run():
    env = Environment(StochasticEnv([0.3, 0.5, 0.5, 0.5], seed=0), FixedDelay(10))
    tr = run(env, 5000, seed=1, flags=EngineFlags(snapshots="window"))
    rep = an.drift_check(tr)
    assert rep.passed, rep.witness
    with pytest.raises(ValueError):
        an.drift_check(run(env, 10, seed=1))


def test_sigma_max_examples():
    T = 10
    rep = an.sigma_max_bound_check([T] + [0] * (T - 1))
    assert rep.passed and rep.witness["sigma_max"] == 1 and rep.witness["bound"] == 1
    rep0 = an.sigma_max_bound_check([0] * 8)
    assert rep0.witness["sigma_max"] == 0 and rep0.witness["bound"] == 0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=12))
def test_greedy_equals_exhaustive(d):
    assert an.skip_bound_greedy(d) == an.skip_bound_exhaustive(d)
    assert an.sigma_max_of(d) <= an.skip_bound_exhaustive(d)


def test_sampled_mode_for_long_sequences():
    d = list(np.random.default_rng(0).integers(0, 5, 40))
    rep = an.sigma_max_bound_check(d)
    assert rep.passed and rep.witness["exhaustive"] is False


def test_arrivals_examples():
    assert an.arrivals_inequality_from_delays([0] * 5).passed
    rep = an.arrivals_inequality_from_delays([2] * 7)
    assert rep.passed
    sig = outstanding_counts([3, 2, 1, 0, 0, 0])
    assert sig[:4].sum() == 6
    ok, first = an.arrivals_inequality([0, 0, 0], [0, 3, 0])
    assert not ok and first == 2


def test_report_csv():
    text = an.reports_to_csv([an.CheckReport("x", True, {"a": 1}), an.CheckReport("y", False)])
    assert text.splitlines() == ["check,result,witness", "x,pass,a=1", "y,fail,"]



def test_regret_curve_uniform_play_monte_carlo():
    env = StochasticEnv([0.0, 1.0], seed=0)
    finals = []
    for seed in range(20):
        arms = np.random.default_rng(seed).integers(0, 2, 1000)
        finals.append(sum(env.regret_increment(t, a) for t, a in enumerate(arms, 1)))
    # binomial(1000, 1/2): mean 500, sd ~15.8; the mean of 20 is within 3 standard errors
    assert abs(np.mean(finals) - 500) <= 3 * math.sqrt(250 / 20)


def test_regret_curve_stochastic_and_oblivious():
    env = Environment(StochasticEnv([0.2, 0.6], seed=0), FixedDelay(3))
    tr = run(env, 800, seed=0)
    c = an.regret_curve(tr, env)
    assert np.all(np.diff(c.cumulative) >= 0)
    assert c.overlay_stoch is not None and c.meta["regime"] == "stochastic"
    cp = an.regret_curve(tr, env, explicit_constants=True)
    assert np.all(cp.overlay_stoch >= c.overlay_stoch)
    m = np.tile([[0.0, 1.0]], (100, 1))
    oenv = Environment(ObliviousEnv(m), FixedDelay(0))
    otr = run(oenv, 100, seed=0)
    oc = an.regret_curve(otr, oenv)
    assert oc.overlay_stoch is None
    assert oc.cumulative[-1] == np.sum(otr.arms == 1)


def test_always_best_curve_is_zero():
    env = Environment(StochasticEnv([0.0, 1.0], seed=0), FixedDelay(0))
    tr = run(env, 10, seed=0)
    tr.inst_regret[:] = 0.0
    assert np.all(an.regret_curve(tr, env).cumulative == 0.0)


def test_skip_regret_bound():
    assert an.skip_regret_bound([0] * 5, 4) == 0.0
    # skipping the single huge delay is optimal
    assert an.skip_regret_bound([1000, 1, 1, 1], 2) == pytest.approx(1 + math.sqrt(3 * math.log(2)))
