import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delayed_ftrl import lower_bound as lb


# --- loss direction ------------------------------------------------------------

@pytest.mark.parametrize("x, ell, var", [
    ((0.5, 0.3, 0.2), (1.0, -1.0, -1.0), 1.0),
    ((0.4, 0.3, 0.3), (1.0, -2 / 3, -2 / 3), 2 / 3),
    ((0.25, 0.25, 0.25, 0.25), (1.0, 1.0, -1.0, -1.0), 1.0),
])
def test_direction_hand_traces(x, ell, var):
    out = lb.adv_loss_direction(x)
    assert np.allclose(out, ell, atol=1e-15)
    assert abs(np.dot(x, out)) <= 1e-12
    assert np.dot(x, out**2) == pytest.approx(var)


def test_direction_precondition():
    with pytest.raises(ValueError):
        lb.adv_loss_direction([0.7, 0.2, 0.1])


@st.composite
def balanced_points(draw):
    K = draw(st.integers(2, 12))
    w = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=K, max_size=K)))
    x = w / w.sum()
    if x.max() > 2 / 3:
        # mix towards uniform until the largest coordinate is at most 2/3
        lam = (2 / 3 - 1 / K) / (x.max() - 1 / K)
        x = lam * x + (1 - lam) / K
    return x


@settings(max_examples=300, deadline=None)
@given(balanced_points())
def test_direction_invariants(x):
    ell = lb.adv_loss_direction(x)
    assert np.all(np.abs(ell) <= 1.0)
    assert abs(np.dot(x, ell)) <= 1e-12
    assert np.dot(x, ell**2) >= 0.5 - 1e-12


# --- exponential weights ------------------------------------------------------

def test_exp_weights_examples():
    assert np.allclose(lb.exp3_distribution(np.zeros(5), 0.3), 0.2)
    eta = 0.7
    assert np.allclose(lb.exp3_distribution([0.0, math.log(2) / eta], eta), [2 / 3, 1 / 3])
    with pytest.raises(ValueError):
        lb.exp3_distribution([0, 0], 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8), st.floats(-1e3, 1e3), st.floats(0.01, 5))
def test_exp_weights_shift_and_permutation(L, c, eta):
    L = np.array(L)
    z = lb.exp3_distribution(L, eta)
    assert np.allclose(lb.exp3_distribution(L + c, eta), z, atol=1e-12)
    p = np.arange(L.size)[::-1]
    assert np.allclose(lb.exp3_distribution(L[p], eta), z[p], atol=1e-15)


# --- adversaries ------------------------------------------------------------------

def test_tracking_adversary_zero_on_largest_ranges():
    r = lb.LossRangeSequence.uniform(8)
    adv = lb.TrackingAdversary(4, r)
    actor = lb.UniformActor(4)
    hist = np.zeros((0, 4))
    assert np.all(adv.step(1, actor, hist) == 0)
    assert np.all(adv.step(2, actor, hist) == 0)


def test_tracking_sign_at_zero_is_positive():
    r = lb.LossRangeSequence.uniform(4)
    adv = lb.TrackingAdversary(2, r)
    actor = lb.ExpWeightsActor(adv.eta)
    hist = np.zeros((1, 2))
    ell = adv.step(2, actor, hist)
    z = np.array([0.5, 0.5])
    direction = lb.adv_loss_direction(z)
    assert np.dot(z, direction) == 0.0
    assert np.allclose(ell, direction / 2)


def test_tracking_game_runtime_sweep():
    K, T = 4, 64
    r = lb.LossRangeSequence.uniform(T)
    adv = lb.TrackingAdversary(K, r)
    actor = lb.ExpWeightsActor(adv.eta)
    L = np.zeros(K)
    hist = np.zeros((0, K))
    for t in range(1, T + 1):
        z = lb.exp3_distribution(L, adv.eta)
        ell = adv.step(t, actor, hist)
        assert abs(np.dot(z, ell)) <= 1e-12
        assert np.all(np.abs(ell) <= 0.5 + 1e-15)
        hist = np.vstack([hist, ell])
        L += ell


def test_tracking_respects_variable_ranges():
    rng = np.random.default_rng(0)
    ranges = np.sort(rng.uniform(0, 3, 100))[::-1]
    rho = rng.permutation(100) + 1
    seq = lb.LossRangeSequence(ranges, rho)
    rep = lb.run_full_info_game(lb.UniformActor(5), lb.TrackingAdversary(5, seq), 100, 5)
    for t in range(1, 101):
        assert np.all(np.abs(rep.losses[t - 1]) <= seq.range_at(t) / 2 + 1e-15)
    assert rep.regret_raw == pytest.approx(rep.regret, abs=1e-9)


def test_halving_examples():
    seq = lb.LossRangeSequence.uniform(1)
    losses = lb.halving_adversary(2, seq, seed=0)
    assert sorted(losses[0].tolist()) == [-0.5, 0.5]
    assert losses.sum(axis=0).min() == -0.5
    seq4 = lb.LossRangeSequence.uniform(2)
    adv = lb.HalvingAdversary(4, seq4, seed=3)
    sizes = [adv.active.size]
    for t in (1, 2):
        adv.step(t, None, None)
        sizes.append(adv.active.size)
    assert sizes == [4, 2, 1]
    assert lb.halving_adversary(4, seq4, seed=3).sum(axis=0).min() == -1.0


def test_halving_zero_expected_loss_for_any_player():
    seq = lb.LossRangeSequence.uniform(3)
    rng = np.random.default_rng(1)
    total = []
    for r in range(10**4):
        losses = lb.halving_adversary(8, seq, seed=r)
        arm = rng.integers(0, 8)
        total.append(losses[0, arm])
    assert abs(np.mean(total)) <= 5 * 0.5 / math.sqrt(10**4)


def test_halving_odd_active_set_leaves_one_arm_at_zero():
    seq = lb.LossRangeSequence.uniform(1)
    row = lb.halving_adversary(3, seq, seed=0)[0]
    assert sorted(row.tolist()) == [-0.5, 0.0, 0.5]


# --- buckets ------------------------------------------------------------------

def test_bucket_examples():
    assert lb.bucket_decompose([2] * 6).buckets() == [range(1, 3), range(3, 5), range(5, 7)]
    assert lb.bucket_decompose([0] * 5).sizes == [1] * 5
    d = [4, 4, 2, 2, 1, 1, 1, 0, 0, 0]
    b = lb.bucket_decompose(d)
    assert b.sizes == [4, 1, 1, 1, 1, 1, 1]
    assert lb.bucketing_violations(d, b) == []


def test_bucket_preconditions():
    with pytest.raises(ValueError):
        lb.bucket_decompose([1, 2])
    with pytest.raises(ValueError):
        lb.bucket_decompose([1, -1])


def test_checker_catches_bad_bucketing():
    d = [2] * 6
    assert lb.bucketing_violations(d, lb.Bucketing((1, 4, 7)))
    assert lb.bucketing_violations(d, lb.Bucketing((1, 3, 5)))


@st.composite
def non_increasing(draw):
    T = draw(st.integers(1, 80))
    d = sorted(draw(st.lists(st.integers(0, T + 1), min_size=T, max_size=T)), reverse=True)
    return [min(v, T + 1 - t) for t, v in enumerate(d, start=1)]


@settings(max_examples=300, deadline=None)
@given(non_increasing())
def test_bucket_properties(d):
    b = lb.bucket_decompose(d)
    assert lb.bucketing_violations(d, b) == []


# --- games ---------------------------------------------------------------------

def test_zero_losses_zero_regret():
    seq = lb.LossRangeSequence.uniform(50, 0.0)
    rep = lb.run_full_info_game(lb.ExpWeightsActor(1.0), lb.TrackingAdversary(4, seq), 50, 4)
    assert rep.regret == 0.0 and rep.floor == 0.0 and rep.passed


def test_regret_floor():
    K, T = 16, 4096
    r = lb.LossRangeSequence.uniform(T)
    k = lb.n_halvings(K)
    assert k == 4
    assert lb.regret_floor(r, K) == pytest.approx(math.sqrt((T - k + 1) * math.log(K)) / 32)
    assert lb.regret_floor([5.0, 1.0], 4) == pytest.approx(3.0)


def test_tracking_beats_floor_against_exp_weights():
    K, T = 16, 4096
    seq = lb.LossRangeSequence.uniform(T)
    adv = lb.TrackingAdversary(K, seq)
    rep = lb.run_full_info_game(lb.ExpWeightsActor(adv.eta), adv, T, K)
    assert rep.regret >= math.sqrt((T - 4) * math.log(K)) / 32
    assert rep.passed


def test_bucketed_game_holds_actor_within_bucket():
    d = [3] * 9
    seq = lb.LossRangeSequence.uniform(9)
    adv = lb.TrackingAdversary(4, seq)
    rep = lb.run_full_info_game(lb.FollowTheLeaderActor(4), adv, 9, 4, bucket_delays=d)
    for bucket in lb.bucket_decompose(d).buckets():
        plays = rep.plays[bucket.start - 1:bucket.stop - 1]
        assert np.allclose(plays, plays[0])


def test_bucketed_reduction():
    rep, b = lb.run_bucketed_game([4, 4, 2, 2, 1, 1, 1, 0, 0, 0], lambda r: lb.UniformActor(4), 4)
    assert b.M == 7 and rep.losses.shape == (7, 4)


def test_invalid_actor_rejected():
    class Broken:
        def distribution(self, history):
            return np.array([0.9, 0.9])

    seq = lb.LossRangeSequence.uniform(4)
    with pytest.raises(ValueError):
        lb.run_full_info_game(Broken(), lb.TrackingAdversary(2, seq), 4, 2)


def test_range_files(tmp_path):
    (tmp_path / "r.txt").write_text("3\n2\n1\n")
    (tmp_path / "p.txt").write_text("2\n3\n1\n")
    seq = lb.read_ranges(tmp_path / "r.txt", tmp_path / "p.txt")
    assert [seq.range_at(t) for t in (1, 2, 3)] == [2.0, 1.0, 3.0]
    (tmp_path / "bad.txt").write_text("1\n3\n")
    with pytest.raises(ValueError):
        lb.read_ranges(tmp_path / "bad.txt")
