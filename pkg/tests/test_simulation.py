import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import poisson

from bookmaking.errors import ValidationError
from bookmaking.intensity import IntensityModel
from bookmaking.probability import ConstantProbability, PoissonGoalModel
from bookmaking.simulation import (SimulationConfig, coin_config, coin_profit_prob_exact, coin_rates,
                                   nba_config, psi1, run, run_continuous, run_poisson)
from bookmaking.wealth import SqrtFeedback, StaticPolicy, TwoPiece

RATIO = IntensityModel("ratio")


def brute_coin_prob(p, T):
    # independent oracle: double sum over the two Poisson counts
    l1, l2 = coin_rates(p)
    u1, u2 = math.sqrt(p), math.sqrt(1 - p)
    k = np.arange(0, 200)
    w1, w2 = poisson.pmf(k, l1 * T), poisson.pmf(k, l2 * T)
    X = k[:, None] * u1 + k[None, :] * u2
    heads = (X - k[:, None]) > 0
    tails = (X - k[None, :]) > 0
    joint = w1[:, None] * w2[None, :]
    return float(p * joint[heads].sum() + (1 - p) * joint[tails].sum())


def test_coin_rates_at_half():
    l1, l2 = coin_rates(0.5)
    assert l1 == pytest.approx(math.sqrt(2) - 1, abs=1e-15)
    assert l2 == l1


@pytest.mark.parametrize("T", [1, 2, 5, 10])
def test_coin_prob_matches_double_sum(T):
    assert coin_profit_prob_exact(0.5, T) == pytest.approx(brute_coin_prob(0.5, T), abs=1e-12)


def test_coin_prob_examples():
    got = [coin_profit_prob_exact(0.5, T) for T in (1, 2, 5, 10)]
    np.testing.assert_allclose(got, [0.3367, 0.5443, 0.7682, 0.8649], atol=5e-4)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.2, 8))
def test_coin_prob_label_symmetry(p, T):
    assert coin_profit_prob_exact(p, T) == pytest.approx(coin_profit_prob_exact(1 - p, T), abs=1e-12)
    assert coin_profit_prob_exact(p, T) == pytest.approx(brute_coin_prob(p, T), abs=1e-10)


def test_coin_prob_validation():
    with pytest.raises(ValidationError):
        coin_profit_prob_exact(1.0, 1.0)
    with pytest.raises(ValidationError):
        coin_profit_prob_exact(0.5, 0.0)


def test_psi1_value_and_limits():
    assert psi1(0.5) == pytest.approx(0.171573, abs=1e-6)
    assert psi1(0.5) == pytest.approx(3 - 2 * math.sqrt(2), rel=1e-14)
    assert psi1(1e-10) == pytest.approx(0.5, abs=1e-4)
    assert psi1(1 - 1e-10) == pytest.approx(0.0, abs=1e-4)
    with pytest.raises(ValidationError):
        psi1(0.0)


@given(st.floats(0.01, 0.99))
def test_psi1_is_heads_profit_of_rates(p):
    # heads: revenue from both sides minus the payout on heads bets
    l1, l2 = coin_rates(p)
    u1, u2 = math.sqrt(p), math.sqrt(1 - p)
    want = l1 * (u1 - 1) + l2 * u2
    assert psi1(p) == pytest.approx(want, abs=1e-12)


def test_continuous_run_reproduces_psi1():
    s = run_continuous(coin_config(0.5, 1.0, arrival="continuous", dt=1e-4, n_paths=20, seed=3))
    heads = s.outcome[:, 0] == 1
    assert heads.any() and (~heads).any()
    np.testing.assert_allclose(s.Y[heads], psi1(0.5), atol=1e-4)
    np.testing.assert_allclose(s.Y[~heads], psi1(0.5), atol=1e-4)  # symmetric at p = 1/2


def test_zero_rate_policy_keeps_wealth():
    model = ConstantProbability([0.3, 0.7], horizon=2.0, exclusive=True)
    cfg = SimulationConfig(model, RATIO, StaticPolicy([1.0, 1.0]), n_paths=50, x0=1.5, q0=[2.0, 1.0])
    s = run_poisson(cfg)
    np.testing.assert_array_equal(s.counts, np.tile([2.0, 1.0], (50, 1)))
    np.testing.assert_allclose(s.Y, 1.5 - s.counts[:, 0] * s.outcome[:, 0] - s.outcome[:, 1])


@pytest.mark.parametrize("arrival", ["poisson", "continuous"])
def test_zero_horizon_settles_book(arrival):
    model = ConstantProbability([0.4, 0.6], horizon=0.0, exclusive=True)
    cfg = SimulationConfig(model, RATIO, SqrtFeedback(), arrival=arrival, n_paths=30, x0=2.0, q0=[1.0, 3.0])
    s = run(cfg)
    np.testing.assert_allclose(s.Y, 2.0 - s.outcome @ np.array([1.0, 3.0]))


def test_poisson_coin_win_prob_within_three_se():
    s = run_poisson(coin_config(0.5, 2.0, n_paths=20_000, seed=7, threads=2))
    st_ = s.stats()
    assert abs(st_["win_prob"] - coin_profit_prob_exact(0.5, 2.0)) < 3 * st_["win_prob_se"]


def test_poisson_coin_mean_counts():
    s = run_poisson(coin_config(0.25, 3.0, n_paths=20_000, seed=2))
    l1, l2 = coin_rates(0.25)
    se = np.sqrt(np.array([l1, l2]) * 3.0 / 20_000)
    assert np.all(np.abs(s.counts.mean(axis=0) - 3.0 * np.array([l1, l2])) < 4 * se)
    assert np.all(s.counts == np.round(s.counts)) and np.all(s.counts >= 0)


def test_two_piece_counts_follow_pieces():
    model = ConstantProbability([0.5, 0.5], horizon=1.0, exclusive=True)
    tp = TwoPiece([0.6, 0.6], [0.9, 0.9], [0.5, 0.5], tau=1.0)
    s = run_poisson(SimulationConfig(model, RATIO, tp, n_paths=20_000, seed=4))
    want = 0.5 * RATIO.rate(0.5, 0.6) + 0.5 * RATIO.rate(0.5, 0.9)
    se = math.sqrt(want / 20_000)
    assert abs(s.counts[:, 0].mean() - want) < 4 * se


def test_thinning_with_goal_model():
    model = PoissonGoalModel(2.5, 1.0, (1, 2, 3))
    cfg = SimulationConfig(model, RATIO, SqrtFeedback(), n_paths=400, seed=5)
    s = run_poisson(cfg)
    assert np.all(s.counts == np.round(s.counts))
    assert set(np.unique(s.outcome)) <= {0, 1}
    step = run_poisson(SimulationConfig(model, RATIO, SqrtFeedback(), n_paths=400, seed=5, majorant="step"))
    se = math.sqrt(s.Y.var() / 400 + step.Y.var() / 400)
    assert abs(s.Y.mean() - step.Y.mean()) < 5 * se


def test_seeded_runs_are_identical_across_threads():
    a = run_poisson(nba_config(n_paths=120, seed=9, chunk=30, threads=1))
    b = run_poisson(nba_config(n_paths=120, seed=9, chunk=30, threads=4))
    assert np.array_equal(a.Y, b.Y) and np.array_equal(a.counts, b.counts)
    assert a.to_csv({"seed": 9}) == b.to_csv({"seed": 9})
    c = run_poisson(nba_config(n_paths=120, seed=10, chunk=30))
    assert not np.array_equal(a.Y, c.Y)


def test_single_path_is_deterministic():
    a = run_poisson(coin_config(0.5, 1.0, n_paths=1, seed=0))
    b = run_poisson(coin_config(0.5, 1.0, n_paths=1, seed=0))
    assert a.Y.shape == (1,) and np.array_equal(a.Y, b.Y)


def test_revenue_and_counts_grow_with_horizon():
    short = run_continuous(coin_config(0.3, 1.0, arrival="continuous", n_paths=5))
    long = run_continuous(coin_config(0.3, 2.0, arrival="continuous", n_paths=5))
    assert np.all(long.revenue > short.revenue)
    assert np.all(long.counts.sum(axis=1) > short.counts.sum(axis=1))


def test_csv_and_stats():
    s = run_poisson(coin_config(0.5, 1.0, n_paths=5, seed=1))
    text = s.to_csv({"b": 1, "a": 2})
    lines = text.splitlines()
    assert lines[0] == '# params: {"a": 2, "b": 1}'
    assert lines[1] == "path_id,Y_T,count_0,count_1,winner"
    assert len(lines) == 7
    assert lines[2].split(",")[-1] in ("0", "1")
    st_ = s.stats()
    assert st_["n"] == 5 and st_["min"] <= st_["q25"] <= st_["median"] <= st_["q75"] <= st_["max"]


def test_config_validation():
    model = ConstantProbability([0.5, 0.5], exclusive=True)
    with pytest.raises(ValidationError):
        SimulationConfig(model, [RATIO], SqrtFeedback())
    with pytest.raises(ValidationError):
        SimulationConfig(model, RATIO, SqrtFeedback(), arrival="hawkes")
    with pytest.raises(ValidationError):
        SimulationConfig(model, RATIO, SqrtFeedback(), seed=-1)
    with pytest.raises(ValidationError):
        SimulationConfig(model, RATIO, SqrtFeedback(), q0=[-1.0, 0.0])
    with pytest.raises(ValidationError):
        SimulationConfig(model, RATIO, SqrtFeedback(), dt=0.0)
