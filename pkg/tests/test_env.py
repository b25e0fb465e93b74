import numpy as np
import pytest

from affinity_xrl.env import (
    ASSET_CLASSES, EnvConfig, EnvState, InvestmentEnv, MarketData, class_returns, feature_matrix,
    trajectory_csv,
)
from affinity_xrl.exceptions import (
    ActionOffSimplex, EpisodeFinished, HorizonExceedsData, MisalignedSeries, ValidationError,
)
from affinity_xrl.market_data import PriceSeries, synth_series, synthetic_market


@pytest.fixture(scope="module")
def market():
    return MarketData.from_prices(synthetic_market(0))


def _flat_market(months=60, level=100.0, stock_path=None, interest=1.2):
    dates = np.datetime64("2000-01", "M") + np.arange(months)
    prices = {k: PriceSeries(k, dates, np.full(months, level)) for k in ("property", "luxury")}
    stocks = np.full(months, level) if stock_path is None else stock_path
    prices["stocks"] = PriceSeries("stocks", dates, stocks)
    prices["interest"] = PriceSeries("interest", dates, np.full(months, interest))
    return MarketData.from_prices(prices)


def test_default_window(market):
    assert len(market) == 336
    assert str(market.indicators["stocks"].dates[0]) == "1994-01"
    assert str(market.prices["luxury"].dates[-1]) == "2021-12"


def test_initial_state_maturity_zero(market):
    env = InvestmentEnv(EnvConfig(), market)
    s = env.reset()
    assert s.t == 0 and s.maturity == 0.0
    assert env.features[-1, -1] == 1.0


def test_horizon_exceeds_data(market):
    with pytest.raises(HorizonExceedsData):
        InvestmentEnv(EnvConfig(horizon=337), market)


def test_reset_is_deterministic(market):
    env = InvestmentEnv(EnvConfig(), market)
    a = env.reset()
    env.step(np.full(5, 0.2))
    assert env.reset() == a


def test_zero_returns_give_zero_reward():
    data = _flat_market()
    cfg = EnvConfig(horizon=20, return_overrides={"savings": 0.0, "mortgage": 0.0})
    env = InvestmentEnv(cfg, data)
    env.reset()
    rng = np.random.default_rng(0)
    while not env.done:
        _, r, _ = env.step(rng.dirichlet(np.ones(5)))
        assert abs(r) < 1e-12


def test_compound_growth_closed_form():
    data = _flat_market()
    cfg = EnvConfig(horizon=25, monthly_contribution=0.0, initial_holdings=(0, 0, 100.0, 0, 0),
                    return_overrides={"stocks": 0.01})
    env = InvestmentEnv(cfg, data)
    env.reset()
    while not env.done:
        env.step((0, 0, 1.0, 0, 0))
    assert env.value == pytest.approx(100.0 * 1.01 ** 24, rel=1e-12)


def test_one_hot_stock_reward():
    path = 100.0 * 1.02 ** np.arange(60)
    data = _flat_market(stock_path=path)
    cfg = EnvConfig(horizon=10, monthly_contribution=0.0, initial_holdings=(0, 0, 100.0, 0, 0),
                    return_overrides={"savings": 0.0, "mortgage": 0.0})
    env = InvestmentEnv(cfg, data)
    env.reset()
    _, r, done = env.step((0, 0, 1, 0, 0))
    assert r == pytest.approx(0.02, rel=1e-12)
    assert not done


def test_class_return_conventions():
    path = 100.0 + np.arange(60.0)
    path[27] = 102.0
    path[26] = 100.0
    data = _flat_market(stock_path=path, interest=1.2)
    r = class_returns(data, EnvConfig(), 0)
    assert r[ASSET_CLASSES.index("stocks")] == pytest.approx(0.02)
    assert r[ASSET_CLASSES.index("savings")] == pytest.approx(0.012 / 12)
    assert r[ASSET_CLASSES.index("mortgage")] == pytest.approx((0.012 + 0.015) / 12)
    assert r[ASSET_CLASSES.index("property")] == 0.0


def test_value_accounting(market):
    env = InvestmentEnv(EnvConfig(), market)
    env.reset()
    rng = np.random.default_rng(4)
    while not env.done:
        t, h = env.t, env.holdings.copy()
        a = rng.dirichlet(np.ones(5))
        env.step(a)
        expected = (h * (1 + env.returns(t))).sum() + env.config.monthly_contribution
        assert env.value == pytest.approx(expected, rel=1e-9)


def test_episode_length_and_finish(market):
    env = InvestmentEnv(EnvConfig(horizon=12), market)
    env.reset()
    steps = 0
    done = False
    while not done:
        _, _, done = env.step(np.full(5, 0.2))
        steps += 1
    assert steps == 11
    with pytest.raises(EpisodeFinished):
        env.step(np.full(5, 0.2))


def test_action_validation(market):
    env = InvestmentEnv(EnvConfig(), market)
    env.reset()
    env.step(np.full(5, 0.2) * (1 + 5e-7))
    with pytest.raises(ActionOffSimplex):
        env.step(np.full(5, 0.21))
    with pytest.raises(ActionOffSimplex):
        env.step((1.2, -0.2, 0, 0, 0))
    with pytest.raises(ActionOffSimplex):
        env.step((1, 0, 0, 0))


def test_step_before_reset(market):
    with pytest.raises(EpisodeFinished):
        InvestmentEnv(EnvConfig(), market).step(np.full(5, 0.2))


def test_config_validation():
    with pytest.raises(ValidationError):
        EnvConfig(monthly_contribution=-1)
    with pytest.raises(ValidationError):
        EnvConfig(initial_holdings=(0, 0, 0, 0, 0))
    with pytest.raises(ValidationError):
        EnvConfig(return_overrides={"gold": 0.1})


def test_misaligned_series():
    prices = synthetic_market(0)
    prices["luxury"] = synth_series(1, 100, 0.0, 0.01, start="2000-01", index_name="luxury")
    with pytest.raises(MisalignedSeries):
        MarketData.from_prices(prices)


def test_luxury_generated_when_absent():
    prices = synthetic_market(0)
    del prices["luxury"]
    a = MarketData.from_prices(prices)
    b = MarketData.from_prices(prices)
    assert a.prices["luxury"] == b.prices["luxury"]
    assert len(a.prices["luxury"]) == 336


def test_feature_matrix_shape(market):
    X = feature_matrix(market, 336)
    assert X.shape == (336, 7)
    np.testing.assert_allclose(X[:, -1], np.arange(336) / 335)


def test_trajectory_csv_header():
    states = [EnvState(np.zeros(7), 0), EnvState(np.ones(7), 1)]
    text = trajectory_csv(states, [np.full(5, 0.2)] * 2, [0.5, 0.1])
    lines = text.splitlines()
    assert lines[0].startswith("t,maturity,macd_s")
    assert lines[0].endswith("a_luxury,reward")
    assert len(lines) == 3
