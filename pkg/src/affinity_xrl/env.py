"""Monthly personal-investment MDP over five purchase-only asset classes."""

import io
from dataclasses import dataclass, field

import numpy as np

from ._validation import atomic_write_text
from .exceptions import (
    ActionOffSimplex,
    EpisodeFinished,
    HorizonExceedsData,
    MisalignedSeries,
    ValidationError,
)
from .market_data import compute_indicators, synth_series

ASSET_CLASSES = ("savings", "property", "stocks", "mortgage", "luxury")
N_ASSETS = len(ASSET_CLASSES)
INDICATOR_INDICES = ("stocks", "property", "interest")
FEATURE_NAMES = ("macd_s", "rsi_s", "macd_p", "rsi_p", "macd_r", "rsi_r", "maturity")
N_FEATURES = len(FEATURE_NAMES)
MATURITY = FEATURE_NAMES.index("maturity")

RENORMALIZE_TOL = 1e-6
NEGATIVE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MarketData:
    """Aligned post-warm-up price and indicator windows for every index.

    ``prices`` holds ``stocks``, ``property``, ``interest`` (annual yield, in the
    unit given by ``EnvConfig.rate_scale``) and ``luxury``.
    """

    prices: dict
    indicators: dict

    def __post_init__(self):
        missing = [k for k in INDICATOR_INDICES if k not in self.indicators]
        missing += [k for k in (*INDICATOR_INDICES, "luxury") if k not in self.prices]
        if missing:
            raise ValidationError(f"market data lacks series: {missing}")
        ref = self.indicators["stocks"].dates
        for name, s in [*self.indicators.items(), *self.prices.items()]:
            if not np.array_equal(s.dates, ref):
                raise MisalignedSeries(f"series {name!r} is not aligned with 'stocks'")

    @classmethod
    def from_prices(cls, prices, *, fast=12, slow=26, period=14, luxury_seed=7,
                    luxury_drift=0.004, luxury_vol=0.03):
        """Compute indicators and cut every series to the common post-warm-up window.

        A seeded synthetic luxury series is generated when ``prices`` has none.
        """
        prices = dict(prices)
        indicators = {k: compute_indicators(prices[k], fast, slow, period) for k in INDICATOR_INDICES}
        start = max(ind.dates[0] for ind in indicators.values())
        stop = min(ind.dates[-1] for ind in indicators.values())
        if stop < start:
            raise MisalignedSeries("indicator windows do not overlap")
        if "luxury" not in prices:
            ref = prices["stocks"]
            prices["luxury"] = synth_series(luxury_seed, max(len(ref), 40), luxury_drift, luxury_vol,
                                            start=str(ref.dates[0]), index_name="luxury")
        for name, s in prices.items():
            if s.dates[0] > start or s.dates[-1] < stop:
                raise MisalignedSeries(f"price series {name!r} does not cover {start}..{stop}")

        def cut(s):
            i, j = int((start - s.dates[0]).astype(int)), int((stop - s.dates[0]).astype(int)) + 1
            return i, j

        cut_prices = {k: s.window(*cut(s)) for k, s in prices.items()}
        cut_ind = {}
        for k, ind in indicators.items():
            i, j = cut(ind)
            cut_ind[k] = type(ind)(ind.index_name, ind.dates[i:j], ind.macd[i:j], ind.rsi[i:j])
        return cls(cut_prices, cut_ind)

    def __len__(self):
        return len(self.indicators["stocks"])


@dataclass
class EnvConfig:
    monthly_contribution: float = 1.0
    horizon: int = 336
    initial_holdings: tuple = (1.0, 0.0, 0.0, 0.0, 0.0)
    mortgage_spread: float = 0.015
    rate_scale: float = 0.01
    # asset class -> constant monthly return, replacing the index-derived one
    return_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 2:
            raise ValidationError("horizon must be >= 2")
        if self.monthly_contribution < 0:
            raise ValidationError("monthly_contribution must be >= 0")
        h = np.asarray(self.initial_holdings, dtype=float)
        if h.shape != (N_ASSETS,) or np.any(h < 0) or h.sum() <= 0:
            raise ValidationError("initial_holdings must be 5 non-negative values with a positive sum")
        unknown = set(self.return_overrides) - set(ASSET_CLASSES)
        if unknown:
            raise ValidationError(f"unknown asset classes in return_overrides: {sorted(unknown)}")


@dataclass(frozen=True, eq=False)
class EnvState:
    features: np.ndarray
    t: int

    @property
    def maturity(self):
        return float(self.features[MATURITY])

    def __eq__(self, other):
        return isinstance(other, EnvState) and self.t == other.t and np.array_equal(self.features, other.features)


def class_returns(data, config, t):
    """Monthly return of each asset class between month ``t`` and ``t + 1``."""
    p = data.prices
    yield_month = p["interest"].prices[t] * config.rate_scale / 12.0
    r = np.array([
        yield_month,
        p["property"].prices[t + 1] / p["property"].prices[t] - 1.0,
        p["stocks"].prices[t + 1] / p["stocks"].prices[t] - 1.0,
        yield_month + config.mortgage_spread / 12.0,
        p["luxury"].prices[t + 1] / p["luxury"].prices[t] - 1.0,
    ])
    for name, value in config.return_overrides.items():
        r[ASSET_CLASSES.index(name)] = value
    return r


def feature_matrix(data, horizon):
    """The (horizon, 7) continuous state features; they do not depend on actions."""
    ind = data.indicators
    maturity = np.arange(horizon) / (horizon - 1)
    cols = [ind["stocks"].macd, ind["stocks"].rsi, ind["property"].macd, ind["property"].rsi,
            ind["interest"].macd, ind["interest"].rsi]
    X = np.column_stack([c[:horizon] for c in cols] + [maturity])
    X[-1, MATURITY] = 1.0
    return X


class InvestmentEnv:
    """Single-threaded episode state machine.

    ``step`` buys ``contribution * action`` of each class after last month's
    holdings have earned their returns; the reward is portfolio growth net of the
    deposit, as a fraction of last month's value.
    """

    def __init__(self, config, data):
        if config.horizon > len(data):
            raise HorizonExceedsData(f"horizon {config.horizon} exceeds {len(data)} months of data")
        self.config = config
        self.data = data
        self._features = feature_matrix(data, config.horizon)
        self._returns = np.array([class_returns(data, config, t) for t in range(config.horizon - 1)])
        self.t = None
        self.holdings = None

    @property
    def horizon(self):
        return self.config.horizon

    @property
    def features(self):
        return self._features

    def returns(self, t):
        return self._returns[t]

    def _state(self):
        return EnvState(self._features[self.t].copy(), self.t)

    def reset(self):
        self.t = 0
        self.holdings = np.array(self.config.initial_holdings, dtype=float)
        return self._state()

    @property
    def done(self):
        return self.t is not None and self.t >= self.horizon - 1

    @property
    def value(self):
        return float(self.holdings.sum())

    def step(self, action):
        if self.t is None:
            raise EpisodeFinished("call reset() before step()")
        if self.done:
            raise EpisodeFinished(f"episode ended at month {self.t}")
        a = np.asarray(action, dtype=float)
        if a.shape != (N_ASSETS,) or not np.all(np.isfinite(a)):
            raise ActionOffSimplex(f"action must be 5 finite weights, got {a!r}")
        if np.any(a < -NEGATIVE_TOL) or abs(a.sum() - 1.0) > RENORMALIZE_TOL:
            raise ActionOffSimplex(f"action {a} is not on the simplex")
        a = np.clip(a, 0.0, None)
        a = a / a.sum()
        v_before = self.holdings.sum()
        c = self.config.monthly_contribution
        self.holdings = self.holdings * (1.0 + self._returns[self.t]) + c * a
        reward = (self.holdings.sum() - v_before - c) / v_before
        self.t += 1
        return self._state(), float(reward), self.done


def trajectory_csv(states, actions, rewards):
    """Render a trajectory (one row per step) as CSV text."""
    buf = io.StringIO()
    buf.write("t,maturity,macd_s,rsi_s,macd_p,rsi_p,macd_r,rsi_r,"
              "a_savings,a_property,a_stocks,a_mortgage,a_luxury,reward\n")
    for s, a, r in zip(states, actions, rewards):
        f = s.features
        cells = [str(s.t), repr(float(f[MATURITY]))]
        cells += [repr(float(x)) for x in f[:MATURITY]]
        cells += [repr(float(x)) for x in a]
        cells.append(repr(float(r)))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def save_trajectory_csv(path, states, actions, rewards):
    atomic_write_text(path, trajectory_csv(states, actions, rewards))
