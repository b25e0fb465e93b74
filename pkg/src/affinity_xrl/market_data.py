"""Monthly price series and the MACD / RSI indicators derived from them."""

import csv
import io
import os
from dataclasses import dataclass

import numpy as np

from ._validation import atomic_write_text, check_rng
from .exceptions import (
    DateGap,
    EmptyInput,
    FastNotLessThanSlow,
    MissingFile,
    NonPositivePrice,
    ParseError,
    SeriesTooShort,
    TooFewMonths,
    ValidationError,
    ZeroSpan,
)

MIN_SYNTH_MONTHS = 40


def _as_months(dates):
    months = np.asarray(dates, dtype="datetime64[M]")
    if months.ndim != 1:
        raise ValidationError("dates must be one-dimensional")
    return months


@dataclass(frozen=True, eq=False)
class PriceSeries:
    index_name: str
    dates: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        dates = _as_months(self.dates)
        prices = np.asarray(self.prices, dtype=float)
        if dates.shape != prices.shape:
            raise ValidationError("dates and prices differ in length")
        for i in range(1, len(dates)):
            if dates[i] != dates[i - 1] + 1:
                raise DateGap(str(dates[i - 1] + 1), str(dates[i]))
        bad = np.flatnonzero(~(prices > 0))
        if bad.size:
            raise NonPositivePrice(int(bad[0]) + 2, float(prices[bad[0]]))
        dates.setflags(write=False)
        prices.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", prices)

    def __len__(self):
        return len(self.prices)

    def __eq__(self, other):
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return (
            self.index_name == other.index_name
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.prices, other.prices)
        )

    def window(self, start, stop):
        return PriceSeries(self.index_name, self.dates[start:stop], self.prices[start:stop])


@dataclass(frozen=True, eq=False)
class IndicatorSeries:
    index_name: str
    dates: np.ndarray
    macd: np.ndarray
    rsi: np.ndarray

    def __post_init__(self):
        dates = _as_months(self.dates)
        macd = np.asarray(self.macd, dtype=float)
        rsi = np.asarray(self.rsi, dtype=float)
        if not (dates.shape == macd.shape == rsi.shape):
            raise ValidationError("indicator columns differ in length")
        if np.any((rsi < 0) | (rsi > 1)):
            raise ValidationError("rsi values must lie in [0, 1]")
        for arr in (dates, macd, rsi):
            arr.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "macd", macd)
        object.__setattr__(self, "rsi", rsi)

    def __len__(self):
        return len(self.macd)

    def __eq__(self, other):
        if not isinstance(other, IndicatorSeries):
            return NotImplemented
        return (
            self.index_name == other.index_name
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.macd, other.macd)
            and np.array_equal(self.rsi, other.rsi)
        )


def load_price_csv(path, index_name=None):
    """Read a ``date,price`` CSV with ``YYYY-MM`` dates into a PriceSeries."""
    if not os.path.isfile(path):
        raise MissingFile(f"no such price file: {path}")
    if index_name is None:
        index_name = os.path.splitext(os.path.basename(path))[0]
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["date", "price"]:
        raise ParseError(1, "header must be 'date,price'")
    dates, prices = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(lineno, f"expected 2 columns, got {len(row)}")
        text_date, text_price = row[0].strip(), row[1].strip()
        if len(text_date) != 7 or text_date[4] != "-":
            raise ParseError(lineno, f"bad date {text_date!r}")
        try:
            month = np.datetime64(text_date, "M")
            price = float(text_price)
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        if not price > 0:
            raise NonPositivePrice(lineno, price)
        if dates and month != dates[-1] + 1:
            raise DateGap(str(dates[-1] + 1), str(month))
        dates.append(month)
        prices.append(price)
    return PriceSeries(index_name, np.array(dates, dtype="datetime64[M]"), np.array(prices))


def save_price_csv(series, path):
    buf = io.StringIO()
    buf.write("date,price\n")
    for d, p in zip(series.dates, series.prices):
        buf.write(f"{d},{float(p)!r}\n")
    atomic_write_text(path, buf.getvalue())


def ema(values, span):
    """Exponential moving average seeded with the first observation."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise EmptyInput("ema of an empty sequence")
    if span < 1:
        raise ZeroSpan(f"span must be >= 1, got {span}")
    alpha = 2.0 / (span + 1.0)
    out = np.empty_like(v)
    out[0] = v[0]
    for t in range(1, v.size):
        out[t] = alpha * v[t] + (1.0 - alpha) * out[t - 1]
    return out


def _prices(series):
    return series.prices if isinstance(series, PriceSeries) else np.asarray(series, dtype=float)


def macd(series, fast=12, slow=26):
    """Fast EMA minus slow EMA over the full series (warm-up entries included)."""
    if not fast < slow:
        raise FastNotLessThanSlow(f"fast={fast} must be < slow={slow}")
    p = _prices(series)
    if p.size <= slow:
        raise SeriesTooShort(f"need more than {slow} months, got {p.size}")
    return ema(p, fast) - ema(p, slow)


def rsi(series, period=14):
    """Wilder RSI scaled to [0, 1].

    The first ``period`` averages are plain means of the moves seen so far, which
    makes the value at ``period`` the classic simple-average seed. Flat windows
    (no gains and no losses) give 0.5.
    """
    p = _prices(series)
    if period < 1:
        raise ZeroSpan("period must be >= 1")
    if p.size <= period:
        raise SeriesTooShort(f"need more than {period} months, got {p.size}")
    moves = np.diff(p)
    gains = np.maximum(moves, 0.0)
    losses = np.maximum(-moves, 0.0)
    out = np.empty(p.size)
    out[0] = 0.5
    g = lam = 0.0
    for t in range(1, p.size):
        if t <= period:
            g += (gains[t - 1] - g) / t
            lam += (losses[t - 1] - lam) / t
        else:
            g = (g * (period - 1) + gains[t - 1]) / period
            lam = (lam * (period - 1) + losses[t - 1]) / period
        total = g + lam
        out[t] = 0.5 if total == 0.0 else g / total
    return out


def compute_indicators(series, fast=12, slow=26, period=14):
    """MACD and RSI for ``series`` with the first ``slow`` warm-up months dropped."""
    m = macd(series, fast, slow)
    r = rsi(series, period)
    return IndicatorSeries(series.index_name, series.dates[slow:], m[slow:], r[slow:])


def synth_series(seed, months, drift, vol, *, p0=100.0, start="1991-11", index_name="synthetic"):
    """Seeded geometric random walk ``p[t+1] = p[t] * exp(drift + vol * z[t])``."""
    if months < MIN_SYNTH_MONTHS:
        raise TooFewMonths(f"need at least {MIN_SYNTH_MONTHS} months, got {months}")
    if vol < 0:
        raise ValidationError("vol must be non-negative")
    z = check_rng(seed).standard_normal(months - 1)
    log_steps = np.concatenate([[0.0], drift + vol * z])
    prices = p0 * np.exp(np.cumsum(log_steps))
    dates = np.datetime64(start, "M") + np.arange(months)
    return PriceSeries(index_name, dates, prices)


def save_indicator_csv(indicators, path):
    buf = io.StringIO()
    buf.write("date,macd,rsi\n")
    for d, m, r in zip(indicators.dates, indicators.macd, indicators.rsi):
        buf.write(f"{d},{m:.9g},{r:.9g}\n")
    atomic_write_text(path, buf.getvalue())


def load_indicator_csv(path, index_name=None):
    if not os.path.isfile(path):
        raise MissingFile(f"no such indicator file: {path}")
    if index_name is None:
        index_name = os.path.splitext(os.path.basename(path))[0]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["date", "macd", "rsi"]:
            raise ParseError(1, "header must be 'date,macd,rsi'")
        dates, m, r = [], [], []
        for lineno, row in enumerate(reader, start=2):
            try:
                dates.append(np.datetime64(row[0], "M"))
                m.append(float(row[1]))
                r.append(float(row[2]))
            except (ValueError, IndexError) as exc:
                raise ParseError(lineno, str(exc)) from None
    return IndicatorSeries(index_name, np.array(dates, dtype="datetime64[M]"), m, r)


# index -> (drift per month, vol per month, starting level)
SYNTH_DEFAULTS = {
    "stocks": (0.006, 0.04, 100.0),
    "property": (0.004, 0.015, 100.0),
    "interest": (0.0, 0.03, 2.0),
    "luxury": (0.004, 0.03, 100.0),
}


def synthetic_market(seed, months=362, start="1991-11", params=None):
    """Independent seeded series for every index (interest is a yield level in percent)."""
    params = {**SYNTH_DEFAULTS, **(params or {})}
    out = {}
    for offset, name in enumerate(("stocks", "property", "interest", "luxury")):
        drift, vol, p0 = params[name]
        out[name] = synth_series(seed * 101 + offset, months, drift, vol, p0=p0, start=start, index_name=name)
    return out
