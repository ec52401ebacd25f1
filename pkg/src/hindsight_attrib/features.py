"""Technical indicators and state assembly.

Four indicators (MACD, RSI, CCI, ADX) are computed per asset from the panel
and stacked into a feature tensor indexed by decision slot: the tensor entry
at slot t holds the indicator value computed from closes through slot t-1,
i.e. exactly the information available at the beginning of slot t.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import FeatureUndefined, SeriesTooShort
from .market_data import CovEstimate, PricePanel

logger = logging.getLogger(__name__)

FEATURE_NAMES = ["macd", "rsi", "cci", "adx"]


@dataclass
class IndicatorParams:
    macd_fast: int = 12
    macd_slow: int = 26
    macd_signal: int = 9
    rsi_period: int = 14
    cci_period: int = 20
    adx_period: int = 14

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _ema(x: np.ndarray, n: int) -> np.ndarray:
    """Exponential moving average, alpha = 2/(n+1), seeded with x[0]."""
    alpha = 2.0 / (n + 1.0)
    out = np.empty_like(x)
    out[0] = x[0]
    for t in range(1, len(x)):
        out[t] = alpha * x[t] + (1.0 - alpha) * out[t - 1]
    return out


def macd(close: np.ndarray, fast: int = 12, slow: int = 26, signal: int = 9) -> np.ndarray:
    """MACD line, EMA(fast) - EMA(slow).  NaN before slot slow-1."""
    close = np.asarray(close, dtype=float)
    if len(close) <= slow:
        raise SeriesTooShort(f"macd needs more than {slow} points, got {len(close)}")
    line = _ema(close, fast) - _ema(close, slow)
    line[: slow - 1] = np.nan
    return line


def rsi(close: np.ndarray, period: int = 14) -> np.ndarray:
    """Relative Strength Index with Wilder smoothing; zero average loss -> 100."""
    close = np.asarray(close, dtype=float)
    if len(close) <= period:
        raise SeriesTooShort(f"rsi needs more than {period} points, got {len(close)}")
    out = np.full(len(close), np.nan)
    delta = np.diff(close)
    gain = np.maximum(delta, 0.0)
    loss = np.maximum(-delta, 0.0)
    avg_gain = gain[:period].mean()
    avg_loss = loss[:period].mean()
    out[period] = 100.0 if avg_loss == 0 else 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    for t in range(period + 1, len(close)):
        avg_gain = (avg_gain * (period - 1) + gain[t - 1]) / period
        avg_loss = (avg_loss * (period - 1) + loss[t - 1]) / period
        out[t] = 100.0 if avg_loss == 0 else 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    return out


def cci(high: np.ndarray, low: np.ndarray, close: np.ndarray, period: int = 20) -> np.ndarray:
    """Commodity Channel Index; zero mean deviation -> 0."""
    high, low, close = (np.asarray(a, dtype=float) for a in (high, low, close))
    if len(close) < period:
        raise SeriesTooShort(f"cci needs at least {period} points, got {len(close)}")
    tp = (high + low + close) / 3.0
    out = np.full(len(close), np.nan)
    for t in range(period - 1, len(close)):
        window = tp[t - period + 1 : t + 1]
        sma = window.mean()
        mad = np.abs(window - sma).mean()
        out[t] = 0.0 if mad == 0 else (tp[t] - sma) / (0.015 * mad)
    return out


def adx(high: np.ndarray, low: np.ndarray, close: np.ndarray, period: int = 14) -> np.ndarray:
    """Average Directional Index from Wilder-smoothed +DI/-DI; zero DX denominator -> 0."""
    high, low, close = (np.asarray(a, dtype=float) for a in (high, low, close))
    n = len(close)
    if n < 2 * period:
        raise SeriesTooShort(f"adx needs at least {2 * period} points, got {n}")
    up = high[1:] - high[:-1]
    down = low[:-1] - low[1:]
    plus_dm = np.where((up > down) & (up > 0), up, 0.0)
    minus_dm = np.where((down > up) & (down > 0), down, 0.0)
    tr = np.maximum.reduce(
        [high[1:] - low[1:], np.abs(high[1:] - close[:-1]), np.abs(low[1:] - close[:-1])]
    )

    # Wilder running means of TR and directional movement, first value a plain mean.
    atr = tr[:period].mean()
    pdm = plus_dm[:period].mean()
    mdm = minus_dm[:period].mean()

    def _dx(atr_, pdm_, mdm_):
        if atr_ == 0:
            return 0.0
        pdi = 100.0 * pdm_ / atr_
        mdi = 100.0 * mdm_ / atr_
        return 0.0 if pdi + mdi == 0 else 100.0 * abs(pdi - mdi) / (pdi + mdi)

    dx = np.full(n, np.nan)
    dx[period] = _dx(atr, pdm, mdm)
    for t in range(period + 1, n):
        atr = (atr * (period - 1) + tr[t - 1]) / period
        pdm = (pdm * (period - 1) + plus_dm[t - 1]) / period
        mdm = (mdm * (period - 1) + minus_dm[t - 1]) / period
        dx[t] = _dx(atr, pdm, mdm)

    out = np.full(n, np.nan)
    out[2 * period - 1] = dx[period : 2 * period].mean()
    for t in range(2 * period, n):
        out[t] = (out[t - 1] * (period - 1) + dx[t]) / period
    return out


@dataclass
class FeatureTensor:
    """K feature series per asset, aligned to decision slots.

    values has shape (K, N, T+1); entries before valid_from[k] are NaN and
    count as undefined, never as zero.
    """

    names: list[str]
    values: np.ndarray
    valid_from: list[int]

    @property
    def n_features(self) -> int:
        return self.values.shape[0]

    @property
    def first_valid_slot(self) -> int:
        return max(self.valid_from)

    def at(self, t: int) -> np.ndarray:
        """Feature matrix (N, K) at slot t; raises if any feature is undefined."""
        if t < self.first_valid_slot or t >= self.values.shape[2]:
            raise FeatureUndefined(t)
        block = self.values[:, :, t].T
        if not np.all(np.isfinite(block)):
            raise FeatureUndefined(t)
        return block


def compute_features(panel: PricePanel, params: IndicatorParams | None = None) -> FeatureTensor:
    """Indicator tensor for a panel, shifted so slot t only sees closes < t."""
    params = params or IndicatorParams()
    n, m = panel.n_assets, panel.n_slots
    raw = np.full((4, n, m), np.nan)
    for i in range(n):
        h, l, c = panel.high[i], panel.low[i], panel.close[i]
        raw[0, i] = macd(c, params.macd_fast, params.macd_slow, params.macd_signal)
        raw[1, i] = rsi(c, params.rsi_period)
        raw[2, i] = cci(h, l, c, params.cci_period)
        raw[3, i] = adx(h, l, c, params.adx_period)
    # shift by one slot: the value computed from closes through t-1 is what an
    # agent can see at the beginning of slot t
    values = np.full_like(raw, np.nan)
    values[:, :, 1:] = raw[:, :, :-1]
    raw_valid = [
        params.macd_slow - 1,
        params.rsi_period,
        params.cci_period - 1,
        2 * params.adx_period - 1,
    ]
    return FeatureTensor(
        names=list(FEATURE_NAMES), values=values, valid_from=[v + 1 for v in raw_valid]
    )


@dataclass
class FeatureScaler:
    """Per-feature division by the max absolute value seen on the fit slots.

    Deliberately does not demean: the cross-sectional sums that weight the
    regression coefficients must stay non-degenerate.
    """

    scales: np.ndarray = field(default_factory=lambda: np.array([]))

    def fit(self, features: FeatureTensor, slots: range | list[int]) -> "FeatureScaler":
        k = features.n_features
        scales = np.empty(k)
        for j in range(k):
            block = features.values[j][:, list(slots)]
            finite = block[np.isfinite(block)]
            peak = np.abs(finite).max() if finite.size else 0.0
            scales[j] = peak if peak > 0 else 1.0
        self.scales = scales
        return self

    def transform(self, features: FeatureTensor) -> FeatureTensor:
        if self.scales.size != features.n_features:
            raise ValueError("scaler not fitted for this tensor")
        values = features.values / self.scales[:, None, None]
        return FeatureTensor(
            names=list(features.names), values=values, valid_from=list(features.valid_from)
        )

    def to_dict(self) -> dict:
        return {"scales": [float(s) for s in self.scales]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        return cls(scales=np.asarray(d["scales"], dtype=float))


def build_state(
    panel: PricePanel, features: FeatureTensor, cov: CovEstimate, t: int
) -> np.ndarray:
    """State matrix s(t) of shape (N, N+K): K feature columns then the covariance.

    Row-major flattening maps the k-th feature of asset i to index
    i*(N+K) + k, which is how attribution indexes back into the state.
    """
    block = features.at(t)  # (N, K)
    if cov.slot != t:
        raise ValueError(f"covariance is for slot {cov.slot}, state for slot {t}")
    return np.hstack([block, cov.matrix])
