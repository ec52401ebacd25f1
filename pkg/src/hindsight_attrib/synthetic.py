"""Synthetic markets with known structure.

Three generators: a plain OHLCV random walk (exercises the indicator
route), a market where one feature determines the next relative exactly
(optimizer and learning smoke tests), and a market with a persistent
planted alpha plus per-slot noise (the ordering experiments).  The planted
generators return the feature tensor directly instead of deriving it from
indicators, so the information content is exactly what was planted.
"""
from __future__ import annotations

import datetime
import logging

import numpy as np

from .features import FEATURE_NAMES, FeatureTensor
from .market_data import PricePanel

logger = logging.getLogger(__name__)


def _dates(n: int, start: str = "2015-01-01") -> list[str]:
    d0 = datetime.date.fromisoformat(start)
    return [(d0 + datetime.timedelta(days=i)).isoformat() for i in range(n)]


def _tickers(n: int) -> list[str]:
    return [f"A{i:02d}" for i in range(n)]


def _ar1(rng: np.random.Generator, n: int, t: int, phi: float) -> np.ndarray:
    """Stationary unit-variance AR(1) paths, shape (n, t)."""
    x = np.empty((n, t))
    x[:, 0] = rng.standard_normal(n)
    innov = np.sqrt(1.0 - phi * phi) * rng.standard_normal((n, t - 1))
    for j in range(1, t):
        x[:, j] = phi * x[:, j - 1] + innov[:, j - 1]
    return x


def _panel_from_relatives(
    rel: np.ndarray, rng: np.random.Generator, start: str = "2015-01-01"
) -> PricePanel:
    """OHLCV panel whose close path realizes the given (T, N) relatives."""
    t, n = rel.shape
    close = np.empty((n, t + 1))
    close[:, 0] = 100.0 * rng.uniform(0.5, 1.5, n)
    for j in range(t):
        close[:, j + 1] = close[:, j] * rel[j]
    open_ = np.empty_like(close)
    open_[:, 0] = close[:, 0]
    open_[:, 1:] = close[:, :-1]
    stretch = rng.uniform(0.0, 0.002, close.shape)
    high = np.maximum(open_, close) * (1.0 + stretch)
    low = np.minimum(open_, close) * (1.0 - stretch)
    volume = rng.integers(100_000, 1_000_000, close.shape).astype(float)
    panel = PricePanel(
        tickers=_tickers(n),
        dates=_dates(t + 1, start),
        open=open_,
        high=high,
        low=low,
        close=close,
        volume=volume,
    )
    panel.validate()
    return panel


def ohlcv_panel(n_assets: int = 8, n_slots: int = 400, seed: int = 0) -> PricePanel:
    """Geometric random walk panel with per-asset drift and volatility."""
    rng = np.random.default_rng((seed, 11))
    drift = rng.uniform(-1e-4, 4e-4, n_assets)
    vol = rng.uniform(0.005, 0.02, n_assets)
    shocks = rng.standard_normal((n_slots - 1, n_assets))
    rel = np.exp(drift + vol * shocks)
    return _panel_from_relatives(rel, rng)


def _feature_tensor(paths: np.ndarray) -> FeatureTensor:
    """Wrap (K, N, T+1) paths as a tensor undefined only at slot 0."""
    values = paths.copy()
    values[:, :, 0] = np.nan
    k = values.shape[0]
    return FeatureTensor(names=list(FEATURE_NAMES[:k]), values=values, valid_from=[1] * k)


def planted_linear_market(
    n_assets: int = 10,
    n_slots: int = 400,
    seed: int = 0,
    c: float = 0.05,
    noise: float = 0.0,
):
    """Market where feature 1 sets the relative: y(t) = 1 + c*f1(t) (+ noise).

    With noise=0 the first feature predicts next-slot relatives exactly.
    Returns (panel, features); the remaining features are uninformative.
    """
    rng = np.random.default_rng((seed, 12))
    k = len(FEATURE_NAMES)
    paths = rng.uniform(-1.0, 1.0, (k, n_assets, n_slots + 1))
    rel = 1.0 + c * paths[0, :, 1:].T
    if noise > 0:
        rel = rel + noise * rng.standard_normal(rel.shape)
    rel = np.maximum(rel, 0.5)
    panel = _panel_from_relatives(rel, rng)
    return panel, _feature_tensor(paths)


def persistent_alpha_market(
    n_assets: int = 10,
    n_slots: int = 700,
    seed: int = 0,
    phi: float = 0.97,
    c: float = 0.02,
    eps: float = 0.012,
    noise_phi: float = 0.5,
):
    """Market with a slow-moving planted alpha and fast per-slot noise.

    Feature 1 follows a stationary AR(1) with persistence phi (half-life
    about ln 2 / (1 - phi) slots), and relatives realize
    y(t) = 1 + c*f1(t) + eps*noise.  Features 2..K are persistent but carry
    no alpha.  The alpha horizon is what separates explanations that track
    the slow component from ones that chase the per-slot noise.
    """
    rng = np.random.default_rng((seed, 13))
    k = len(FEATURE_NAMES)
    paths = np.empty((k, n_assets, n_slots + 1))
    paths[0] = _ar1(rng, n_assets, n_slots + 1, phi)
    for j in range(1, k):
        paths[j] = _ar1(rng, n_assets, n_slots + 1, noise_phi)
    rel = 1.0 + c * paths[0, :, 1:].T + eps * rng.standard_normal((n_slots, n_assets))
    rel = np.maximum(rel, 0.5)
    panel = _panel_from_relatives(rel, rng)
    return panel, _feature_tensor(paths)
