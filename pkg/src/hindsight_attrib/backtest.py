"""Walk-forward backtesting and performance metrics.

A strategy is anything that maps a decision slot to simplex weights using
only information available at the beginning of that slot.  The one labeled
exception is the hindsight strategy, which deliberately peeks at the slot's
realized relative; it exists as the explanation reference, not as a
tradable policy.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NotOnSimplex, SlotOutOfRange, TooFewSamples, ZeroVolatility
from .features import FeatureTensor, build_state
from .market_data import PricePanel, price_relatives, sample_covariance
from .mean_variance import equal_weights, hindsight_weights

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-8


@dataclass
class StrategyHandle:
    """A named weight source for the backtester."""

    kind: str  # drl | ml | equal_weight | hindsight
    name: str
    weight_fn: Callable[[int], np.ndarray]
    deterministic: bool = True
    uses_hindsight: bool = False


@dataclass
class BacktestResult:
    strategy: str
    kind: str
    slots: np.ndarray
    weights: np.ndarray  # (S, N)
    log_returns: np.ndarray  # (S,)
    values: np.ndarray  # (S+1,), values[0] = 1

    @property
    def final_value(self) -> float:
        return float(self.values[-1])


def equal_weight_strategy(n_assets: int) -> StrategyHandle:
    w = equal_weights(n_assets)
    return StrategyHandle(kind="equal_weight", name="equal_weight", weight_fn=lambda t: w)


def hindsight_strategy(panel: PricePanel, window: int, lam: float = 0.5) -> StrategyHandle:
    def weight_fn(t: int) -> np.ndarray:
        return hindsight_weights(panel, t, window, lam).weights

    return StrategyHandle(
        kind="hindsight", name="hindsight", weight_fn=weight_fn, uses_hindsight=True
    )


def ml_strategy(
    model, panel: PricePanel, features: FeatureTensor, window: int, lam: float = 0.5,
    name: str | None = None,
) -> StrategyHandle:
    from .baselines import ml_strategy_weights

    def weight_fn(t: int) -> np.ndarray:
        cov = sample_covariance(panel, t, window)
        return ml_strategy_weights(model, features.at(t), cov.matrix, lam).weights

    return StrategyHandle(kind="ml", name=name or model.kind, weight_fn=weight_fn)


def drl_strategy(
    bundle, panel: PricePanel, features: FeatureTensor, window: int, name: str | None = None
) -> StrategyHandle:
    def weight_fn(t: int) -> np.ndarray:
        cov = sample_covariance(panel, t, window)
        return bundle.act(build_state(panel, features, cov, t).ravel())

    return StrategyHandle(kind="drl", name=name or bundle.algo.lower(), weight_fn=weight_fn)


def run(strategy: StrategyHandle, panel: PricePanel, t_lo: int, t_hi: int) -> BacktestResult:
    """Realize the strategy over slots [t_lo, t_hi].

    Weights are requested one slot at a time and applied to that slot's
    relative; the cumulative curve starts at 1.  Errors from a slot abort
    the run after logging which slot failed.
    """
    if not 1 <= t_lo <= t_hi <= panel.last_slot:
        raise SlotOutOfRange(f"trade range [{t_lo}, {t_hi}] outside [1, {panel.last_slot}]")
    slots = np.arange(t_lo, t_hi + 1)
    weights = np.empty((slots.size, panel.n_assets))
    log_returns = np.empty(slots.size)
    values = np.empty(slots.size + 1)
    values[0] = 1.0
    for i, t in enumerate(slots):
        try:
            w = np.asarray(strategy.weight_fn(int(t)), dtype=float)
        except Exception:
            logger.error("strategy %s failed at slot %d", strategy.name, t)
            raise
        if w.shape != (panel.n_assets,) or np.any(w < -1e-12) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise NotOnSimplex(f"slot {t}: strategy {strategy.name} weights off the simplex")
        growth = float(w @ price_relatives(panel, int(t)).values)
        weights[i] = w
        log_returns[i] = math.log(growth)
        values[i + 1] = values[i] * growth
    return BacktestResult(
        strategy=strategy.name,
        kind=strategy.kind,
        slots=slots,
        weights=weights,
        log_returns=log_returns,
        values=values,
    )


def max_drawdown(values: np.ndarray) -> float:
    """Most negative fractional drop of the curve below its running peak."""
    values = np.asarray(values, dtype=float)
    peaks = np.maximum.accumulate(values)
    return float((values / peaks - 1.0).min())


def metrics(result: BacktestResult, periods_per_year: int = 252, risk_free: float = 0.0) -> dict:
    """Summary record: value endpoints, annualized return/volatility, Sharpe,
    max drawdown and Calmar.

    Volatility uses the sample standard deviation of simple returns
    exp(r(t)) - 1.  Zero volatility makes the Sharpe undefined and raises;
    zero drawdown reports an infinite Calmar instead of failing.
    """
    t = result.log_returns.size
    if t < 2:
        raise TooFewSamples(f"metrics need at least 2 slots, got {t}")
    growth = result.values[-1] / result.values[0]
    annual_return = growth ** (periods_per_year / t) - 1.0
    rho = np.exp(result.log_returns) - 1.0
    std = float(rho.std(ddof=1))
    if std == 0.0:
        raise ZeroVolatility("returns have zero sample deviation, Sharpe undefined")
    annual_vol = std * math.sqrt(periods_per_year)
    sharpe = (float(rho.mean()) * periods_per_year - risk_free) / annual_vol
    mdd = max_drawdown(result.values)
    calmar = math.inf if mdd == 0.0 else annual_return / abs(mdd)
    return {
        "initial_value": float(result.values[0]),
        "final_value": float(result.values[-1]),
        "annual_return": float(annual_return),
        "annual_volatility": float(annual_vol),
        "sharpe": float(sharpe),
        "max_drawdown": float(mdd),
        "calmar": float(calmar),
    }


def save_backtest_csv(result: BacktestResult, dates: list[str], path) -> None:
    """Rows date,return,value: the slot's log-return and the value after it."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "return", "value"])
        for i, t in enumerate(result.slots):
            writer.writerow(
                [dates[int(t)], repr(float(result.log_returns[i])), repr(float(result.values[i + 1]))]
            )


def _jsonable(obj):
    """Strict-JSON clone: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def save_metrics_json(table: dict, path) -> None:
    """Metric records keyed by strategy name, stable key order."""
    with open(path, "w") as fh:
        json.dump(_jsonable(table), fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
