"""Path-integral attributions and prediction-power statistics.

Attribution of a scalar network output to individual inputs follows the
integrated-gradients construction: average the gradient along the straight
line from a baseline to the input, then scale by the displacement.  The
integral is approximated by a midpoint Riemann sum, which converges to the
exact path integral as the step count grows and is exact for linear models
with a single step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import (
    DimensionMismatch,
    NoOverlap,
    NonFiniteInput,
    TooFewSamples,
    ZeroVariance,
)
from .hindsight import FeatureWeightSeries

logger = logging.getLogger(__name__)

# one-sided normal critical values
Z_10_PERCENT = 1.2816
Z_5_PERCENT = 1.6449


def ig_along_path(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    baseline: np.ndarray,
    steps: int = 64,
) -> np.ndarray:
    """Attribution vector (x - baseline) * mean gradient along the segment.

    grad_fn maps a (m, d) batch of points to the (m, d) gradients of the
    scalar function being explained.
    """
    x = np.asarray(x, dtype=float).ravel()
    baseline = np.asarray(baseline, dtype=float).ravel()
    if x.shape != baseline.shape:
        raise DimensionMismatch(f"x {x.shape} vs baseline {baseline.shape}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    alphas = (np.arange(steps) + 0.5) / steps
    points = baseline[None, :] + alphas[:, None] * (x - baseline)[None, :]
    grads = np.asarray(grad_fn(points), dtype=float)
    if grads.shape != points.shape:
        raise DimensionMismatch(f"grad_fn returned {grads.shape}, expected {points.shape}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteInput("gradient along the path is not finite")
    return (x - baseline) * grads.mean(axis=0)


def feature_indices(n_assets: int, n_features: int, k: int) -> np.ndarray:
    """Flat indices of feature k across assets in a row-major (N, N+K) state."""
    if not 0 <= k < n_features:
        raise IndexError(f"feature {k} outside [0, {n_features})")
    width = n_assets + n_features
    return np.arange(n_assets) * width + k


def zero_feature_baseline(
    x: np.ndarray, n_assets: int, n_features: int, k: int | None = None
) -> np.ndarray:
    """Copy of the flattened state with feature k (or every feature) zeroed.

    Covariance entries are left untouched; the baseline only removes the
    signal whose contribution is being measured.
    """
    x = np.asarray(x, dtype=float).ravel()
    width = n_assets + n_features
    if x.size != n_assets * width:
        raise DimensionMismatch(f"state length {x.size} != {n_assets}*{width}")
    out = x.copy()
    ks = range(n_features) if k is None else [k]
    for j in ks:
        out[feature_indices(n_assets, n_features, j)] = 0.0
    return out


def feature_attribution(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    n_assets: int,
    n_features: int,
    k: int,
    steps: int = 64,
) -> float:
    """Total attribution of feature k: per-asset contributions summed.

    Uses the per-feature path whose baseline zeroes only feature k's column,
    so every other input is held at its actual value.
    """
    baseline = zero_feature_baseline(x, n_assets, n_features, k)
    attr = ig_along_path(grad_fn, x, baseline, steps)
    return float(attr[feature_indices(n_assets, n_features, k)].sum())


def net_grad_fn(net) -> Callable[[np.ndarray], np.ndarray]:
    """Gradient closure over a scalar-output DenseNet."""
    if net.out_dim != 1:
        raise DimensionMismatch(f"scalar function expected, net has {net.out_dim} outputs")
    return net.input_gradient


def drl_feature_weights(
    critic,
    state_fn: Callable[[int], np.ndarray],
    slots: Iterable[int],
    n_assets: int,
    names: list[str],
    steps: int = 64,
) -> FeatureWeightSeries:
    """Per-slot feature weights of a trained critic.

    For each slot the state is rebuilt, and each feature column's integrated
    gradient against the critic value is summed across assets.
    """
    grad_fn = net_grad_fn(critic)
    k = len(names)
    kept, rows = [], []
    for t in slots:
        x = np.asarray(state_fn(t), dtype=float).ravel()
        rows.append(
            [feature_attribution(grad_fn, x, n_assets, k, j, steps) for j in range(k)]
        )
        kept.append(int(t))
    if not kept:
        raise NoOverlap("no slots supplied for attribution")
    return FeatureWeightSeries(names=list(names), slots=np.asarray(kept), values=np.asarray(rows))


def correlate(u: np.ndarray, v: np.ndarray) -> float:
    """Pearson correlation; NaN when either side has no variation."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise DimensionMismatch(f"length mismatch {u.shape} vs {v.shape}")
    if u.size < 2:
        raise TooFewSamples("correlation needs at least two points")
    du = u - u.mean()
    dv = v - v.mean()
    su = np.sqrt(du @ du)
    sv = np.sqrt(dv @ dv)
    if su == 0.0 or sv == 0.0:
        return float("nan")
    # rounding can push exactly collinear vectors a couple ulp past +-1
    return float(np.clip(du @ dv / (su * sv), -1.0, 1.0))


@dataclass
class PredictionPower:
    """Per-slot correlations against the immediate and smoothed references."""

    slots: np.ndarray
    rho_single: np.ndarray
    rho_multi: np.ndarray

    def __post_init__(self):
        self.slots = np.asarray(self.slots, dtype=int)
        self.rho_single = np.asarray(self.rho_single, dtype=float)
        self.rho_multi = np.asarray(self.rho_multi, dtype=float)

    def defined(self, which: str) -> np.ndarray:
        rho = getattr(self, f"rho_{which}")
        return rho[np.isfinite(rho)]

    def n_undefined(self, which: str) -> int:
        rho = getattr(self, f"rho_{which}")
        return int(np.size(rho) - np.isfinite(rho).sum())


def prediction_power(
    explained: FeatureWeightSeries,
    reference: FeatureWeightSeries,
    smoothed: FeatureWeightSeries,
) -> PredictionPower:
    """Correlate an explanation series against both reference horizons.

    Only slots present in all three series are scored, so the two columns
    stay aligned row for row.  Slots where a correlation is undefined keep
    a NaN entry and are excluded from the summary statistics.
    """
    if explained.names != reference.names or explained.names != smoothed.names:
        raise DimensionMismatch("feature name order differs between series")
    ei, ri, si = explained.slot_index(), reference.slot_index(), smoothed.slot_index()
    slots = sorted(set(ei) & set(ri) & set(si))
    if not slots:
        raise NoOverlap("explanation and reference series share no slots")
    rho_s, rho_m = [], []
    for t in slots:
        e = explained.values[ei[t]]
        rho_s.append(correlate(e, reference.values[ri[t]]))
        rho_m.append(correlate(e, smoothed.values[si[t]]))
    pp = PredictionPower(np.asarray(slots), np.asarray(rho_s), np.asarray(rho_m))
    for which in ("single", "multi"):
        n_bad = pp.n_undefined(which)
        if n_bad:
            logger.info("%d undefined %s-slot correlations excluded", n_bad, which)
    return pp


@dataclass
class ZTestResult:
    z: float
    stars: str
    n: int
    mean: float
    std: float


def z_from_stats(mean: float, std: float, n: int) -> ZTestResult:
    """Upper-tail Z statistic mean / (std / sqrt(n)) with significance stars.

    "***" marks the 5% one-sided level (z > 1.6449), "**" the 10% level
    (z > 1.2816); anything lower earns no stars.
    """
    if n < 2:
        raise TooFewSamples(f"need at least two samples, got {n}")
    if std <= 0:
        raise ZeroVariance("standard deviation must be positive")
    z = mean / (std / np.sqrt(n))
    stars = "***" if z > Z_5_PERCENT else "**" if z > Z_10_PERCENT else ""
    return ZTestResult(z=float(z), stars=stars, n=int(n), mean=float(mean), std=float(std))


def upper_tail_z(values: np.ndarray) -> ZTestResult:
    """Z test that the mean of the sample is above zero."""
    v = np.asarray(values, dtype=float).ravel()
    v = v[np.isfinite(v)]
    if v.size < 2:
        raise TooFewSamples("need at least two finite values")
    return z_from_stats(float(v.mean()), float(v.std(ddof=1)), int(v.size))


def correlation_histogram(values: np.ndarray, bins: int = 20):
    """Counts over uniform bins spanning [-1, 1]; NaNs are dropped."""
    v = np.asarray(values, dtype=float).ravel()
    v = v[np.isfinite(v)]
    return np.histogram(v, bins=bins, range=(-1.0, 1.0))
