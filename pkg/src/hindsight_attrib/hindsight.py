"""Reference feature weights from a linear model fitted in hindsight.

For each slot the hindsight mean-variance portfolio w*(t) is computed with
the realized relative known, its per-asset contribution q*(t) = w*(t) * y(t)
is regressed cross-sectionally on the feature values, and each coefficient
is weighted by the cross-sectional feature sum.  The resulting per-slot
vector is the reference any other explanation is correlated against.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    FeatureUndefined,
    MissingColumn,
    MissingFile,
    NoOverlap,
    NonFiniteInput,
    RankDeficient,
    TooFewSamples,
    UnparsableRow,
)
from .features import FeatureTensor
from .market_data import PricePanel, price_relatives
from .mean_variance import hindsight_weights

logger = logging.getLogger(__name__)


def cross_sectional_ols(features: np.ndarray, target: np.ndarray):
    """Least squares fit of target on features plus an intercept.

    features is (N, K) across assets, target is (N,).  Returns
    (coefficients (K,), intercept).  A design matrix with condition number
    at or above 1e10 raises RankDeficient rather than returning noise.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(target, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DimensionMismatch(f"features {X.shape} incompatible with target {y.shape}")
    n, k = X.shape
    if n < k + 1:
        raise TooFewSamples(f"{n} assets cannot identify {k} coefficients plus intercept")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("regression inputs must be finite")
    design = np.hstack([np.ones((n, 1)), X])
    s = np.linalg.svd(design, compute_uv=False)
    if s[-1] == 0 or s[0] / s[-1] >= 1e10:
        raise RankDeficient(f"design condition {s[0] / max(s[-1], 1e-300):.3e}")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef[1:], float(coef[0])


@dataclass
class FeatureWeightSeries:
    """Per-slot feature weight vectors, one row per retained slot."""

    names: list[str]
    slots: np.ndarray
    values: np.ndarray
    skipped: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        self.slots = np.asarray(self.slots, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.slots.size, len(self.names)):
            raise DimensionMismatch(
                f"values {self.values.shape} != ({self.slots.size}, {len(self.names)})"
            )

    def __len__(self) -> int:
        return self.slots.size

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def slot_index(self) -> dict:
        return {int(t): i for i, t in enumerate(self.slots)}


def reference_slot_range(
    panel: PricePanel, features: FeatureTensor, window: int
) -> range:
    """Slots where both the features and the hindsight covariance exist."""
    start = max(features.first_valid_slot, window, 1)
    return range(start, panel.last_slot + 1)


def contribution_weights(features_block: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Feature weights from per-asset contributions: OLS slopes times feature sums."""
    coef, _ = cross_sectional_ols(features_block, q)
    return coef * np.asarray(features_block, dtype=float).sum(axis=0)


def reference_weights_at(
    panel: PricePanel,
    features: FeatureTensor,
    t: int,
    window: int,
    lam: float = 0.5,
) -> np.ndarray:
    """Reference weight vector for one slot: OLS coefficients times feature sums."""
    block = features.at(t)  # (N, K)
    hw = hindsight_weights(panel, t, window, lam)
    if not hw.converged:
        logger.warning("slot %d: hindsight solve did not converge, using best iterate", t)
    q = hw.weights * price_relatives(panel, t).values
    return contribution_weights(block, q)


def reference_pipeline(
    panel: PricePanel,
    features: FeatureTensor,
    window: int,
    lam: float = 0.5,
    slots: range | None = None,
) -> FeatureWeightSeries:
    """Reference weights over all feasible slots; degenerate slots are skipped."""
    slots = slots if slots is not None else reference_slot_range(panel, features, window)
    kept, rows, skipped = [], [], []
    for t in slots:
        try:
            rows.append(reference_weights_at(panel, features, t, window, lam))
            kept.append(t)
        except (RankDeficient, TooFewSamples, FeatureUndefined) as exc:
            skipped.append((t, type(exc).__name__))
            logger.info("slot %d skipped: %s", t, exc)
    if not kept:
        raise NoOverlap("no slot produced a reference weight vector")
    return FeatureWeightSeries(
        names=list(features.names),
        slots=np.asarray(kept),
        values=np.vstack(rows),
        skipped=skipped,
    )


def smooth_reference(series: FeatureWeightSeries, w: int) -> FeatureWeightSeries:
    """Forward average over w consecutive slots, anchored at the first one.

    The smoothed value at slot t averages the vectors at t .. t+w-1 and is
    only produced when all w slots are present in the input.  w=1 returns
    the series unchanged apart from a fresh copy.
    """
    if w < 1:
        raise ValueError(f"window must be >= 1, got {w}")
    index = series.slot_index()
    kept, rows = [], []
    for i, t in enumerate(series.slots):
        needed = [int(t) + j for j in range(w)]
        if all(s in index for s in needed):
            rows.append(series.values[[index[s] for s in needed]].mean(axis=0))
            kept.append(int(t))
    if not kept:
        raise NoOverlap(f"no slot has {w} consecutive successors")
    return FeatureWeightSeries(
        names=list(series.names), slots=np.asarray(kept), values=np.vstack(rows)
    )


def save_weight_series(
    series: FeatureWeightSeries, dates: list[str], path, prefix: str = "beta"
) -> None:
    """Write one row per slot as date,<prefix>_<name>,... using repr floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + [f"{prefix}_{n}" for n in series.names])
        for i, t in enumerate(series.slots):
            writer.writerow([dates[int(t)]] + [repr(float(v)) for v in series.values[i]])


def load_weight_series(path, dates: list[str], prefix: str = "beta") -> FeatureWeightSeries:
    """Read a weight series CSV back, mapping dates to slots via the panel dates."""
    date_to_slot = {d: i for i, d in enumerate(dates)}
    try:
        fh = open(path, newline="")
    except FileNotFoundError as exc:
        raise MissingFile(str(path)) from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "date":
            raise MissingColumn(f"{path}: expected leading date column")
        names = []
        for col in header[1:]:
            if not col.startswith(prefix + "_"):
                raise MissingColumn(f"{path}: column {col!r} lacks prefix {prefix!r}")
            names.append(col[len(prefix) + 1 :])
        slots, rows = [], []
        for ln, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise UnparsableRow(ln, f"expected {len(header)} fields, got {len(row)}")
            if row[0] not in date_to_slot:
                raise UnparsableRow(ln, f"date {row[0]!r} not in the panel")
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise UnparsableRow(ln, str(exc)) from exc
            slots.append(date_to_slot[row[0]])
    return FeatureWeightSeries(names=names, slots=np.asarray(slots), values=np.asarray(rows))
