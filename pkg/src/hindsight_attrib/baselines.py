"""From-scratch regression baselines and their forward-pass feature weights.

Each model learns to predict the next price relative of an asset from that
asset's feature values, pooled over assets and training slots.  Predictions
feed the same mean-variance solver the other strategies use, and the
resulting portfolios are converted to per-slot feature weights b(t) by the
same contribution regression the hindsight reference uses.
"""
from __future__ import annotations

import json
import logging
from typing import Iterable

import numpy as np

from .errors import (
    DegenerateTarget,
    DimensionMismatch,
    ModelNotFitted,
    NoOverlap,
    NonFiniteInput,
    RankDeficient,
    TooFewSamples,
)
from .features import FeatureTensor
from .hindsight import FeatureWeightSeries, contribution_weights
from .market_data import PricePanel, price_relatives, sample_covariance
from .mean_variance import MVProblem, PortfolioWeights, solve

logger = logging.getLogger(__name__)

KIND_ALIASES = {
    "lr": "LinearRegression",
    "dt": "DecisionTree",
    "rf": "RandomForest",
    "svm": "LinearSVR",
}


def _check_xy(X: np.ndarray, y: np.ndarray):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DimensionMismatch(f"X {X.shape} incompatible with y {y.shape}")
    if X.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 samples, got {X.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("training data must be finite")
    return X, y


class LinearRegression:
    """Ordinary least squares with an intercept."""

    kind = "LinearRegression"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.coef = None
        self.intercept = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LinearRegression":
        X, y = _check_xy(X, y)
        design = np.hstack([np.ones((X.shape[0], 1)), X])
        sol, *_ = np.linalg.lstsq(design, y, rcond=None)
        self.intercept = float(sol[0])
        self.coef = sol[1:]
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.coef is None:
            raise ModelNotFitted("LinearRegression.predict before fit")
        return np.asarray(X, dtype=float) @ self.coef + self.intercept

    def params_dict(self) -> dict:
        return {"coef": self.coef.tolist(), "intercept": self.intercept}

    def load_params(self, d: dict):
        self.coef = np.asarray(d["coef"], dtype=float)
        self.intercept = float(d["intercept"])


def _best_split(X, y, cols, min_leaf):
    """Lowest-SSE axis-aligned split; first feature and threshold win ties."""
    n = y.size
    best = None  # (sse, feature, threshold)
    for j in cols:
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        left_n = np.arange(1, n)
        right_n = n - left_n
        ok = (xs[1:] > xs[:-1]) & (left_n >= min_leaf) & (right_n >= min_leaf)
        if not ok.any():
            continue
        left_sse = csq[:-1] - csum[:-1] ** 2 / left_n
        right_sse = (csq[-1] - csq[:-1]) - (csum[-1] - csum[:-1]) ** 2 / right_n
        sse = np.where(ok, left_sse + right_sse, np.inf)
        i = int(np.argmin(sse))
        if best is None or sse[i] < best[0]:
            best = (float(sse[i]), j, float((xs[i] + xs[i + 1]) / 2.0))
    return best


class DecisionTree:
    """CART regression tree splitting on variance reduction.

    Thresholds sit at midpoints of adjacent distinct values; ties between
    candidate splits resolve to the first feature and lowest threshold in
    scan order, so the tree is deterministic without any randomness.
    """

    kind = "DecisionTree"

    def __init__(
        self,
        max_depth: int | None = None,
        min_samples_leaf: int = 1,
        max_features: int | None = None,
        seed: int = 0,
    ):
        self.max_depth = max_depth
        self.min_samples_leaf = int(min_samples_leaf)
        self.max_features = max_features
        self.seed = seed
        self.root = None

    def _grow(self, X, y, depth, rng):
        node_sse = float(((y - y.mean()) ** 2).sum())
        leaf = {"value": float(y.mean())}
        if (
            node_sse == 0.0
            or y.size < 2 * self.min_samples_leaf
            or (self.max_depth is not None and depth >= self.max_depth)
        ):
            return leaf
        k = X.shape[1]
        if rng is not None and self.max_features is not None and self.max_features < k:
            cols = np.sort(rng.choice(k, size=self.max_features, replace=False))
        else:
            cols = range(k)
        best = _best_split(X, y, cols, self.min_samples_leaf)
        if best is None or best[0] >= node_sse:
            return leaf
        _, j, thr = best
        mask = X[:, j] <= thr
        return {
            "feature": int(j),
            "threshold": thr,
            "left": self._grow(X[mask], y[mask], depth + 1, rng),
            "right": self._grow(X[~mask], y[~mask], depth + 1, rng),
        }

    def fit(self, X: np.ndarray, y: np.ndarray) -> "DecisionTree":
        X, y = _check_xy(X, y)
        needs_rng = self.max_features is not None and self.max_features < X.shape[1]
        rng = np.random.default_rng(self.seed) if needs_rng else None
        self.root = self._grow(X, y, 0, rng)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.root is None:
            raise ModelNotFitted("DecisionTree.predict before fit")
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            node = self.root
            while "value" not in node:
                node = node["left"] if row[node["feature"]] <= node["threshold"] else node["right"]
            out[i] = node["value"]
        return out

    def params_dict(self) -> dict:
        return {"root": self.root}

    def load_params(self, d: dict):
        self.root = d["root"]


class RandomForest:
    """Bagged CART trees with optional per-split feature subsampling.

    With one tree, bootstrap off and no feature subsampling the forest
    reproduces a plain DecisionTree exactly.  Per-tree randomness derives
    from the root seed, so refits are bit-identical.
    """

    kind = "RandomForest"

    def __init__(
        self,
        n_trees: int = 25,
        max_depth: int | None = 6,
        min_samples_leaf: int = 2,
        max_features: int | None = None,
        bootstrap: bool = True,
        seed: int = 0,
    ):
        self.n_trees = int(n_trees)
        self.max_depth = max_depth
        self.min_samples_leaf = int(min_samples_leaf)
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees: list[DecisionTree] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForest":
        X, y = _check_xy(X, y)
        self.trees = []
        for i in range(self.n_trees):
            tree = DecisionTree(
                max_depth=self.max_depth,
                min_samples_leaf=self.min_samples_leaf,
                max_features=self.max_features,
                seed=(self.seed, i, 1),
            )
            if self.bootstrap:
                idx = np.random.default_rng((self.seed, i, 0)).integers(0, y.size, y.size)
                tree.fit(X[idx], y[idx])
            else:
                tree.fit(X, y)
            self.trees.append(tree)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if not self.trees:
            raise ModelNotFitted("RandomForest.predict before fit")
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def params_dict(self) -> dict:
        return {"roots": [t.root for t in self.trees]}

    def load_params(self, d: dict):
        self.trees = []
        for root in d["roots"]:
            tree = DecisionTree(
                max_depth=self.max_depth,
                min_samples_leaf=self.min_samples_leaf,
                max_features=self.max_features,
            )
            tree.root = root
            self.trees.append(tree)


class LinearSVR:
    """Linear support vector regression with an epsilon-insensitive loss.

    Minimizes 0.5||w||^2 + C * sum max(0, |residual| - eps) on standardized
    inputs and targets by full-batch subgradient descent.  Steps that would
    raise the objective are halved until they do not, so the recorded
    objective trace is non-increasing and the fit is deterministic.
    """

    kind = "LinearSVR"

    def __init__(
        self,
        eps: float = 0.01,
        c: float = 1.0,
        lr: float = 0.01,
        max_epochs: int = 500,
        seed: int = 0,
    ):
        self.eps = float(eps)
        self.c = float(c)
        self.lr = float(lr)
        self.max_epochs = int(max_epochs)
        self.seed = seed
        self.w = None
        self.b = 0.0
        self.x_mean = None
        self.x_scale = None
        self.y_mean = 0.0
        self.y_scale = 1.0
        self.trace: list[float] = []

    def _objective(self, Xs, ys, w, b):
        resid = ys - (Xs @ w + b)
        slack = np.maximum(np.abs(resid) - self.eps, 0.0)
        return float(0.5 * w @ w + self.c * slack.sum())

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LinearSVR":
        X, y = _check_xy(X, y)
        ystd = float(y.std())
        if ystd == 0.0:
            raise DegenerateTarget("target has zero variance, cannot standardize")
        self.y_mean, self.y_scale = float(y.mean()), ystd
        self.x_mean = X.mean(axis=0)
        xstd = X.std(axis=0)
        self.x_scale = np.where(xstd > 0, xstd, 1.0)
        Xs = (X - self.x_mean) / self.x_scale
        ys = (y - self.y_mean) / self.y_scale

        w = np.zeros(X.shape[1])
        b = 0.0
        obj = self._objective(Xs, ys, w, b)
        lr = self.lr
        self.trace = [obj]
        for _ in range(self.max_epochs):
            resid = ys - (Xs @ w + b)
            active = np.abs(resid) > self.eps
            sign = np.sign(resid) * active
            gw = w - self.c * (sign @ Xs)
            gb = -self.c * sign.sum()
            stepped = False
            while lr >= 1e-15:
                cw, cb = w - lr * gw, b - lr * gb
                cobj = self._objective(Xs, ys, cw, cb)
                if cobj <= obj:
                    w, b, obj = cw, cb, cobj
                    lr = min(lr * 1.25, 1.0)
                    stepped = True
                    break
                lr *= 0.5
            self.trace.append(obj)
            if not stepped:
                break
        self.w, self.b = w, b
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.w is None:
            raise ModelNotFitted("LinearSVR.predict before fit")
        Xs = (np.asarray(X, dtype=float) - self.x_mean) / self.x_scale
        return (Xs @ self.w + self.b) * self.y_scale + self.y_mean

    def params_dict(self) -> dict:
        return {
            "w": self.w.tolist(),
            "b": self.b,
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
        }

    def load_params(self, d: dict):
        self.w = np.asarray(d["w"], dtype=float)
        self.b = float(d["b"])
        self.x_mean = np.asarray(d["x_mean"], dtype=float)
        self.x_scale = np.asarray(d["x_scale"], dtype=float)
        self.y_mean = float(d["y_mean"])
        self.y_scale = float(d["y_scale"])


_KINDS = {m.kind: m for m in (LinearRegression, DecisionTree, RandomForest, LinearSVR)}


def fit(kind: str, X: np.ndarray, y: np.ndarray, hyperparams: dict | None = None, seed: int = 0):
    """Fit one of the four baseline kinds; accepts CLI aliases lr/dt/rf/svm."""
    kind = KIND_ALIASES.get(kind, kind)
    if kind not in _KINDS:
        raise ValueError(f"unknown model kind {kind!r}, expected one of {sorted(_KINDS)}")
    model = _KINDS[kind](seed=seed, **(hyperparams or {}))
    return model.fit(X, y)


def save_model(model, path) -> None:
    payload = {
        "format": 1,
        "kind": model.kind,
        "seed": model.seed if not isinstance(model.seed, tuple) else list(model.seed),
        "params": model.params_dict(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        payload = json.load(fh)
    model = _KINDS[payload["kind"]]()
    model.load_params(payload["params"])
    return model


def pooled_training_data(
    panel: PricePanel, features: FeatureTensor, slots: Iterable[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Stack (asset, slot) samples: features at t predict the slot-t relative."""
    xs, ys = [], []
    for t in slots:
        xs.append(features.at(t))
        ys.append(price_relatives(panel, t).values)
    if not xs:
        raise TooFewSamples("no training slots supplied")
    return np.vstack(xs), np.concatenate(ys)


def predict_returns(model, features_block: np.ndarray) -> np.ndarray:
    """Per-asset next-relative predictions from the (N, K) feature block."""
    return np.asarray(model.predict(features_block), dtype=float)


def ml_strategy_weights(
    model, features_block: np.ndarray, sigma: np.ndarray, lam: float = 0.5
) -> PortfolioWeights:
    """Mean-variance weights under the model's predicted relatives."""
    mu = predict_returns(model, features_block)
    return solve(MVProblem(mu=mu, sigma=sigma, lam=lam))


def ml_feature_weights(q: np.ndarray, features_block: np.ndarray) -> np.ndarray:
    """b(t): contribution regression of q(t) = w(t) * y(t) on the features."""
    return contribution_weights(features_block, q)


def ml_weight_series(
    model,
    panel: PricePanel,
    features: FeatureTensor,
    window: int,
    lam: float = 0.5,
    slots: Iterable[int] | None = None,
) -> FeatureWeightSeries:
    """Per-slot b(t) series for a fitted model over feasible slots."""
    if slots is None:
        slots = range(max(features.first_valid_slot, window + 1), panel.last_slot + 1)
    kept, rows, skipped = [], [], []
    for t in slots:
        block = features.at(t)
        cov = sample_covariance(panel, t, window)
        pw = ml_strategy_weights(model, block, cov.matrix, lam)
        q = pw.weights * price_relatives(panel, t).values
        try:
            rows.append(ml_feature_weights(q, block))
            kept.append(int(t))
        except (RankDeficient, TooFewSamples) as exc:
            skipped.append((int(t), type(exc).__name__))
            logger.info("slot %d skipped: %s", t, exc)
    if not kept:
        raise NoOverlap("no slot produced ML feature weights")
    return FeatureWeightSeries(
        names=list(features.names),
        slots=np.asarray(kept),
        values=np.vstack(rows),
        skipped=skipped,
    )


def r_squared(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Coefficient of determination against the mean predictor."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    ss_res = float(((y_true - y_pred) ** 2).sum())
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else float("-inf")
    return 1.0 - ss_res / ss_tot
