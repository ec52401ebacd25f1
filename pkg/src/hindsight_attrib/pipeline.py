"""Stage implementations behind the CLI subcommands.

Each stage reads its inputs from the output directory of the previous one,
writes delimited artifacts plus rendered figures, and records a manifest
with content hashes so reruns can be checked for byte identity.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os

import numpy as np

from . import __version__, plots
from .agents import AgentBundle, PortfolioEnv, save_learning_curve, train
from .attribution import (
    correlation_histogram,
    drl_feature_weights,
    prediction_power,
    upper_tail_z,
)
from .backtest import (
    _jsonable,
    drl_strategy,
    equal_weight_strategy,
    hindsight_strategy,
    metrics,
    ml_strategy,
    run,
    save_backtest_csv,
    save_metrics_json,
)
from .baselines import (
    KIND_ALIASES,
    fit,
    load_model,
    ml_weight_series,
    pooled_training_data,
    save_model,
)
from .config import RunConfig
from .errors import ConfigError, EmptyIntersection, InsufficientHistory, MissingFile
from .features import FeatureScaler, FeatureTensor, build_state, compute_features
from .hindsight import reference_pipeline, save_weight_series, smooth_reference
from .market_data import PricePanel, load_panel, sample_covariance, save_panel

logger = logging.getLogger(__name__)


def slots_for_range(panel: PricePanel, date_range: tuple[str, str]) -> tuple[int, int]:
    """First and last slot whose date falls inside the inclusive range."""
    lo, hi = date_range
    idx = [i for i, d in enumerate(panel.dates) if lo <= d <= hi]
    if not idx:
        raise EmptyIntersection(f"no panel dates inside [{lo}, {hi}]")
    return idx[0], idx[-1]


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: RunConfig, stage: str, inputs: list[str], outputs: list[str]) -> str:
    """Record config and content hashes; paths are stored relative to out_dir."""
    def rel(paths):
        table = {}
        for p in paths:
            key = os.path.relpath(p, cfg.out_dir) if p.startswith(cfg.out_dir) else os.path.basename(p)
            table[key] = file_sha256(p)
        return dict(sorted(table.items()))

    manifest = {
        "stage": stage,
        "version": __version__,
        "config": cfg.to_dict(),
        "inputs": rel(inputs),
        "outputs": rel(outputs),
    }
    path = os.path.join(cfg.out_dir, f"manifest_{stage}.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _workspace_panel(cfg: RunConfig) -> PricePanel:
    path = os.path.join(cfg.out_dir, "panel.csv")
    if not os.path.exists(path):
        raise MissingFile(f"{path} not found; run the ingest stage first")
    return load_panel(path)


def _prepared_features(cfg: RunConfig, panel: PricePanel):
    """Indicator tensor scaled by the training-period peak magnitudes."""
    raw = compute_features(panel, cfg.indicators)
    t_lo, t_hi = slots_for_range(panel, cfg.train_range)
    t_lo = max(t_lo, raw.first_valid_slot)
    if t_lo > t_hi:
        raise InsufficientHistory(
            f"training range ends at slot {t_hi} but features start at {raw.first_valid_slot}"
        )
    scaler = FeatureScaler().fit(raw, range(t_lo, t_hi + 1))
    return scaler.transform(raw), scaler, (t_lo, t_hi)


def _train_bounds(cfg: RunConfig, panel: PricePanel, features: FeatureTensor) -> tuple[int, int]:
    t_lo, t_hi = slots_for_range(panel, cfg.train_range)
    t_lo = max(t_lo, features.first_valid_slot, cfg.cov_window + 1)
    if t_lo > t_hi:
        raise InsufficientHistory("training range has no feasible slots")
    return t_lo, t_hi


def _trade_bounds(cfg: RunConfig, panel: PricePanel, features: FeatureTensor) -> tuple[int, int]:
    t_lo, t_hi = slots_for_range(panel, cfg.trade_range)
    t_lo = max(t_lo, features.first_valid_slot, cfg.cov_window + 1)
    if t_lo > t_hi:
        raise InsufficientHistory("trade range has no feasible slots")
    return t_lo, t_hi


def _selected_models(cfg: RunConfig, only_model: str | None) -> list[str]:
    if only_model is None:
        return list(cfg.models)
    if only_model not in KIND_ALIASES:
        raise ConfigError(f"--model must be one of {sorted(KIND_ALIASES)}, got {only_model!r}")
    return [only_model]


def save_feature_csv(panel: PricePanel, features: FeatureTensor, path) -> None:
    """Dump the (shifted, unscaled) indicator values, one row per date/ticker."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "ticker"] + list(features.names))
        for t in range(panel.n_slots):
            for i, ticker in enumerate(panel.tickers):
                row = [panel.dates[t], ticker]
                row += [repr(float(features.values[k, i, t])) for k in range(features.n_features)]
                writer.writerow(row)


def run_ingest(cfg: RunConfig) -> list[str]:
    os.makedirs(cfg.out_dir, exist_ok=True)
    panel = load_panel(cfg.data_csv, cfg.tickers)
    slots_for_range(panel, cfg.train_range)
    slots_for_range(panel, cfg.trade_range)
    raw = compute_features(panel, cfg.indicators)
    panel_path = os.path.join(cfg.out_dir, "panel.csv")
    feat_path = os.path.join(cfg.out_dir, "features.csv")
    save_panel(panel, panel_path)
    save_feature_csv(panel, raw, feat_path)
    outputs = [panel_path, feat_path]
    outputs.append(write_manifest(cfg, "ingest", [cfg.data_csv], outputs))
    logger.info("ingested %d tickers over %d slots", panel.n_assets, panel.n_slots)
    return outputs


def run_train(cfg: RunConfig, only_model: str | None = None) -> list[str]:
    panel = _workspace_panel(cfg)
    features, scaler, _ = _prepared_features(cfg, panel)
    t_lo, t_hi = _train_bounds(cfg, panel, features)
    outputs = []

    env = PortfolioEnv(panel, features, cfg.cov_window, t_lo, t_hi)
    bundle, curve = train(env, cfg.algo, cfg.train_steps, cfg.seed, cfg.agent_hp)
    agent_dir = os.path.join(cfg.out_dir, "agent")
    bundle.save(agent_dir)
    outputs += [os.path.join(agent_dir, f) for f in ("agent.json", "policy.json", "value.json")]
    curve_path = os.path.join(cfg.out_dir, "learning_curve.csv")
    save_learning_curve(curve, curve_path)
    outputs.append(curve_path)
    curve_png = os.path.join(cfg.out_dir, "learning_curve.png")
    plots.save_learning_curve_plot(curve, curve_png)
    outputs.append(curve_png)

    scaler_path = os.path.join(cfg.out_dir, "scaler.json")
    with open(scaler_path, "w") as fh:
        json.dump(scaler.to_dict(), fh, sort_keys=True)
        fh.write("\n")
    outputs.append(scaler_path)

    fit_lo = max(slots_for_range(panel, cfg.train_range)[0], features.first_valid_slot)
    X, y = pooled_training_data(panel, features, range(fit_lo, t_hi + 1))
    models_dir = os.path.join(cfg.out_dir, "models")
    os.makedirs(models_dir, exist_ok=True)
    for alias in _selected_models(cfg, only_model):
        try:
            model = fit(alias, X, y, cfg.model_params.get(alias), seed=cfg.seed)
        except TypeError as exc:
            raise ConfigError(f"bad model_params for {alias!r}: {exc}") from exc
        path = os.path.join(models_dir, f"{alias}.json")
        save_model(model, path)
        outputs.append(path)
        logger.info("fitted %s on %d samples", model.kind, y.size)

    panel_path = os.path.join(cfg.out_dir, "panel.csv")
    outputs.append(write_manifest(cfg, "train", [panel_path], outputs))
    return outputs


def _load_artifacts(cfg: RunConfig, only_model: str | None):
    panel = _workspace_panel(cfg)
    features, _, _ = _prepared_features(cfg, panel)
    agent_dir = os.path.join(cfg.out_dir, "agent")
    if not os.path.exists(os.path.join(agent_dir, "agent.json")):
        raise MissingFile(f"{agent_dir} incomplete; run the train stage first")
    bundle = AgentBundle.load(agent_dir)
    models = {}
    for alias in _selected_models(cfg, only_model):
        path = os.path.join(cfg.out_dir, "models", f"{alias}.json")
        if not os.path.exists(path):
            raise MissingFile(f"{path} not found; run the train stage first")
        models[alias] = load_model(path)
    return panel, features, bundle, models


def _strategies(cfg, panel, features, bundle, models):
    handles = [
        equal_weight_strategy(panel.n_assets),
        hindsight_strategy(panel, cfg.cov_window, cfg.lam),
        drl_strategy(bundle, panel, features, cfg.cov_window, name=cfg.algo),
    ]
    for alias, model in models.items():
        handles.append(ml_strategy(model, panel, features, cfg.cov_window, cfg.lam, name=alias))
    return handles


def run_backtest(cfg: RunConfig, only_model: str | None = None) -> list[str]:
    panel, features, bundle, models = _load_artifacts(cfg, only_model)
    t_lo, t_hi = _trade_bounds(cfg, panel, features)
    outputs = []
    results = []
    table = {}
    for handle in _strategies(cfg, panel, features, bundle, models):
        result = run(handle, panel, t_lo, t_hi)
        results.append(result)
        table[handle.name] = metrics(result)
        path = os.path.join(cfg.out_dir, f"backtest_{handle.name}.csv")
        save_backtest_csv(result, panel.dates, path)
        outputs.append(path)
        logger.info(
            "%s: final value %.4f, annual return %.4f",
            handle.name,
            result.final_value,
            table[handle.name]["annual_return"],
        )
    metrics_path = os.path.join(cfg.out_dir, "metrics.json")
    save_metrics_json(table, metrics_path)
    outputs.append(metrics_path)
    curves_png = os.path.join(cfg.out_dir, "value_curves.png")
    plots.save_value_curves(results, panel.dates, curves_png)
    outputs.append(curves_png)
    panel_path = os.path.join(cfg.out_dir, "panel.csv")
    outputs.append(write_manifest(cfg, "backtest", [panel_path], outputs))
    return outputs


def _weight_series_csv(cfg, series, dates, name, prefix, outputs):
    path = os.path.join(cfg.out_dir, name)
    save_weight_series(series, dates, path, prefix=prefix)
    outputs.append(path)
    return path


def save_correlations_csv(pp, dates, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "rho_single", "rho_multi"])
        for i, t in enumerate(pp.slots):
            writer.writerow(
                [dates[int(t)], repr(float(pp.rho_single[i])), repr(float(pp.rho_multi[i]))]
            )


def _z_entry(values) -> dict | None:
    try:
        z = upper_tail_z(values)
    except Exception as exc:  # degenerate series; report the gap, not a crash
        logger.warning("z test skipped: %s", exc)
        return None
    return {"z": z.z, "stars": z.stars, "n": z.n, "mean": z.mean, "std": z.std}


def run_explain(cfg: RunConfig, only_model: str | None = None) -> list[str]:
    panel, features, bundle, models = _load_artifacts(cfg, only_model)
    t_lo, t_hi = _trade_bounds(cfg, panel, features)
    slots = range(t_lo, t_hi + 1)
    outputs = []

    reference = reference_pipeline(panel, features, cfg.cov_window, cfg.lam, slots=slots)
    smoothed = smooth_reference(reference, cfg.smooth_window)
    _weight_series_csv(cfg, reference, panel.dates, "reference_weights.csv", "beta", outputs)
    _weight_series_csv(cfg, smoothed, panel.dates, "smoothed_reference.csv", "beta", outputs)
    ref_png = os.path.join(cfg.out_dir, "reference_weights.png")
    plots.save_weight_series_plot(reference, panel.dates, ref_png, "reference feature weight")
    outputs.append(ref_png)

    def state_fn(t: int) -> np.ndarray:
        return build_state(panel, features, sample_covariance(panel, t, cfg.cov_window), t)

    series_by_name = {
        cfg.algo: drl_feature_weights(
            bundle.value, state_fn, slots, panel.n_assets, features.names, cfg.ig_steps
        )
    }
    for alias, model in models.items():
        series_by_name[alias] = ml_weight_series(
            model, panel, features, cfg.cov_window, cfg.lam, slots=slots
        )

    report_models = {}
    for name, series in series_by_name.items():
        _weight_series_csv(cfg, series, panel.dates, f"weights_{name}.csv", "w", outputs)
        pp = prediction_power(series, reference, smoothed)
        corr_path = os.path.join(cfg.out_dir, f"correlations_{name}.csv")
        save_correlations_csv(pp, panel.dates, corr_path)
        outputs.append(corr_path)
        hist_png = os.path.join(cfg.out_dir, f"correlations_{name}.png")
        plots.save_correlation_histogram(pp, name, hist_png)
        outputs.append(hist_png)
        single, multi = pp.defined("single"), pp.defined("multi")
        counts_s, _ = correlation_histogram(pp.rho_single)
        counts_m, _ = correlation_histogram(pp.rho_multi)
        report_models[name] = {
            "n_slots": int(pp.slots.size),
            "mean_single": float(single.mean()) if single.size else None,
            "mean_multi": float(multi.mean()) if multi.size else None,
            "n_undefined_single": pp.n_undefined("single"),
            "n_undefined_multi": pp.n_undefined("multi"),
            "z_single": _z_entry(single),
            "z_multi": _z_entry(multi),
            "histogram_single": counts_s.tolist(),
            "histogram_multi": counts_m.tolist(),
            "histogram_bins": 20,
        }

    table = {}
    for handle in _strategies(cfg, panel, features, bundle, models):
        table[handle.name] = metrics(run(handle, panel, t_lo, t_hi))

    bars_png = os.path.join(cfg.out_dir, "mean_correlations.png")
    plots.save_mean_correlation_bars(report_models, bars_png)
    outputs.append(bars_png)

    report = {
        "trade_slots": [int(t_lo), int(t_hi)],
        "smooth_window": cfg.smooth_window,
        "reference": {
            "n_slots": len(reference),
            "n_skipped": len(reference.skipped),
        },
        "models": report_models,
        "backtest_metrics": table,
    }
    report_path = os.path.join(cfg.out_dir, "report.json")
    with open(report_path, "w") as fh:
        json.dump(_jsonable(report), fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    outputs.append(report_path)

    panel_path = os.path.join(cfg.out_dir, "panel.csv")
    outputs.append(write_manifest(cfg, "explain", [panel_path], outputs))
    return outputs
