"""Figure rendering for the report stages.

Every figure goes through one save helper that pins the Agg backend and
strips the writer metadata, so rerunning a pipeline produces byte-identical
PNGs alongside the delimited outputs.
"""
from __future__ import annotations

import logging

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .attribution import PredictionPower, correlation_histogram
from .backtest import BacktestResult
from .hindsight import FeatureWeightSeries

logger = logging.getLogger(__name__)


def _save(fig, path) -> None:
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    logger.info("wrote %s", path)


def _slot_ticks(ax, dates: list[str], slots: np.ndarray, n_ticks: int = 6):
    idx = np.linspace(0, slots.size - 1, min(n_ticks, slots.size)).astype(int)
    ax.set_xticks(slots[idx])
    ax.set_xticklabels([dates[int(slots[i])] for i in idx], rotation=30, ha="right", fontsize=8)


def save_value_curves(results: list[BacktestResult], dates: list[str], path) -> None:
    """Cumulative value of every strategy on one axis."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for res in results:
        ax.plot(np.concatenate([[res.slots[0] - 1], res.slots]), res.values, label=res.strategy)
    ax.set_ylabel("portfolio value (initial = 1)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _slot_ticks(ax, dates, results[0].slots)
    fig.tight_layout()
    _save(fig, path)


def save_weight_series_plot(series: FeatureWeightSeries, dates: list[str], path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for j, name in enumerate(series.names):
        ax.plot(series.slots, series.values[:, j], label=name, linewidth=0.9)
    ax.set_ylabel(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _slot_ticks(ax, dates, series.slots)
    fig.tight_layout()
    _save(fig, path)


def save_correlation_histogram(pp: PredictionPower, name: str, path, bins: int = 20) -> None:
    """Side-by-side histograms of the single and multi step correlations."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)
    for ax, which in zip(axes, ("single", "multi")):
        counts, edges = correlation_histogram(getattr(pp, f"rho_{which}"), bins=bins)
        ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", edgecolor="black", linewidth=0.4)
        ax.set_title(f"{name}: {which}-step", fontsize=10)
        ax.set_xlabel("correlation")
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("slots")
    fig.tight_layout()
    _save(fig, path)


def save_mean_correlation_bars(rows: dict, path) -> None:
    """Grouped bars of mean single/multi correlation per model."""
    names = sorted(rows)
    singles = [rows[n]["mean_single"] for n in names]
    multis = [rows[n]["mean_multi"] for n in names]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(x - 0.18, singles, width=0.36, label="single-step")
    ax.bar(x + 0.18, multis, width=0.36, label="multi-step")
    ax.set_xticks(x)
    ax.set_xticklabels(names, fontsize=9)
    ax.set_ylabel("mean correlation")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    _save(fig, path)


def save_learning_curve_plot(curve, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    if curve:
        idx, rewards = zip(*curve)
        ax.plot(idx, rewards, linewidth=0.9)
    ax.set_xlabel("rollout")
    ax.set_ylabel("mean reward")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
