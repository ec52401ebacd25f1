"""Price panel ingestion, price relatives and rolling covariance estimates.

Input CSV schema: header ``date,ticker,open,high,low,close,volume``, ISO-8601
dates, UTF-8, comma separated.  Tickers are aligned on the intersection of
their dates; no imputation is done.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import date as _date

import numpy as np

from .errors import (
    EmptyIntersection,
    InsufficientHistory,
    MissingColumn,
    MissingFile,
    NonPositivePrice,
    SlotOutOfRange,
    UnparsableRow,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["date", "ticker", "open", "high", "low", "close", "volume"]

PRICE_FIELDS = ("open", "high", "low", "close")


@dataclass
class PricePanel:
    """Aligned OHLCV matrices over N tickers and T+1 trading-day slots.

    All matrices have shape (N, T+1); slot 0 holds the first aligned day.
    Slot ``t`` realizes the price relative close[:, t] / close[:, t-1].
    """

    tickers: list[str]
    dates: list[str]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    _relatives: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    @property
    def n_slots(self) -> int:
        """Number of price slots, T+1."""
        return len(self.dates)

    @property
    def last_slot(self) -> int:
        """Largest slot index T for which a price relative exists."""
        return self.n_slots - 1

    def validate(self) -> None:
        n, m = self.n_assets, self.n_slots
        for name in (*PRICE_FIELDS, "volume"):
            mat = getattr(self, name)
            if mat.shape != (n, m):
                raise ValueError(f"{name} matrix shape {mat.shape} != ({n}, {m})")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates not strictly increasing")
        if not np.all(self.close > 0):
            raise ValueError("close prices must be strictly positive")

    def relatives_matrix(self) -> np.ndarray:
        """All price relatives as a (T, N) matrix; row t-1 is y(t)."""
        if self._relatives is None:
            self._relatives = (self.close[:, 1:] / self.close[:, :-1]).T.copy()
        return self._relatives


@dataclass
class RelativeVector:
    """Per-asset gross return over one slot, close(t) / close(t-1)."""

    values: np.ndarray
    slot: int


@dataclass
class CovEstimate:
    """Sample covariance of price relatives over a rolling window."""

    slot: int
    matrix: np.ndarray
    window: int


def load_panel(path, tickers: list[str] | None = None) -> PricePanel:
    """Load and align an OHLCV CSV into a PricePanel.

    Keeps only dates where every requested ticker has a row.  Tickers are
    sorted lexicographically and dates ascending.
    """
    rows = {}  # (ticker, date) -> (line_no, floats)
    per_ticker_dates: dict[str, set] = {}
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile(f"no such file: {path}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MissingColumn(f"{path}: empty file, no header")
        missing = [c for c in CSV_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {missing}")
        for row in reader:
            line = reader.line_num
            ticker = (row["ticker"] or "").strip()
            datestr = (row["date"] or "").strip()
            if not ticker:
                raise UnparsableRow(line, "empty ticker")
            try:
                _date.fromisoformat(datestr)
            except ValueError:
                raise UnparsableRow(line, f"bad date {datestr!r}") from None
            if tickers is not None and ticker not in tickers:
                continue
            try:
                vals = [float(row[c]) for c in CSV_COLUMNS[2:]]
            except (TypeError, ValueError):
                raise UnparsableRow(line, "unparsable numeric field") from None
            if not all(np.isfinite(vals)):
                raise UnparsableRow(line, "non-finite numeric field")
            o, h, l, c, v = vals
            for name, val in zip(PRICE_FIELDS, (o, h, l, c)):
                if val <= 0:
                    raise NonPositivePrice(ticker, datestr, f"non-positive {name}")
            if v < 0:
                raise UnparsableRow(line, "negative volume")
            key = (ticker, datestr)
            if key in rows:
                raise UnparsableRow(line, f"duplicate row for {ticker} {datestr}")
            rows[key] = vals
            per_ticker_dates.setdefault(ticker, set()).add(datestr)

    wanted = sorted(tickers) if tickers is not None else sorted(per_ticker_dates)
    if not wanted:
        raise EmptyIntersection("no tickers in file")
    common = None
    for tk in wanted:
        ds = per_ticker_dates.get(tk, set())
        common = ds if common is None else common & ds
    if not common:
        raise EmptyIntersection(f"no common dates across tickers {wanted}")
    dates = sorted(common)

    n, m = len(wanted), len(dates)
    mats = {name: np.empty((n, m)) for name in (*PRICE_FIELDS, "volume")}
    for i, tk in enumerate(wanted):
        for j, d in enumerate(dates):
            vals = rows[(tk, d)]
            for name, val in zip((*PRICE_FIELDS, "volume"), vals):
                mats[name][i, j] = val
    panel = PricePanel(tickers=wanted, dates=dates, **mats)
    panel.validate()
    logger.info("loaded panel: %d tickers x %d slots from %s", n, m, path)
    return panel


def save_panel(panel: PricePanel, path) -> None:
    """Write a panel back to CSV; reload via load_panel is bit-exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for j, d in enumerate(panel.dates):
            for i, tk in enumerate(panel.tickers):
                writer.writerow(
                    [d, tk]
                    + [repr(float(getattr(panel, name)[i, j])) for name in (*PRICE_FIELDS, "volume")]
                )


def price_relatives(panel: PricePanel, t: int) -> RelativeVector:
    """Gross per-asset return for slot t, defined for 1 <= t <= T."""
    if not 1 <= t <= panel.last_slot:
        raise SlotOutOfRange(f"slot {t} outside [1, {panel.last_slot}]")
    return RelativeVector(values=panel.close[:, t] / panel.close[:, t - 1], slot=t)


def sample_covariance(
    panel: PricePanel, t: int, window: int, include_current: bool = False
) -> CovEstimate:
    """Unbiased sample covariance of the ``window`` most recent price relatives.

    By default the window ends at slot t-1 so the estimate only uses
    information available at the beginning of slot t.  ``include_current``
    shifts the window to end at slot t (the hindsight variant).
    """
    if window < 2:
        raise InsufficientHistory(f"window {window} < 2")
    if not 1 <= t <= panel.last_slot:
        raise SlotOutOfRange(f"slot {t} outside [1, {panel.last_slot}]")
    end = t if include_current else t - 1  # last relative slot used
    start = end - window + 1
    if start < 1 or end > panel.last_slot:
        raise InsufficientHistory(
            f"slot {t}: window of {window} relatives ending at {end} not available"
        )
    rel = panel.relatives_matrix()[start - 1 : end, :]  # rows are y(start..end)
    centered = rel - rel.mean(axis=0)
    s = centered.T @ centered / (window - 1)
    s = (s + s.T) / 2.0
    lam_min = float(np.linalg.eigvalsh(s)[0])
    if lam_min <= 0:
        s = s + (abs(lam_min) + 1e-8) * np.eye(panel.n_assets)
    return CovEstimate(slot=t, matrix=s, window=window)
