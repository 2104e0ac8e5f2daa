"""Bar series container, CSV ingestion, market-feature derivation and a
synthetic regime generator with known ground truth."""

import csv
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import InvalidDistributionError, MissingColumnError, NonFiniteError, RegimeError

DATE_COLUMNS = ("date", "timestamp", "datetime", "time")
PRICE_COLUMNS = ("open", "high", "low", "close", "pre_close")
MARKET_FEATURES = ("ret5", "log_hl", "close_pre", "open_pre", "high_pre", "low_pre")
TRUTH_COLUMN = "truth"


@dataclass
class BarSeries:
    """Per-bar timestamps plus named numeric columns (NaN marks a missing cell)."""

    timestamps: np.ndarray
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        self.columns = {name: np.asarray(col, dtype=float) for name, col in self.columns.items()}
        t_len = self.timestamps.size
        for name, col in self.columns.items():
            if col.shape != (t_len,):
                raise RegimeError("column length differs from timestamps", column=name, length=col.size, T=t_len)
        if t_len > 1 and np.any(np.diff(self.timestamps.astype(np.int64)) <= 0):
            raise RegimeError("timestamps must be strictly increasing")

    def __len__(self):
        return self.timestamps.size

    def __getitem__(self, name):
        try:
            return self.columns[name]
        except KeyError:
            raise MissingColumnError(f"column {name!r} not found", column=name) from None

    def __contains__(self, name):
        return name in self.columns

    @property
    def close(self):
        return self["close"]

    def select(self, names):
        """``T x d`` matrix of the named columns, in the order given."""
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise MissingColumnError("columns not found", columns=missing)
        return np.column_stack([self.columns[n] for n in names])

    def slice(self, start, stop=None):
        return BarSeries(self.timestamps[start:stop], {n: c[start:stop] for n, c in self.columns.items()})

    def with_columns(self, **new):
        cols = dict(self.columns)
        cols.update(new)
        return BarSeries(self.timestamps, cols)

    def check_ohlc(self, atol=1e-12):
        """Raise if low <= min(open, close) <= max(open, close) <= high fails anywhere."""
        if not all(c in self.columns for c in ("open", "high", "low", "close")):
            return
        o, h, l, c = (self.columns[n] for n in ("open", "high", "low", "close"))
        ok = (l <= np.minimum(o, c) + atol) & (np.maximum(o, c) <= h + atol)
        ok |= np.isnan(o) | np.isnan(h) | np.isnan(l) | np.isnan(c)
        if not ok.all():
            row = int(np.flatnonzero(~ok)[0])
            raise RegimeError("OHLC ordering violated", row=row)


def read_bars(path):
    """Load a CSV with a header, an ISO-8601 date column and numeric columns.

    Empty cells and ``NaN`` become NaN; any other non-numeric cell raises
    with its row index.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    date_col = next((c for c in frame.columns if c.strip().lower() in DATE_COLUMNS), None)
    if date_col is None:
        raise MissingColumnError("no date column found", expected=list(DATE_COLUMNS))
    stamps = pd.to_datetime(frame[date_col], format="ISO8601").to_numpy(dtype="datetime64[s]")
    cols = {}
    for name in frame.columns:
        if name == date_col:
            continue
        cols[name.strip()] = _parse_column(name, frame[name].str.strip().to_numpy())
    return BarSeries(stamps, cols)


def _parse_column(name, cells):
    # Python's float() round-trips repr() output exactly; pandas' fast parser does not.
    values = np.empty(cells.size)
    for row, cell in enumerate(cells):
        try:
            values[row] = float(cell) if cell else np.nan
        except ValueError:
            raise NonFiniteError("non-numeric cell", column=name, row=row, value=cell) from None
    if np.isinf(values).any():
        row = int(np.flatnonzero(np.isinf(values))[0])
        raise NonFiniteError("infinite cell", column=name, row=row)
    return values


def format_timestamp(stamp):
    text = np.datetime_as_string(stamp, unit="s")
    return text[:10] if text.endswith("T00:00:00") else text


def format_value(value):
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "" if np.isnan(value) else repr(value)
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def write_bars(path, series):
    names = list(series.columns)
    rows = (
        [format_timestamp(series.timestamps[t])] + [series.columns[n][t] for n in names]
        for t in range(len(series))
    )
    write_rows(path, ["date"] + names, rows)


def derive_market_features(series):
    """Append price-derived factors.

    ``ret5``: log(close_t / close_{t-5}) (NaN for the first 5 bars),
    ``log_hl``: log(high / low), and ``close_pre``, ``open_pre``,
    ``high_pre``, ``low_pre``: price / pre_close.
    """
    o, h, l, c, pc = (series[n] for n in PRICE_COLUMNS)
    prices = np.column_stack([o, h, l, c, pc])
    if np.any(prices[np.isfinite(prices)] <= 0):
        raise InvalidDistributionError("prices must be positive")
    ret5 = np.full(c.size, np.nan)
    ret5[5:] = np.log(c[5:] / c[:-5])
    return series.with_columns(
        ret5=ret5,
        log_hl=np.log(h / l),
        close_pre=c / pc,
        open_pre=o / pc,
        high_pre=h / pc,
        low_pre=l / pc,
    )


def sample_chain(pi, trans, t_len, rng):
    pi = np.asarray(pi, dtype=float)
    trans = np.asarray(trans, dtype=float)
    cum = np.cumsum(trans, axis=1)
    u = rng.random(t_len)
    states = np.empty(t_len, dtype=np.intp)
    states[0] = min(np.searchsorted(np.cumsum(pi), u[0], side="right"), pi.size - 1)
    for t in range(1, t_len):
        states[t] = min(np.searchsorted(cum[states[t - 1]], u[t], side="right"), pi.size - 1)
    return states


def synth(n_states, T, means, variances, trans, pi, seed=0, drift_scale=2.0, ret_vol=0.01,
          start_price=100.0, start_date="2000-01-03", feature_prefix="f"):
    """Sample a regime path with Gaussian factor columns and a price path.

    Factor column ``f{k}`` at bar ``t`` is drawn from
    ``N(means[s_t, k], variances[s_t, k])``. Log returns are
    ``drift[s_t] + ret_vol * eps`` with drifts evenly spaced over
    ``[-drift_scale, +drift_scale] * ret_vol`` (state 0 lowest). OHLC,
    pre_close and volume are built around the close path; the sampled
    states go to the ``truth`` column.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if means.ndim == 1:
        means = means[:, None]
    if variances.ndim == 1:
        variances = variances[:, None]
    trans = np.asarray(trans, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if means.shape[0] != n_states or variances.shape != means.shape:
        raise InvalidDistributionError("means/variances must be n_states x d", means=list(means.shape))
    if trans.shape != (n_states, n_states) or pi.shape != (n_states,):
        raise InvalidDistributionError("transition matrix or pi has the wrong shape")
    if (np.any(trans < 0) or np.any(np.abs(trans.sum(axis=1) - 1) > 1e-9)
            or np.any(pi < 0) or abs(pi.sum() - 1) > 1e-9):
        raise InvalidDistributionError("transition rows and pi must be probability vectors")
    if np.any(variances < 0):
        raise InvalidDistributionError("variances must be non-negative")

    rng = np.random.default_rng(seed)
    states = sample_chain(pi, trans, T, rng)
    feats = means[states] + np.sqrt(variances[states]) * rng.standard_normal((T, means.shape[1]))
    drift = np.linspace(-drift_scale, drift_scale, n_states) * ret_vol if n_states > 1 else np.zeros(1)
    rets = drift[states] + ret_vol * rng.standard_normal(T)
    close = start_price * np.exp(np.cumsum(rets))
    pre_close = np.concatenate([[start_price], close[:-1]])
    open_ = pre_close * np.exp(0.25 * ret_vol * rng.standard_normal(T))
    high = np.maximum(open_, close) * np.exp(0.5 * ret_vol * np.abs(rng.standard_normal(T)))
    low = np.minimum(open_, close) * np.exp(-0.5 * ret_vol * np.abs(rng.standard_normal(T)))
    volume = np.round(np.exp(12.0 + 0.3 * rng.standard_normal(T)))

    stamps = np.datetime64(start_date, "D") + np.arange(T)
    cols = {"open": open_, "high": high, "low": low, "close": close, "pre_close": pre_close, "volume": volume}
    for k in range(means.shape[1]):
        cols[f"{feature_prefix}{k}"] = feats[:, k]
    cols[TRUTH_COLUMN] = states.astype(float)
    return BarSeries(stamps, cols)
