"""Triple-barrier labels from price paths and volatility-scaled barriers."""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidDistributionError, MissingColumnError

UPPER = "upper"
LOWER = "lower"
VERTICAL = "vertical"
# high and low of the same bar both crossed; intrabar order unknown
BOTH = "both"
UNDEFINED = ""


@dataclass
class BarrierConfig:
    pt_mult: float = 2.0
    sl_mult: float = 2.0
    horizon: int = 5
    vol_span: int = 20
    use_high_low: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.vol_span < 2:
            raise ValueError("vol_span must be >= 2")
        if self.pt_mult < 0 or self.sl_mult < 0:
            raise ValueError("barrier multipliers must be non-negative")


@dataclass
class LabelSeries:
    """Per-bar labels; entries where ``defined`` is False carry label 0 and touch index -1."""

    labels: np.ndarray
    defined: np.ndarray
    touch_index: np.ndarray
    barrier_hit: np.ndarray

    def __len__(self):
        return self.labels.size

    def as_float(self):
        """Labels as floats with NaN where undefined."""
        out = self.labels.astype(float)
        out[~self.defined] = np.nan
        return out


def ewma_volatility(close, span):
    """EWMA standard deviation of log returns.

    With ``alpha = 2 / (span + 1)`` and ``r_t = log(close_t / close_{t-1})``::

        d_t = r_t - m_{t-1}          (m_0 = 0)
        v_t = (1 - alpha) v_{t-1} + alpha d_t**2,   v_1 = r_1**2
        m_t = (1 - alpha) m_{t-1} + alpha r_t

    The result has one value per bar; bar 0 has no return of its own and
    takes the value of bar 1.
    """
    close = np.asarray(close, dtype=float)
    if span < 2:
        raise ValueError("span must be >= 2")
    if close.size < 2:
        raise InsufficientDataError("volatility needs at least two bars", T=close.size)
    if np.any(~np.isfinite(close)) or np.any(close <= 0):
        raise InvalidDistributionError("prices must be finite and positive")
    alpha = 2.0 / (span + 1.0)
    rets = np.diff(np.log(close))
    var = np.empty(close.size)
    v = rets[0] ** 2
    var[1] = v
    mean = alpha * rets[0]
    for t in range(1, rets.size):
        d = rets[t] - mean
        v = (1.0 - alpha) * v + alpha * d * d
        mean = (1.0 - alpha) * mean + alpha * rets[t]
        var[t + 1] = v
    var[0] = var[1]
    return np.sqrt(var)


def triple_barrier(close, cfg=None, high=None, low=None, volatility=None):
    """Label each bar by the first barrier its forward path touches.

    Barriers for entry bar ``t0`` are ``close[t0] * (1 + pt_mult * sigma)``
    and ``close[t0] * (1 - sl_mult * sigma)``; bars ``t0+1 .. t0+h`` are
    scanned. With ``use_high_low`` the upper test uses ``high`` and the lower
    test ``low``; otherwise both use ``close``. Bars within ``h`` of the end
    are left undefined.
    """
    cfg = cfg or BarrierConfig()
    close = np.asarray(close, dtype=float)
    t_len = close.size
    if cfg.use_high_low:
        if high is None or low is None:
            raise MissingColumnError("high/low columns required when use_high_low is set")
        up_px = np.asarray(high, dtype=float)
        dn_px = np.asarray(low, dtype=float)
    else:
        up_px = dn_px = close
    sigma = ewma_volatility(close, cfg.vol_span) if volatility is None else np.asarray(volatility, dtype=float)
    h = cfg.horizon

    labels = np.zeros(t_len, dtype=np.int8)
    defined = np.zeros(t_len, dtype=bool)
    touch = np.full(t_len, -1, dtype=np.intp)
    hit = np.full(t_len, UNDEFINED, dtype="<U8")
    n_def = max(t_len - h, 0)
    if n_def == 0:
        return LabelSeries(labels, defined, touch, hit)

    t0 = np.arange(n_def)
    upper = close[:n_def] * (1.0 + cfg.pt_mult * sigma[:n_def])
    lower = close[:n_def] * (1.0 - cfg.sl_mult * sigma[:n_def])
    window = t0[:, None] + np.arange(1, h + 1)[None, :]
    up_hit = up_px[window] >= upper[:, None]
    dn_hit = dn_px[window] <= lower[:, None]
    any_hit = up_hit | dn_hit
    touched = any_hit.any(axis=1)
    first = np.argmax(any_hit, axis=1)

    rows = np.flatnonzero(touched)
    u = up_hit[rows, first[rows]]
    d = dn_hit[rows, first[rows]]
    labels[rows] = np.where(u & d, 0, np.where(u, 1, -1))
    hit[rows] = np.where(u & d, BOTH, np.where(u, UPPER, LOWER))
    touch[rows] = rows + first[rows] + 1

    idle = np.flatnonzero(~touched)
    touch[idle] = idle + h
    hit[idle] = VERTICAL
    defined[:n_def] = True
    return LabelSeries(labels, defined, touch, hit)


def label_series(series, cfg=None):
    """Triple-barrier labels for a :class:`~regime_hmm.data.BarSeries`."""
    cfg = cfg or BarrierConfig()
    if cfg.use_high_low:
        return triple_barrier(series.close, cfg, high=series["high"], low=series["low"])
    return triple_barrier(series.close, cfg)
