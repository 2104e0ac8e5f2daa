"""Single-factor scoring: how cleanly do decoded regimes separate the labels?

For one factor, a GMM-HMM is fitted and Viterbi-decoded; decoded states are
cross-tabulated against triple-barrier labels, and each state row is scored
by its purity (max row share), its entropy and its share of all bars.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import labeling, trainers
from .errors import InsufficientDataError, RegimeError

log = logging.getLogger(__name__)

LABEL_ORDER = (-1, 0, 1)


@dataclass(frozen=True)
class FeatureScore:
    acc: np.ndarray
    entropy: np.ndarray
    weight: np.ndarray
    total: float


def count_matrix(states, labels, n_states=None, defined=None):
    """``N x 3`` co-occurrence counts of decoded state and label (-1, 0, +1).

    ``labels`` may be a :class:`~regime_hmm.labeling.LabelSeries` or a plain
    array; in the latter case ``defined`` masks usable bars (default: all
    finite entries).
    """
    states = np.asarray(getattr(states, "states", states), dtype=np.intp)
    if isinstance(labels, labeling.LabelSeries):
        defined = labels.defined if defined is None else defined
        labels = labels.labels
    labels = np.asarray(labels, dtype=float)
    if defined is None:
        defined = np.isfinite(labels)
    if states.shape != labels.shape:
        raise RegimeError("state path and labels differ in length", states=states.size, labels=labels.size)
    if not np.any(defined):
        raise InsufficientDataError("no defined labels to count")
    n_states = int(states.max()) + 1 if n_states is None else n_states
    col = labels[defined].astype(np.intp) + 1
    counts = np.zeros((n_states, 3), dtype=np.int64)
    np.add.at(counts, (states[defined], col), 1)
    return counts


def score(counts):
    """Weighted purity/entropy score of a count matrix, in (0, 1].

    ``sum_i Acc_i / (1 + H_i) * w_i`` with ``Acc_i`` the largest row share,
    ``H_i`` the natural-log row entropy and ``w_i`` the row's share of the
    total count. Empty rows get weight zero.
    """
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise InsufficientDataError("count matrix is empty")
    row_tot = counts.sum(axis=1)
    used = row_tot > 0
    ratio = np.zeros_like(counts)
    ratio[used] = counts[used] / row_tot[used, None]
    acc = ratio.max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(ratio > 0, ratio * np.log(ratio), 0.0)
    entropy = 0.0 - plogp.sum(axis=1)  # 0.0 - x avoids a signed zero for pure rows
    weight = row_tot / total
    terms = np.where(used, acc / (1.0 + entropy) * weight, 0.0)
    return FeatureScore(acc=acc, entropy=entropy, weight=weight, total=float(terms.sum()))


def score_feature(values, labels, fit_cfg):
    """Fit a 1-d mixture HMM to one factor and score its decoded states."""
    values = np.asarray(values, dtype=float)
    if isinstance(labels, labeling.LabelSeries):
        defined = labels.defined.copy()
        labels = labels.labels
    else:
        labels = np.asarray(labels, dtype=float)
        defined = np.isfinite(labels)
    keep = np.isfinite(values)
    model = trainers.fit_mixture_hmm(values[keep], replace(fit_cfg, emission=trainers.MIXTURE))
    path = trainers.decode(model, values[keep])
    return score(count_matrix(path.states, np.nan_to_num(labels[keep]), fit_cfg.n_states, defined[keep]))


def rank_features(series, feature_names, barrier_cfg=None, fit_cfg=None):
    """Score each named column and sort by descending total, then name.

    Features whose fit fails are logged and left out; returns
    ``(ranking, failures)`` where ``ranking`` is a list of
    ``(name, FeatureScore)`` and ``failures`` maps name to error message.
    """
    fit_cfg = fit_cfg or trainers.FitConfig()
    labels = labeling.label_series(series, barrier_cfg)
    results, failures = [], {}
    for name in feature_names:
        try:
            results.append((name, score_feature(series[name], labels, fit_cfg)))
        except (RegimeError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("feature %s skipped: %s", name, exc)
            failures[name] = str(exc)
    results.sort(key=lambda item: (-item[1].total, item[0]))
    return results, failures
