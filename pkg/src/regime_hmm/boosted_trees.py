"""Second-order gradient boosting for soft multi-class targets.

Trees are grown with the exact greedy split search over pre-sorted feature
columns. Each boosting round adds one tree per class, fitted to the softmax
cross-entropy gradient ``p - target`` and hessian ``p (1 - p)``. Missing
values (NaN) are routed to a per-node default child chosen by gain.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import DimensionError, InsufficientDataError, InvalidDistributionError


@dataclass
class BoostParams:
    n_rounds: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    min_split_gain: float = 0.0
    colsample: float = 1.0
    seed: int = 0
    # halvings of a round's step before it is dropped; keeps training loss monotone
    max_backtrack: int = 30

    def __post_init__(self):
        if self.n_rounds < 0 or self.max_depth < 0:
            raise ValueError("n_rounds and max_depth must be non-negative")
        if not 0.0 < self.colsample <= 1.0:
            raise ValueError("colsample must lie in (0, 1]")
        if self.reg_lambda < 0 or self.learning_rate <= 0:
            raise ValueError("reg_lambda must be >= 0 and learning_rate > 0")


@dataclass
class RegressionTree:
    """Array-encoded binary tree.

    Node ``i`` is a leaf when ``feature[i] == -1``. Internal nodes send a row
    left when ``x[feature] < threshold``; NaN follows ``default_left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int

    def predict(self, features):
        features = np.asarray(features, dtype=float)
        node = np.zeros(features.shape[0], dtype=np.intp)
        for _ in range(self.max_depth + 1):
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                break
            rows = np.flatnonzero(internal)
            x = features[rows, feat[rows]]
            go_left = np.where(np.isnan(x), self.default_left[node[rows]], x < self.threshold[node[rows]])
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return self.value[node]

    def depth(self):
        depths = {0: 0}
        for i in range(self.feature.size):
            if self.feature[i] >= 0:
                depths[int(self.left[i])] = depths[i] + 1
                depths[int(self.right[i])] = depths[i] + 1
        return max(depths.values())

    def scaled(self, factor):
        return RegressionTree(
            self.feature, self.threshold, self.default_left, self.left, self.right,
            self.value * factor, self.max_depth,
        )

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "default_left": self.default_left.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "max_depth": self.max_depth,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            feature=np.asarray(data["feature"], dtype=np.intp),
            threshold=np.asarray(data["threshold"], dtype=float),
            default_left=np.asarray(data["default_left"], dtype=bool),
            left=np.asarray(data["left"], dtype=np.intp),
            right=np.asarray(data["right"], dtype=np.intp),
            value=np.asarray(data["value"], dtype=float),
            max_depth=int(data["max_depth"]),
        )


@dataclass
class BoostedEnsemble:
    """Per-class tree lists; ``trees[c][r]`` is class ``c``'s tree of round ``r``."""

    n_classes: int
    n_features: int
    params: BoostParams
    trees: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)

    @property
    def n_rounds_fitted(self):
        return len(self.trees[0]) if self.trees else 0

    def decision_function(self, features):
        features = _check_features(features, self.n_features)
        scores = np.zeros((features.shape[0], self.n_classes))
        for c, class_trees in enumerate(self.trees):
            for tree in class_trees:
                scores[:, c] += tree.predict(features)
        return scores


@dataclass
class SplitCandidate:
    gain: float
    feature: int
    threshold: float
    default_left: bool


def _check_features(features, n_features=None):
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    if features.ndim != 2:
        raise DimensionError("features must be a T x d matrix", shape=list(features.shape))
    if n_features is not None and features.shape[1] != n_features:
        raise DimensionError(
            "feature dimension does not match the ensemble", expected=n_features, got=features.shape[1]
        )
    if np.any(np.isinf(features)):
        raise DimensionError("features must not contain infinities")
    return features


def _leaf_weight(g_sum, h_sum, reg_lambda):
    return -g_sum / (h_sum + reg_lambda)


def _score(g_sum, h_sum, reg_lambda):
    return g_sum * g_sum / (h_sum + reg_lambda)


def best_split(features, order, rows_mask, grad, hess, params, feature_ids):
    """Exact greedy search for the best split of one node.

    ``order[f]`` lists all row indices sorted by feature ``f`` (NaN last).
    Returns ``None`` when no split beats ``min_split_gain``.
    """
    lam = params.reg_lambda
    g_tot = grad[rows_mask].sum()
    h_tot = hess[rows_mask].sum()
    parent = _score(g_tot, h_tot, lam)
    best = None
    for f in feature_ids:
        rows = order[f][rows_mask[order[f]]]
        vals = features[rows, f]
        finite = ~np.isnan(vals)
        n_fin = int(finite.sum())
        if n_fin < 2:
            continue
        vals = vals[:n_fin]
        g_fin = grad[rows[:n_fin]]
        h_fin = hess[rows[:n_fin]]
        g_miss = g_tot - g_fin.sum()
        h_miss = h_tot - h_fin.sum()
        has_missing = n_fin < rows.size
        cut = np.flatnonzero(vals[:-1] < vals[1:])
        if cut.size == 0:
            continue
        gl = np.cumsum(g_fin)[cut]
        hl = np.cumsum(h_fin)[cut]
        directions = (True, False) if has_missing else (True,)
        for miss_left in directions:
            gl_d = gl + g_miss if miss_left else gl
            hl_d = hl + h_miss if miss_left else hl
            gr_d = g_tot - gl_d
            hr_d = h_tot - hl_d
            gain = 0.5 * (_score(gl_d, hl_d, lam) + _score(gr_d, hr_d, lam) - parent)
            valid = (hl_d >= params.min_child_weight) & (hr_d >= params.min_child_weight)
            if not valid.any():
                continue
            gain = np.where(valid, gain, -np.inf)
            pos = int(np.argmax(gain))
            if gain[pos] > params.min_split_gain and (best is None or gain[pos] > best.gain):
                lo, hi = vals[cut[pos]], vals[cut[pos] + 1]
                thr = 0.5 * (lo + hi)
                if not lo < thr <= hi:
                    thr = hi
                best = SplitCandidate(float(gain[pos]), int(f), float(thr), bool(miss_left))
    return best


def grow_tree(features, order, grad, hess, params, feature_ids, shrink):
    """Grow one regression tree on gradient/hessian statistics."""
    t_len = features.shape[0]
    node_of = np.zeros(t_len, dtype=np.intp)
    feature, threshold, default_left, left, right, value = [-1], [0.0], [True], [-1], [-1], [0.0]
    frontier = [(0, 0)]
    while frontier:
        nid, depth = frontier.pop(0)
        mask = node_of == nid
        g_sum, h_sum = grad[mask].sum(), hess[mask].sum()
        value[nid] = shrink * _leaf_weight(g_sum, h_sum, params.reg_lambda)
        if depth >= params.max_depth:
            continue
        split = best_split(features, order, mask, grad, hess, params, feature_ids)
        if split is None:
            continue
        lid, rid = len(feature), len(feature) + 1
        for _ in range(2):
            feature.append(-1)
            threshold.append(0.0)
            default_left.append(True)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
        feature[nid], threshold[nid], default_left[nid] = split.feature, split.threshold, split.default_left
        left[nid], right[nid] = lid, rid
        value[nid] = 0.0
        rows = np.flatnonzero(mask)
        x = features[rows, split.feature]
        go_left = np.where(np.isnan(x), split.default_left, x < split.threshold)
        node_of[rows[go_left]] = lid
        node_of[rows[~go_left]] = rid
        frontier.append((lid, depth + 1))
        frontier.append((rid, depth + 1))
    return RegressionTree(
        feature=np.asarray(feature, dtype=np.intp),
        threshold=np.asarray(threshold, dtype=float),
        default_left=np.asarray(default_left, dtype=bool),
        left=np.asarray(left, dtype=np.intp),
        right=np.asarray(right, dtype=np.intp),
        value=np.asarray(value, dtype=float),
        max_depth=params.max_depth,
    )


def soft_cross_entropy(scores, targets):
    """Mean over rows of ``-sum_i target_i log softmax(scores)_i``."""
    logp = log_softmax(scores, axis=1)
    return float(-(targets * logp).sum(axis=1).mean())


def _check_targets(soft_targets, t_len):
    targets = np.asarray(soft_targets, dtype=float)
    if targets.ndim != 2 or targets.shape[0] != t_len:
        raise DimensionError("soft targets must be T x N", expected_rows=t_len, shape=list(targets.shape))
    if np.any(~np.isfinite(targets)) or np.any(targets < 0) or np.any(np.abs(targets.sum(axis=1) - 1) > 1e-6):
        raise InvalidDistributionError("soft target rows must be probability vectors")
    return targets


def fit_soft(features, soft_targets, params=None):
    """Fit a softmax boosted ensemble to row-stochastic soft targets.

    If a full Newton round would raise the training loss, the round's leaf
    values are halved until it does not; the stored trees carry the accepted
    step, so the recorded training loss never increases.
    """
    params = params or BoostParams()
    features = _check_features(features)
    t_len, d = features.shape
    if t_len == 0 or d == 0:
        raise InsufficientDataError("boosting needs at least one row and one feature")
    targets = _check_targets(soft_targets, t_len)
    n_classes = targets.shape[1]

    order = [np.argsort(features[:, f], kind="stable") for f in range(d)]
    rng = np.random.default_rng(params.seed)
    n_sub = max(1, int(round(params.colsample * d)))
    ens = BoostedEnsemble(n_classes=n_classes, n_features=d, params=params, trees=[[] for _ in range(n_classes)])
    scores = np.zeros((t_len, n_classes))
    loss = soft_cross_entropy(scores, targets)
    ens.train_loss.append(loss)
    for _ in range(params.n_rounds):
        prob = softmax(scores, axis=1)
        round_trees, deltas = [], []
        for c in range(n_classes):
            if n_sub < d:
                feature_ids = np.sort(rng.choice(d, size=n_sub, replace=False))
            else:
                feature_ids = np.arange(d)
            grad = prob[:, c] - targets[:, c]
            hess = prob[:, c] * (1.0 - prob[:, c])
            tree = grow_tree(features, order, grad, hess, params, feature_ids, params.learning_rate)
            round_trees.append(tree)
            deltas.append(tree.predict(features))
        step = np.stack(deltas, axis=1)
        factor = 1.0
        new_loss = soft_cross_entropy(scores + step, targets)
        for _ in range(params.max_backtrack):
            if new_loss <= loss:
                break
            factor *= 0.5
            new_loss = soft_cross_entropy(scores + factor * step, targets)
        else:
            if new_loss > loss:
                factor = 0.0
                new_loss = loss
        if factor != 1.0:
            round_trees = [tree.scaled(factor) for tree in round_trees]
        for c in range(n_classes):
            ens.trees[c].append(round_trees[c])
        scores = scores + factor * step
        loss = new_loss
        ens.train_loss.append(loss)
    return ens


def predict_proba(ensemble, features):
    """Softmax of summed leaf scores; rows sum to one."""
    return softmax(ensemble.decision_function(features), axis=1)


def ensemble_to_dict(ens):
    p = ens.params
    return {
        "n_classes": ens.n_classes,
        "n_features": ens.n_features,
        "params": {
            "n_rounds": p.n_rounds,
            "max_depth": p.max_depth,
            "learning_rate": p.learning_rate,
            "reg_lambda": p.reg_lambda,
            "min_child_weight": p.min_child_weight,
            "min_split_gain": p.min_split_gain,
            "colsample": p.colsample,
            "seed": p.seed,
            "max_backtrack": p.max_backtrack,
        },
        "trees": [[t.to_dict() for t in class_trees] for class_trees in ens.trees],
        "train_loss": list(ens.train_loss),
    }


def ensemble_from_dict(data):
    return BoostedEnsemble(
        n_classes=int(data["n_classes"]),
        n_features=int(data["n_features"]),
        params=BoostParams(**data["params"]),
        trees=[[RegressionTree.from_dict(t) for t in class_trees] for class_trees in data["trees"]],
        train_loss=list(data["train_loss"]),
    )
