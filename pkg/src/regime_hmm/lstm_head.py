"""Single-layer LSTM that labels every bar of a stacked posterior sequence.

Inputs are ``k x T`` matrices (rows = stacked state posteriors, columns =
time) or batches of them with shape ``(B, k, T)``. Targets use the label
alphabet -1/0/+1, mapped to class indices 0/1/2; NaN marks a bar without a
label, which is excluded from the loss and from accuracy.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, softmax

from .errors import DimensionError, InsufficientDataError, NonFiniteError

N_CLASSES = 3
GATES = ("forget", "input", "candidate", "output")


@dataclass
class LstmParams:
    """Gate weights stacked in the order forget, input, candidate, output.

    ``w_x``: (4H, k), ``w_h``: (4H, H), ``b``: (4H,), ``w_y``: (3, H),
    ``b_y``: (3,).
    """

    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray
    w_y: np.ndarray
    b_y: np.ndarray

    NAMES = ("w_x", "w_h", "b", "w_y", "b_y")

    @property
    def input_dim(self):
        return self.w_x.shape[1]

    @property
    def hidden_dim(self):
        return self.w_h.shape[1]

    def arrays(self):
        return [getattr(self, name) for name in self.NAMES]

    def copy(self):
        return LstmParams(*(a.copy() for a in self.arrays()))

    @classmethod
    def zeros(cls, input_dim, hidden_dim):
        h4 = 4 * hidden_dim
        return cls(
            np.zeros((h4, input_dim)), np.zeros((h4, hidden_dim)), np.zeros(h4),
            np.zeros((N_CLASSES, hidden_dim)), np.zeros(N_CLASSES),
        )

    @classmethod
    def random(cls, input_dim, hidden_dim, seed=0):
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(hidden_dim)
        h4 = 4 * hidden_dim
        return cls(
            rng.uniform(-scale, scale, (h4, input_dim)),
            rng.uniform(-scale, scale, (h4, hidden_dim)),
            np.zeros(h4),
            rng.uniform(-scale, scale, (N_CLASSES, hidden_dim)),
            np.zeros(N_CLASSES),
        )

    def to_dict(self):
        return {name: getattr(self, name).tolist() for name in self.NAMES}

    @classmethod
    def from_dict(cls, data):
        return cls(*(np.asarray(data[name], dtype=float) for name in cls.NAMES))


def stack_state_probas(posteriors):
    """Row-concatenate state posterior matrices (``N_i x T`` each)."""
    mats = [np.asarray(getattr(p, "gamma", p), dtype=float) for p in posteriors]
    if not mats:
        raise InsufficientDataError("nothing to stack")
    lengths = {m.shape[1] for m in mats}
    if len(lengths) != 1:
        raise DimensionError("posterior matrices differ in length", lengths=sorted(lengths))
    return np.vstack(mats)


def _batch(X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3:
        raise DimensionError("X must be k x T or B x k x T", shape=list(X.shape))
    if not np.all(np.isfinite(X)):
        raise NonFiniteError("LSTM inputs must be finite")
    return X, single


def _targets(Y, shape):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[None]
    if Y.shape != shape:
        raise DimensionError("targets must match the batch and time dimensions", expected=list(shape), got=list(Y.shape))
    mask = np.isfinite(Y)
    idx = np.where(mask, np.nan_to_num(Y) + 1, 0).astype(np.intp)
    return idx, mask


def _run(params, X):
    B, k, T = X.shape
    if k != params.input_dim:
        raise DimensionError("input dimension mismatch", expected=params.input_dim, got=k)
    H = params.hidden_dim
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    cache = {name: np.empty((T, B, H)) for name in ("f", "i", "g", "o", "c", "h", "tc")}
    z_in = np.einsum("bkt,gk->tbg", X, params.w_x) + params.b
    w_h_t = params.w_h.T
    for t in range(T):
        z = z_in[t] + h @ w_h_t
        gates = expit(z)
        f = gates[:, :H]
        i = gates[:, H:2 * H]
        o = gates[:, 3 * H:]
        g = np.tanh(z[:, 2 * H:3 * H])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        cache["f"][t], cache["i"][t], cache["g"][t], cache["o"][t] = f, i, g, o
        cache["c"][t], cache["h"][t], cache["tc"][t] = c, h, tc
    probs = softmax(cache["h"] @ params.w_y.T + params.b_y, axis=2)
    return probs, cache


def lstm_forward(params, X):
    """Class probabilities per bar: ``3 x T`` (or ``B x 3 x T`` for a batch)."""
    X, single = _batch(X)
    probs, _ = _run(params, X)
    out = probs.transpose(1, 2, 0)
    return out[0] if single else out


def loss(params, X, Y, reduction="mean"):
    X, _ = _batch(X)
    probs, _ = _run(params, X)
    idx, mask = _targets(Y, (X.shape[0], X.shape[2]))
    picked = np.take_along_axis(probs.transpose(1, 0, 2), idx[..., None], axis=2)[..., 0]
    total = -np.log(picked[mask]).sum()
    if reduction == "sum":
        return float(total)
    return float(total / max(mask.sum(), 1))


def lstm_gradients(params, X, Y, reduction="mean"):
    """Loss and BPTT gradients of the cross-entropy over labelled bars.

    Returns ``(loss, grads)`` where ``grads`` is an :class:`LstmParams` of
    the same shapes. ``reduction="mean"`` averages over all labelled bars in
    the batch; ``"sum"`` adds them.
    """
    X, _ = _batch(X)
    B, k, T = X.shape
    H = params.hidden_dim
    probs, cache = _run(params, X)
    idx, mask = _targets(Y, (B, T))
    n = mask.sum()
    if n == 0:
        raise InsufficientDataError("no labelled bars")
    scale = 1.0 if reduction == "sum" else 1.0 / n

    idx_t = idx.T
    mask_t = mask.T
    picked = np.take_along_axis(probs, idx_t[..., None], axis=2)[..., 0]
    value = -np.log(picked[mask_t]).sum() * scale

    d_logits = probs.copy()
    np.put_along_axis(d_logits, idx_t[..., None], np.take_along_axis(d_logits, idx_t[..., None], axis=2) - 1.0, axis=2)
    d_logits *= mask_t[..., None] * scale

    grads = LstmParams.zeros(k, H)
    grads.w_y = np.einsum("tbc,tbh->ch", d_logits, cache["h"])
    grads.b_y = d_logits.sum(axis=(0, 1))
    dh_out = d_logits @ params.w_y
    c_prev = np.concatenate([np.zeros((1, B, H)), cache["c"][:-1]])
    h_prev = np.concatenate([np.zeros((1, B, H)), cache["h"][:-1]])
    dz_all = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        f, i, g, o, tc = cache["f"][t], cache["i"][t], cache["g"][t], cache["o"][t], cache["tc"][t]
        dh = dh_out[t] + dh_next
        dc = dh * o * (1.0 - tc**2) + dc_next
        dz = dz_all[t]
        dz[:, :H] = dc * c_prev[t] * f * (1.0 - f)
        dz[:, H:2 * H] = dc * g * i * (1.0 - i)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g**2)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dh_next = dz @ params.w_h
        dc_next = dc * f
    grads.w_x = np.einsum("tbg,bkt->gk", dz_all, X)
    grads.w_h = np.einsum("tbg,tbh->gh", dz_all, h_prev)
    grads.b = dz_all.sum(axis=(0, 1))
    return float(value), grads


def _clip(grads, max_norm):
    norm = np.sqrt(sum(float((a**2).sum()) for a in grads.arrays()))
    if norm > max_norm:
        for a in grads.arrays():
            a *= max_norm / norm
    return grads


def predict(params, X):
    """Predicted label (-1, 0, +1) per bar; ties go to the lowest label."""
    probs = lstm_forward(params, X)
    return np.argmax(probs, axis=-2) - 1


def evaluate(params, X, Y):
    """Accuracy over labelled bars and the 3x3 confusion matrix (rows = truth)."""
    pred = np.asarray(predict(params, X)).ravel()
    Y = np.asarray(Y, dtype=float).ravel()
    mask = np.isfinite(Y)
    if not mask.any():
        raise InsufficientDataError("no labelled bars to evaluate")
    truth = Y[mask].astype(np.intp) + 1
    guess = pred[mask] + 1
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(confusion, (truth, guess), 1)
    return float(np.trace(confusion) / mask.sum()), confusion


@dataclass
class LstmFit:
    params: LstmParams
    train_accuracy: float
    loss_history: list
    best_epoch: int


def fit_lstm(X, Y, epochs=300, learning_rate=0.05, hidden_dim=16, seed=0, clip_norm=5.0):
    """Full-batch gradient descent with gradient-norm clipping.

    ``loss_history[e]`` is the loss of the parameters at the start of epoch
    ``e``; the parameters with the lowest recorded loss are returned.
    """
    X, _ = _batch(X)
    Y = np.asarray(Y, dtype=float)
    if not np.isfinite(Y).any():
        raise InsufficientDataError("no labelled bars")
    params = LstmParams.random(X.shape[1], hidden_dim, seed)
    best, best_loss, best_epoch = params.copy(), np.inf, 0
    history = []
    for epoch in range(epochs + 1):
        value, grads = lstm_gradients(params, X, Y)
        history.append(value)
        if value < best_loss:
            best, best_loss, best_epoch = params.copy(), value, epoch
        if epoch == epochs:
            break
        _clip(grads, clip_norm)
        for p, gr in zip(params.arrays(), grads.arrays()):
            p -= learning_rate * gr
    acc, _ = evaluate(best, X[0] if X.shape[0] == 1 else X, Y)
    return LstmFit(best, acc, history, best_epoch)
