"""Emission-agnostic HMM machinery.

All routines take the chain parameters and an ``N x T`` matrix of emission
log-densities, so the same recursions serve Gaussian-mixture emissions and
the scaled likelihoods produced by a boosted classifier.

The forward and backward recursions are evaluated as running products of
``N x N`` step matrices by recursive doubling, so the work per sequence is a
handful of batched matrix products rather than a Python loop over time.
Every partial product is rescaled to unit sum and each column of the
emission matrix is shifted by its maximum before exponentiation, which keeps
the quantities finite even when every state assigns a log-density far below
the double-precision underflow point.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InsufficientDataError, InvalidDistributionError, NonFiniteError

#: Lower clamp applied by emission models to log-densities.
LOG_DENSITY_FLOOR = -700.0

_STOCHASTIC_ATOL = 1e-9


@dataclass(frozen=True)
class ChainParams:
    """Initial distribution and transition matrix of an ``N``-state chain."""

    pi: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        trans = np.asarray(self.trans, dtype=float)
        if pi.ndim != 1 or pi.size < 1:
            raise DimensionError("pi must be a non-empty vector", shape=list(pi.shape))
        n = pi.size
        if trans.shape != (n, n):
            raise DimensionError(
                "transition matrix must be N x N", expected=[n, n], got=list(trans.shape)
            )
        if not (np.all(np.isfinite(pi)) and np.all(np.isfinite(trans))):
            raise NonFiniteError("chain parameters must be finite")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > _STOCHASTIC_ATOL:
            raise InvalidDistributionError("pi must be a probability vector", total=float(pi.sum()))
        if np.any(trans < 0) or np.any(np.abs(trans.sum(axis=1) - 1.0) > _STOCHASTIC_ATOL):
            raise InvalidDistributionError(
                "transition rows must be probability vectors",
                row_sums=trans.sum(axis=1).tolist(),
            )
        pi.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "trans", trans)

    @property
    def n_states(self):
        return self.pi.size

    @classmethod
    def uniform(cls, n_states):
        return cls(np.full(n_states, 1.0 / n_states), np.full((n_states, n_states), 1.0 / n_states))


@dataclass(frozen=True)
class PosteriorMatrix:
    """Smoothed state posteriors.

    ``gamma[i, t]`` is P(S_t = i | O) and ``xi[t, i, j]`` is
    P(S_t = i, S_{t+1} = j | O).
    """

    gamma: np.ndarray
    xi: np.ndarray
    log_likelihood: float

    @property
    def n_states(self):
        return self.gamma.shape[0]

    @property
    def n_steps(self):
        return self.gamma.shape[1]


@dataclass(frozen=True)
class StatePath:
    states: np.ndarray
    path_log_score: float


def _check_inputs(chain, emis):
    emis = np.asarray(emis, dtype=float)
    if emis.ndim != 2:
        raise DimensionError("emission matrix must be 2-D (N x T)", shape=list(emis.shape))
    if emis.shape[0] != chain.n_states:
        raise DimensionError(
            "emission rows do not match the number of states",
            n_states=chain.n_states,
            rows=emis.shape[0],
        )
    if emis.shape[1] < 1:
        raise DimensionError("emission matrix has no time steps")
    if not np.all(np.isfinite(emis)):
        bad = np.argwhere(~np.isfinite(emis))[0]
        raise NonFiniteError(
            "emission log-densities must be finite", state=int(bad[0]), step=int(bad[1])
        )
    return emis


def _shifted(emis):
    shift = emis.max(axis=0)
    return np.exp(emis - shift), shift


def _scan_products(mats, reverse=False):
    """Running products of a stack of ``N x N`` matrices by recursive doubling.

    Forward: ``out[t] = mats[0] @ ... @ mats[t]``; reverse:
    ``out[t] = mats[t] @ ... @ mats[-1]``. Each product is rescaled to unit
    entry sum and ``log_scale[t]`` holds the log of the removed factor, so
    the exact product is ``out[t] * exp(log_scale[t])``. Products that are
    identically zero come back as NaN.
    """
    prods = mats.copy()
    log_scale = np.zeros(mats.shape[0])
    k = 1
    while k < mats.shape[0]:
        step = prods[:-k] @ prods[k:]
        total = step.sum(axis=(1, 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            step /= total[:, None, None]
            logs = log_scale[:-k] + log_scale[k:] + np.log(total)
        if reverse:
            prods[:-k], log_scale[:-k] = step, logs
        else:
            prods[k:], log_scale[k:] = step, logs
        k *= 2
    return prods, log_scale


def _forward_scan(chain, probs):
    """Filtered probabilities ``(T, N)`` and ``log P(O_0..O_t)`` of the shifted emissions."""
    mats = chain.trans[None, :, :] * probs[:, None, :]
    mats[0] = np.diag(chain.pi * probs[0])
    prods, log_scale = _scan_products(mats)
    with np.errstate(invalid="ignore"):
        unnorm = prods.sum(axis=1)
        total = unnorm.sum(axis=1)
    bad = ~(total > 0)
    if bad.any():
        raise InvalidDistributionError("observation sequence has zero probability", step=int(np.argmax(bad)))
    return unnorm / total[:, None], log_scale + np.log(total)


def _backward_scan(chain, probs):
    """Unit-sum backward vectors ``(T, N)`` and the logs of their scales."""
    t_len, n = probs.shape
    vectors = np.full((t_len, n), 1.0 / n)
    log_scale = np.full(t_len, np.log(n))
    if t_len > 1:
        mats = chain.trans[None, :, :] * probs[1:, None, :]
        prods, logs = _scan_products(mats, reverse=True)
        with np.errstate(invalid="ignore"):
            unnorm = prods.sum(axis=2)
            total = unnorm.sum(axis=1)
            vectors[:-1] = unnorm / total[:, None]
            log_scale[:-1] = logs + np.log(total)
    return vectors, log_scale


def forward(chain, emis):
    """Scaled forward pass.

    Returns
    -------
    alpha_hat : ndarray, shape (N, T)
        Filtered state probabilities; every column sums to one.
    log_norms : ndarray, shape (T,)
        ``log P(O_t | O_0..O_{t-1})`` for each step. The conventional
        Rabiner scalers are ``exp(-log_norms)``.
    log_likelihood : float
        ``log P(O)``, the sum of ``log_norms``.
    """
    emis = _check_inputs(chain, emis)
    probs, shift = _shifted(emis)
    alpha, cum = _forward_scan(chain, np.ascontiguousarray(probs.T))
    log_norms = np.diff(cum, prepend=0.0) + shift
    return alpha.T, log_norms, float(cum[-1] + shift.sum())


def backward(chain, emis, log_norms):
    """Scaled backward pass matching the normalisers of :func:`forward`.

    ``alpha_hat * beta_hat`` is the smoothed posterior.
    """
    emis = _check_inputs(chain, emis)
    log_norms = np.asarray(log_norms, dtype=float)
    n, t_len = emis.shape
    if log_norms.shape != (t_len,):
        raise DimensionError("normaliser length must equal T", expected=t_len, got=log_norms.size)
    probs, shift = _shifted(emis)
    vectors, log_scale = _backward_scan(chain, np.ascontiguousarray(probs.T))
    # beta_hat[t] divides the shifted backward vector by the normalisers of steps t+1..T-1
    later = np.cumsum((log_norms - shift)[::-1])[::-1]
    tail = np.append(later[1:], 0.0)
    return (vectors * np.exp(log_scale - tail)[:, None]).T


def posteriors(chain, emis):
    """State and transition posteriors plus the sequence log-likelihood."""
    emis = _check_inputs(chain, emis)
    probs, shift = _shifted(emis)
    probs = np.ascontiguousarray(probs.T)
    alpha, cum = _forward_scan(chain, probs)
    vectors, _ = _backward_scan(chain, probs)
    gamma = alpha * vectors
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi = alpha[:-1, :, None] * chain.trans[None, :, :] * (probs[1:] * vectors[1:])[:, None, :]
    xi /= xi.sum(axis=(1, 2), keepdims=True)
    return PosteriorMatrix(gamma=gamma.T, xi=xi, log_likelihood=float(cum[-1] + shift.sum()))


def log_likelihood(chain, emis):
    return forward(chain, emis)[2]


def viterbi(chain, emis):
    """Most probable state path; ties go to the lowest state index."""
    emis = _check_inputs(chain, emis)
    n, t_len = emis.shape
    with np.errstate(divide="ignore"):
        log_pi = np.log(chain.pi)
        log_a = np.log(chain.trans)
    delta = log_pi + emis[:, 0]
    back = np.zeros((t_len, n), dtype=np.intp)
    for t in range(1, t_len):
        cand = delta[:, None] + log_a
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(n)] + emis[:, t]
    states = np.empty(t_len, dtype=np.intp)
    states[-1] = int(np.argmax(delta))
    for t in range(t_len - 1, 0, -1):
        states[t - 1] = back[t, states[t]]
    return StatePath(states=states, path_log_score=float(delta[states[-1]]))


def path_log_score(chain, emis, states):
    """Joint log-probability of a given state path and the observations."""
    emis = _check_inputs(chain, emis)
    states = np.asarray(states, dtype=np.intp)
    with np.errstate(divide="ignore"):
        score = np.log(chain.pi[states[0]])
        score += np.log(chain.trans[states[:-1], states[1:]]).sum()
    return float(score + emis[states, np.arange(states.size)].sum())


def reestimate_transitions(post):
    """Transition matrix maximising the expected complete-data likelihood.

    Rows with no posterior mass are replaced by the uniform row.
    """
    if post.n_steps < 2:
        raise InsufficientDataError("transition re-estimation needs T >= 2", T=post.n_steps)
    n = post.n_states
    counts = post.xi.sum(axis=0)
    mass = post.gamma[:, :-1].sum(axis=1)
    trans = np.full((n, n), 1.0 / n)
    ok = mass > 1e-300
    trans[ok] = counts[ok] / mass[ok, None]
    return trans


def reestimate_initial(post):
    pi = post.gamma[:, 0].copy()
    return pi / pi.sum()
