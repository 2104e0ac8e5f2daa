"""Fitting loops for mixture-emission and boosted-emission regime models."""

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import boosted_trees as bt
from . import gmm_emission as gmm
from . import hmm_core
from .errors import DimensionError, InsufficientDataError, NonFiniteError
from .hmm_core import LOG_DENSITY_FLOOR, ChainParams

log = logging.getLogger(__name__)

MIXTURE = "mixture"
BOOSTED = "boosted"


@dataclass
class FitConfig:
    """Settings shared by both trainers.

    ``tol`` is the minimum relative log-likelihood improvement per
    iteration. ``boost`` holds the tree-ensemble settings used on every
    refit of the boosted trainer, which also runs a mixture fit with
    ``n_components`` for its initialisation.
    """

    n_states: int = 3
    max_iters: int = 500
    tol: float = 1e-6
    seed: int = 0
    emission: str = MIXTURE
    n_components: int = 2
    var_floor: float = gmm.DEFAULT_VAR_FLOOR
    boost: bt.BoostParams = field(default_factory=bt.BoostParams)
    patience: int = 3

    def __post_init__(self):
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.emission not in (MIXTURE, BOOSTED):
            raise ValueError(f"unknown emission kind {self.emission!r}")
        if isinstance(self.boost, dict):
            self.boost = bt.BoostParams(**self.boost)


@dataclass
class FitTrace:
    log_likelihood: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.log_likelihood)


@dataclass
class BoostedEmission:
    ensemble: bt.BoostedEnsemble
    state_priors: np.ndarray


@dataclass
class RegimeModel:
    """Fitted chain plus emission model.

    ``emission`` is a :class:`~regime_hmm.gmm_emission.MixtureEmission` or a
    :class:`BoostedEmission`. ``log_likelihood`` is the training-sequence
    likelihood of exactly these parameters.
    """

    chain: ChainParams
    emission: object
    trace: FitTrace
    log_likelihood: float

    @property
    def kind(self):
        return BOOSTED if isinstance(self.emission, BoostedEmission) else MIXTURE

    @property
    def n_states(self):
        return self.chain.n_states


def emission_logs(model_or_emission, observations):
    """``N x T`` emission log-matrix for either emission kind."""
    emission = getattr(model_or_emission, "emission", model_or_emission)
    if isinstance(emission, BoostedEmission):
        return scaled_log_likelihood(
            bt.predict_proba(emission.ensemble, observations), emission.state_priors
        )
    return gmm.log_emission_matrix(emission, observations)


def scaled_log_likelihood(class_proba, state_priors):
    """``log P(state | x) - log P(state)`` as an ``N x T`` matrix, clamped below."""
    with np.errstate(divide="ignore"):
        logs = np.log(np.asarray(class_proba).T) - np.log(np.asarray(state_priors))[:, None]
    return np.maximum(np.nan_to_num(logs, nan=LOG_DENSITY_FLOOR, neginf=LOG_DENSITY_FLOOR), LOG_DENSITY_FLOOR)


def _check_observations(observations, n_states, allow_missing=False):
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    if obs.ndim != 2:
        raise DimensionError("observations must be a T x d matrix", shape=list(obs.shape))
    bad = np.isinf(obs) if allow_missing else ~np.isfinite(obs)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise NonFiniteError("observation matrix contains non-finite cells", row=int(row), column=int(col))
    if obs.shape[0] <= n_states:
        raise InsufficientDataError("need more observations than states", T=obs.shape[0], n_states=n_states)
    return obs


def _relative_gain(new, old):
    return (new - old) / max(abs(old), 1e-300)


def fit_mixture_hmm(observations, config=None, init=None):
    """Baum-Welch for a Gaussian-mixture HMM.

    Each iteration runs the E-step for the current parameters, records the
    likelihood and stops if the relative gain fell below ``tol``; otherwise
    it updates ``pi``, ``A`` and the mixture. The returned parameters are the
    ones whose likelihood is the last trace entry, so ``init`` with
    ``max_iters=1`` returns ``init`` unchanged.
    """
    config = config or FitConfig()
    obs = _check_observations(observations, config.n_states)
    if init is not None:
        chain, emission = init.chain, init.emission
    else:
        emission = gmm.init_emission(obs, config.n_states, config.n_components, config.seed, config.var_floor)
        chain = ChainParams.uniform(config.n_states)
        if config.n_states > 1:
            # persistent start; uniform A is a saddle for symmetric data
            stay = 0.9
            off = (1.0 - stay) / (config.n_states - 1)
            trans = np.full((config.n_states, config.n_states), off)
            np.fill_diagonal(trans, stay)
            chain = ChainParams(chain.pi, trans)

    trace = FitTrace()
    for it in range(config.max_iters):
        post = hmm_core.posteriors(chain, gmm.log_emission_matrix(emission, obs))
        trace.log_likelihood.append(post.log_likelihood)
        if it > 0 and _relative_gain(trace.log_likelihood[-1], trace.log_likelihood[-2]) < config.tol:
            trace.converged = True
            break
        if it == config.max_iters - 1:
            break
        chain = _reestimate_chain(post)
        emission = gmm.m_step(emission, obs, post.gamma)
    log.debug("mixture fit: %d iterations, loglik %.6f", trace.iterations, trace.log_likelihood[-1])
    return RegimeModel(chain, emission, trace, trace.log_likelihood[-1])


def _reestimate_chain(post):
    if post.n_steps < 2:
        return ChainParams(hmm_core.reestimate_initial(post), np.eye(post.n_states))
    trans = hmm_core.reestimate_transitions(post)
    trans = trans / trans.sum(axis=1, keepdims=True)
    return ChainParams(hmm_core.reestimate_initial(post), trans)


def _impute_columns(obs):
    if not np.isnan(obs).any():
        return obs
    filled = obs.copy()
    col_means = np.nanmean(obs, axis=0)
    col_means = np.where(np.isnan(col_means), 0.0, col_means)
    rows, cols = np.nonzero(np.isnan(filled))
    filled[rows, cols] = col_means[cols]
    return filled


def fit_boosted_hmm(observations, config=None):
    """Hybrid EM with boosted-tree emissions.

    Starts from a mixture HMM, then repeatedly: computes posteriors,
    re-estimates ``A`` and ``pi``, refits the ensemble to the posteriors,
    and converts its predictions to scaled likelihoods. Stops after
    ``patience`` consecutive relative changes smaller than ``tol`` in
    magnitude, or after ``max_iters`` refits, and returns the iterate with
    the highest likelihood. The trace
    holds the likelihood of every boosted iterate.
    """
    config = config or FitConfig(emission=BOOSTED)
    obs = _check_observations(observations, config.n_states, allow_missing=True)
    init = fit_mixture_hmm(_impute_columns(obs), replace(config, emission=MIXTURE))
    post = hmm_core.posteriors(init.chain, gmm.log_emission_matrix(init.emission, _impute_columns(obs)))

    trace = FitTrace()
    best = None
    stalls = 0
    for it in range(config.max_iters):
        chain = _reestimate_chain(post)
        params = replace(config.boost, seed=config.boost.seed + it)
        ensemble = bt.fit_soft(obs, post.gamma.T, params)
        priors = post.gamma.mean(axis=1)
        priors = priors / priors.sum()
        emission = BoostedEmission(ensemble, priors)
        new_post = hmm_core.posteriors(chain, emission_logs(emission, obs))
        ll = new_post.log_likelihood
        if trace.log_likelihood:
            # a falling likelihood is not a stall: keep refitting until the trace flattens
            stalls = stalls + 1 if abs(_relative_gain(ll, trace.log_likelihood[-1])) < config.tol else 0
        trace.log_likelihood.append(ll)
        if best is None or ll > best.log_likelihood:
            best = RegimeModel(chain, emission, trace, ll)
        log.debug("boosted iteration %d: loglik %.6f", it, ll)
        if stalls >= config.patience:
            trace.converged = True
            break
        post = new_post
    return best


def fit(observations, config):
    if config.emission == BOOSTED:
        return fit_boosted_hmm(observations, config)
    return fit_mixture_hmm(observations, config)


def state_proba(model, observations):
    """Smoothed posteriors of ``model`` on a (possibly new) sequence."""
    return hmm_core.posteriors(model.chain, emission_logs(model, observations))


def decode(model, observations):
    return hmm_core.viterbi(model.chain, emission_logs(model, observations))


def align_states(true_states, decoded, n_states):
    """Permutation of decoded labels maximising agreement with ``true_states``.

    Returns ``(mapping, accuracy)`` where ``mapping[decoded_label]`` is the
    matched true label.
    """
    true_states = np.asarray(true_states)
    decoded = np.asarray(decoded)
    best_perm, best_hits = None, -1
    for perm in itertools.permutations(range(n_states)):
        hits = int((np.asarray(perm)[decoded] == true_states).sum())
        if hits > best_hits:
            best_perm, best_hits = np.asarray(perm), hits
    return best_perm, best_hits / true_states.size
