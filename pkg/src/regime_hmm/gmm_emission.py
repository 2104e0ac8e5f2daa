"""Per-state diagonal Gaussian mixture emissions."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, InsufficientDataError, NonFiniteError
from .hmm_core import LOG_DENSITY_FLOOR

DEFAULT_VAR_FLOOR = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MixtureEmission:
    """Gaussian mixture per hidden state.

    Attributes
    ----------
    weights : ndarray, shape (N, M)
    means : ndarray, shape (N, M, d)
    variances : ndarray, shape (N, M, d)
        Diagonal covariances, floored at ``var_floor``.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    var_floor: float = DEFAULT_VAR_FLOOR

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        means = np.asarray(self.means, dtype=float)
        variances = np.maximum(np.asarray(self.variances, dtype=float), self.var_floor)
        if weights.ndim != 2 or means.ndim != 3 or means.shape[:2] != weights.shape:
            raise DimensionError(
                "mixture parameter shapes are inconsistent",
                weights=list(weights.shape),
                means=list(means.shape),
            )
        if variances.shape != means.shape:
            raise DimensionError(
                "variances must match means", means=list(means.shape), variances=list(variances.shape)
            )
        for arr in (weights, means, variances):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_states(self):
        return self.weights.shape[0]

    @property
    def n_components(self):
        return self.weights.shape[1]

    @property
    def n_features(self):
        return self.means.shape[2]


def _as_observations(observations, n_features=None):
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    if obs.ndim != 2:
        raise DimensionError("observations must be a T x d matrix", shape=list(obs.shape))
    if n_features is not None and obs.shape[1] != n_features:
        raise DimensionError(
            "observation dimension does not match the emission model",
            expected=n_features,
            got=obs.shape[1],
        )
    if not np.all(np.isfinite(obs)):
        row, col = np.argwhere(~np.isfinite(obs))[0]
        raise NonFiniteError(
            "mixture emissions require finite observations", row=int(row), column=int(col)
        )
    return obs


def component_log_densities(emission, observations):
    """``log w_jk + log N(x_t; mu_jk, var_jk)`` with shape (N, M, T)."""
    obs = _as_observations(observations, emission.n_features)
    var = emission.variances
    diff = obs[None, None, :, :] - emission.means[:, :, None, :]
    quad = (diff**2 / var[:, :, None, :]).sum(axis=-1)
    log_norm = -0.5 * (_LOG_2PI * emission.n_features + np.log(var).sum(axis=-1))
    with np.errstate(divide="ignore"):
        log_w = np.log(emission.weights)
    return log_w[:, :, None] + log_norm[:, :, None] - 0.5 * quad


def log_emission_matrix(emission, observations):
    """``N x T`` matrix of clamped mixture log-densities."""
    comp = component_log_densities(emission, observations)
    return np.maximum(logsumexp(comp, axis=1), LOG_DENSITY_FLOOR)


def log_density(emission, state, obs):
    obs = np.atleast_1d(np.asarray(obs, dtype=float))
    if obs.shape != (emission.n_features,):
        raise DimensionError(
            "observation dimension does not match the emission model",
            expected=emission.n_features,
            got=obs.size,
        )
    return float(log_emission_matrix(emission, obs[None, :])[state, 0])


def responsibilities(emission, observations, gamma):
    """Joint state/component responsibilities, shape (N, M, T)."""
    comp = component_log_densities(emission, observations)
    within = np.exp(comp - logsumexp(comp, axis=1, keepdims=True))
    within = np.nan_to_num(within, nan=1.0 / emission.n_components)
    return within * np.asarray(gamma)[:, None, :]


def expected_complete_loglik(emission, observations, resp):
    """Expected complete-data log-likelihood for fixed responsibilities."""
    comp = component_log_densities(emission, observations)
    mask = resp > 0
    return float((resp[mask] * comp[mask]).sum())


def m_step(emission, observations, gamma, min_mass=1e-12):
    """Responsibility-weighted update of weights, means and variances.

    States whose total posterior mass is below ``min_mass`` keep their
    parameters. Components that receive no responsibility keep their mean
    and variance and get weight zero.
    """
    obs = _as_observations(observations, emission.n_features)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (emission.n_states, obs.shape[0]):
        raise DimensionError(
            "gamma must be N x T",
            expected=[emission.n_states, obs.shape[0]],
            got=list(gamma.shape),
        )
    resp = responsibilities(emission, obs, gamma)
    comp_mass = resp.sum(axis=2)
    state_mass = comp_mass.sum(axis=1)

    weights = emission.weights.copy()
    means = emission.means.copy()
    variances = emission.variances.copy()
    for j in np.flatnonzero(state_mass >= min_mass):
        weights[j] = comp_mass[j] / state_mass[j]
        for k in np.flatnonzero(comp_mass[j] > 0):
            r = resp[j, k]
            mu = r @ obs / comp_mass[j, k]
            means[j, k] = mu
            variances[j, k] = r @ (obs - mu) ** 2 / comp_mass[j, k]
    return MixtureEmission(weights, means, variances, emission.var_floor)


def _kmeanspp(points, k, rng):
    centers = [points[rng.integers(points.shape[0])]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(points.shape[0])
        else:
            idx = rng.choice(points.shape[0], p=d2 / total)
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(points, centers, n_iter):
    centers = centers.copy()
    labels = np.zeros(points.shape[0], dtype=np.intp)
    for _ in range(n_iter):
        dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(dist, axis=1)
        moved = False
        for c in range(centers.shape[0]):
            members = points[labels == c]
            if members.shape[0]:
                new = members.mean(axis=0)
                moved |= not np.array_equal(new, centers[c])
                centers[c] = new
        if not moved:
            break
    return centers, labels


def init_emission(observations, n_states, n_components, seed=0, var_floor=DEFAULT_VAR_FLOOR, n_lloyd=10):
    """Seed a mixture emission from the data.

    State centres come from k-means++ seeding followed by a few Lloyd
    iterations; states are ordered by their centre's first coordinate.
    Within each state's cell the component means are seeded the same way.
    Weights start uniform and every variance equals the global per-feature
    sample variance.
    """
    obs = _as_observations(observations)
    t_len, d = obs.shape
    if t_len < n_states * n_components:
        raise InsufficientDataError(
            "need at least n_states * n_components observations",
            T=t_len,
            required=n_states * n_components,
        )
    rng = np.random.default_rng(seed)
    centers, labels = _lloyd(obs, _kmeanspp(obs, n_states, rng), n_lloyd)
    order = np.lexsort(centers.T[::-1])
    centers = centers[order]
    labels = np.argsort(order)[labels]

    means = np.empty((n_states, n_components, d))
    for j in range(n_states):
        cell = obs[labels == j]
        if cell.shape[0] < n_components:
            cell = obs
        sub, _ = _lloyd(cell, _kmeanspp(cell, n_components, rng), n_lloyd)
        means[j] = sub[np.lexsort(sub.T[::-1])]
    global_var = np.maximum(obs.var(axis=0), var_floor)
    variances = np.broadcast_to(global_var, (n_states, n_components, d)).copy()
    weights = np.full((n_states, n_components), 1.0 / n_components)
    return MixtureEmission(weights, means, variances, var_floor)
