"""Regime detection with hidden Markov models, boosted-tree emissions and an
LSTM head over stacked state posteriors."""

from .errors import RegimeError
from .hmm_core import ChainParams, PosteriorMatrix, StatePath, backward, forward, posteriors, viterbi
from .trainers import FitConfig, RegimeModel, fit_boosted_hmm, fit_mixture_hmm, state_proba

__version__ = "0.1.0"

__all__ = [
    "ChainParams",
    "FitConfig",
    "PosteriorMatrix",
    "RegimeError",
    "RegimeModel",
    "StatePath",
    "backward",
    "fit_boosted_hmm",
    "fit_mixture_hmm",
    "forward",
    "posteriors",
    "state_proba",
    "viterbi",
]
