"""
Filtering, smoothing and decoding a two-state chain
===================================================

A sticky two-state chain emits one of three symbols. We build the emission
log-density matrix by hand, then ask the core routines for the likelihood,
the smoothed state probabilities and the single most likely path.
"""

import numpy as np

from regime_hmm import ChainParams, forward, posteriors, viterbi

chain = ChainParams(pi=[0.5, 0.5], trans=[[0.9, 0.1], [0.1, 0.9]])

# state 0 prefers symbol 0, state 1 prefers symbol 2
symbol_probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])
observed = np.array([0, 0, 1, 2, 2, 2, 1, 0, 0])
emis = np.log(symbol_probs[:, observed])  # N x T

alpha, log_norms, loglik = forward(chain, emis)
print("log P(O)            :", round(loglik, 6))
print("sum of step terms   :", round(log_norms.sum(), 6))

post = posteriors(chain, emis)
print("P(state 1 | O) by t :", np.round(post.gamma[1], 3))

path = viterbi(chain, emis)
print("Viterbi path        :", path.states)
print("path log-probability:", round(path.path_log_score, 6))

# The filtered probabilities only look backwards; the smoothed ones also use
# the future, so they react earlier at the switch points.
print("filtered P(state 1) :", np.round(alpha[1], 3))
