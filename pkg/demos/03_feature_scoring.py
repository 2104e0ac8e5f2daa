"""
Which factor separates the regimes?
===================================

Every candidate feature gets its own three-state mixture HMM. The decoded
states are cross-tabulated against the triple-barrier labels and the table
is scored by purity and entropy: a state that always precedes the same
label counts fully, a state whose labels look like coin flips counts little.
"""

import numpy as np

from regime_hmm import data, feature_scoring, labeling
from regime_hmm.trainers import FitConfig

trans = np.full((3, 3), 0.05) + np.eye(3) * 0.85
series = data.synth(3, 1500, [[-2.0, 0.0], [0.0, 0.0], [2.0, 0.0]], np.ones((3, 2)), trans, np.ones(3) / 3, seed=4)
series = data.derive_market_features(series)

# f0 tracks the regime, f1 is pure noise
names = ["f0", "f1", "log_hl", "close_pre"]
barrier = labeling.BarrierConfig(horizon=5)
ranking, failures = feature_scoring.rank_features(series, names, barrier, FitConfig(n_states=3, n_components=1))

for name, sc in ranking:
    print(f"{name:10s} score {sc.total:.4f}  per-state purity {np.round(sc.acc, 2)}")
print("failed:", failures or "none")

# the score itself is a closed-form function of the count table
print("perfect table :", feature_scoring.score([[10, 0, 0], [0, 20, 0], [0, 0, 30]]).total)
print("uniform table :", round(feature_scoring.score(np.full((3, 3), 5)).total, 6))
