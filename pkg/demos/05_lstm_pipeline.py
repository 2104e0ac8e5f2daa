"""
From factor groups to next-move predictions
===========================================

Two factor groups each get a boosted HMM. Their state posteriors are stacked
row-wise into one input matrix, and a small LSTM learns to map that matrix
to the triple-barrier label of every bar. Training and evaluation use
disjoint stretches of the same simulated history.
"""

from regime_hmm import pipeline

config = pipeline.PipelineConfig.from_dict({
    "seed": 0,
    "groups": {"factors": ["f0", "f1"], "market": ["ret5", "log_hl", "close_pre"]},
    "fit": {"n_states": 3, "emission": "boosted", "max_iters": 20, "boost": {"n_rounds": 20, "max_depth": 2}},
    "lstm": {"epochs": 200, "hidden_dim": 8, "learning_rate": 0.5},
})
generator = {
    "n_states": 3, "T": 1500,
    "means": [[-1.0, 0.5], [0.0, -0.5], [1.0, 0.5]],
    "variances": [[1.0, 1.0]] * 3,
    "trans": [[0.9, 0.05, 0.05], [0.05, 0.9, 0.05], [0.05, 0.05, 0.9]],
}
series = pipeline.synth_from_config(generator, seed=0)
train, test = series.slice(0, 1000), series.slice(1000)

bundle = pipeline.fit_groups(train, config)
for g in bundle.groups:
    print(f"group {g.name}: columns {g.columns}, log-likelihood {g.model.log_likelihood:.2f}")

start, X = pipeline.stacked_input(bundle, train)
print("stacked input:", X.shape, "(rows = states of every group, columns = bars from row", start, "on)")

bundle = pipeline.train_lstm(bundle, train)
print("train accuracy:", round(bundle.lstm_info["train_accuracy"], 3), "best epoch:", bundle.lstm_info["best_epoch"])

report = pipeline.evaluate(bundle, test)
print(f"test accuracy {report.accuracy:.3f} vs majority baseline {report.majority_baseline:.3f}"
      f" over {report.n_labelled} labelled bars")
print("confusion (rows = true -1/0/+1):")
print(report.confusion)
