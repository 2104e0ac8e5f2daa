"""
The batch command line, end to end
==================================

Runs every subcommand in a temporary directory, exactly as a shell session
would, and shows what each one wrote. Equivalent shell commands are
``regime-hmm <command> ...`` or ``python -m regime_hmm <command> ...``.
"""

import json
import tempfile
from pathlib import Path

from regime_hmm import cli, data

work = Path(tempfile.mkdtemp(prefix="regime-hmm-"))
config = {
    "seed": 7,
    "synth": {
        "n_states": 3, "T": 900,
        "means": [[-1.0, 0.5], [0.0, -0.5], [1.0, 0.5]],
        "variances": [[1.0, 1.0]] * 3,
        "trans": [[0.9, 0.05, 0.05], [0.05, 0.9, 0.05], [0.05, 0.05, 0.9]],
    },
    "groups": {"factors": ["f0", "f1"], "market": ["ret5", "log_hl"]},
    "fit": {"n_states": 3, "max_iters": 15, "boost": {"n_rounds": 15, "max_depth": 2}},
    "lstm": {"epochs": 100, "hidden_dim": 8, "learning_rate": 0.5},
}
(work / "config.json").write_text(json.dumps(config, indent=1))


def run(*args):
    argv = [str(a) for a in args]
    print("$ regime-hmm", " ".join(argv).replace(str(work) + "/", ""))
    code = cli.main(argv)
    assert code == 0, code


cfg = work / "config.json"
run("synth", "--config", cfg, "--out", work)

# keep the last 300 bars out of training
bars = data.read_bars(work / "bars.csv")
data.write_bars(work / "train.csv", bars.slice(0, 600))
data.write_bars(work / "test.csv", bars.slice(600))

run("label", "--input", work / "train.csv", "--config", cfg, "--out", work)
run("score-features", "--input", work / "train.csv", "--config", cfg, "--features", "f0,f1,log_hl", "--out", work)
run("train", "--input", work / "train.csv", "--config", cfg, "--emission", "boosted", "--out", work)
run("decode", "--input", work / "train.csv", "--model", work / "model.json", "--out", work)
run("train-lstm", "--input", work / "train.csv", "--model", work / "model.json", "--out", work)
run("predict", "--input", work / "test.csv", "--model", work / "model.json", "--out", work)
run("eval", "--input", work / "test.csv", "--model", work / "model.json", "--out", work)
run("export-plot", "--input", work / "test.csv", "--model", work / "model.json", "--group", "factors", "--out", work)

for name in ("scores.csv", "eval.csv", "confusion.csv"):
    print(f"\n--- {name}")
    print((work / name).read_text().strip())
print("\n--- plot_factors.csv (first rows)")
print("\n".join((work / "plot_factors.csv").read_text().splitlines()[:4]))
print("\noutputs in", work)
