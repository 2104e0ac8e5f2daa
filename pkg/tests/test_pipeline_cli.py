import json

import numpy as np
import pytest

from regime_hmm import cli, data, persistence, pipeline, trainers
from regime_hmm.errors import MissingColumnError, NonFiniteError, RegimeError, SchemaVersionError

SMALL = {
    "seed": 3,
    "synth": {
        "n_states": 3, "T": 500,
        "means": [[-1.0, 0.5], [0.0, -0.5], [1.0, 0.5]],
        "variances": [[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]],
        "trans": [[0.9, 0.05, 0.05], [0.05, 0.9, 0.05], [0.05, 0.05, 0.9]],
    },
    "groups": {"factors": ["f0", "f1"], "market": ["ret5", "log_hl"]},
    "barrier": {"horizon": 5, "vol_span": 20},
    "fit": {"n_states": 3, "max_iters": 5, "n_components": 1, "boost": {"n_rounds": 5}},
    "lstm": {"epochs": 15, "hidden_dim": 4, "learning_rate": 0.5},
}


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(SMALL))
    assert run("synth", "--config", cfg, "--out", root) == 0
    series = data.read_bars(root / "bars.csv")
    data.write_bars(root / "train.csv", series.slice(0, 350))
    data.write_bars(root / "test.csv", series.slice(350))
    assert run("train", "--input", root / "train.csv", "--config", cfg, "--emission", "boosted",
               "--out", root / "model") == 0
    assert run("train-lstm", "--input", root / "train.csv", "--model", root / "model" / "model.json",
               "--out", root / "full") == 0
    return root


def test_train_then_decode_reproduces_likelihood(workspace, capsys):
    model = workspace / "model" / "model.json"
    capsys.readouterr()
    assert run("decode", "--input", workspace / "train.csv", "--model", model, "--out", workspace / "dec") == 0
    summary = json.loads(capsys.readouterr().out)
    stored = persistence.load_json(model)
    for group in stored["groups"]:
        final = group["model"]["trace"]["log_likelihood"]
        best = group["model"]["log_likelihood"]
        assert best == max(final)
        assert summary["groups"][group["name"]]["log_likelihood"] == pytest.approx(best, abs=1e-9)
    lines = (workspace / "dec" / "decode.csv").read_text().splitlines()
    assert lines[0] == "date,state_factors,state_market"
    assert len(lines) - 1 == 350 - summary["start_row"]


def test_mixture_decode_round_trip(tmp_path):
    series = pipeline.synth_from_config(SMALL["synth"], 0)
    config = pipeline.PipelineConfig.from_dict({**SMALL, "groups": {"factors": ["f0", "f1"]}})
    bundle = pipeline.fit_groups(series, config, trainers.MIXTURE)
    bundle.save(tmp_path / "m.json")
    again = pipeline.ModelBundle.load(tmp_path / "m.json")
    _, decoded = pipeline.decode_groups(again, series)
    assert decoded[0][2] == pytest.approx(bundle.groups[0].model.trace.log_likelihood[-1], abs=1e-9)


def test_save_load_is_bit_exact(workspace, tmp_path):
    path = workspace / "full" / "model.json"
    bundle = pipeline.ModelBundle.load(path)
    bundle.save(tmp_path / "copy.json")
    assert (tmp_path / "copy.json").read_bytes() == path.read_bytes()
    series = data.read_bars(workspace / "test.csv")
    _, probs_a = pipeline.predict(bundle, series)
    _, probs_b = pipeline.predict(pipeline.ModelBundle.load(tmp_path / "copy.json"), series)
    np.testing.assert_array_equal(probs_a, probs_b)
    for (_, pa, la, _), (_, pb, lb, _) in zip(pipeline.decode_groups(bundle, series)[1],
                                              pipeline.decode_groups(pipeline.ModelBundle.load(path), series)[1]):
        np.testing.assert_array_equal(pa.states, pb.states)
        assert la == lb


def test_permuted_columns_predict_identically(workspace):
    series = data.read_bars(workspace / "test.csv")
    names = list(series.columns)[::-1]
    shuffled = workspace / "test_shuffled.csv"
    rows = ([data.format_timestamp(series.timestamps[t])] + [series[n][t] for n in names] for t in range(len(series)))
    data.write_rows(shuffled, ["date"] + names, rows)
    model = workspace / "full" / "model.json"
    assert run("predict", "--input", workspace / "test.csv", "--model", model, "--out", workspace / "p1") == 0
    assert run("predict", "--input", shuffled, "--model", model, "--out", workspace / "p2") == 0
    assert (workspace / "p1" / "predictions.csv").read_bytes() == (workspace / "p2" / "predictions.csv").read_bytes()


def test_every_command_writes_its_outputs(workspace):
    model = workspace / "full" / "model.json"
    test = workspace / "test.csv"
    out = workspace / "all"
    assert run("label", "--input", test, "--config", workspace / "config.json", "--out", out) == 0
    assert run("score-features", "--input", workspace / "train.csv", "--config", workspace / "config.json",
               "--features", "f0,f1,log_hl", "--out", out) == 0
    assert run("eval", "--input", test, "--model", model, "--out", out) == 0
    assert run("export-plot", "--input", test, "--model", model, "--group", "factors", "--out", out) == 0
    assert (out / "labels.csv").read_text().startswith("date,label,touch_index,barrier_hit\n")
    scores = (out / "scores.csv").read_text().splitlines()
    assert len(scores) == 4 and scores[0].startswith("rank,feature,score,acc_0")
    evaluation = (out / "eval.csv").read_text().splitlines()
    assert evaluation[0] == "accuracy,majority_baseline,n_labelled"
    confusion = (out / "confusion.csv").read_text().splitlines()
    assert len(confusion) == 4
    n_labelled = int(evaluation[1].split(",")[2])
    assert sum(int(v) for line in confusion[1:] for v in line.split(",")[1:]) == n_labelled
    plot = (out / "plot_factors.csv").read_text().splitlines()
    assert plot[0] == "date,close,state,p_state_0,p_state_1,p_state_2,label"
    assert not (out / "plot_market.csv").exists()


def test_pipeline_is_byte_deterministic(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(SMALL))
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run("synth", "--config", cfg, "--out", out) == 0
        assert run("train", "--input", out / "bars.csv", "--config", cfg, "--emission", "boosted", "--out", out) == 0
        assert run("train-lstm", "--input", out / "bars.csv", "--model", out / "model.json", "--out", out) == 0
        assert run("eval", "--input", out / "bars.csv", "--model", out / "model.json", "--out", out) == 0
        outputs.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
    assert outputs[0] == outputs[1]


def test_seed_flag_changes_the_fit(tmp_path, workspace):
    cfg = workspace / "config.json"
    a = run("train", "--input", workspace / "train.csv", "--config", cfg, "--seed", 1, "--out", tmp_path / "a")
    b = run("train", "--input", workspace / "train.csv", "--config", cfg, "--seed", 2, "--out", tmp_path / "b")
    assert a == b == 0
    assert (tmp_path / "a" / "model.json").read_bytes() != (tmp_path / "b" / "model.json").read_bytes()


def test_error_records(workspace, tmp_path, capsys):
    model = workspace / "full" / "model.json"
    doc = json.loads(model.read_text())
    doc["schema_version"] = 99
    stale = tmp_path / "stale.json"
    stale.write_text(json.dumps(doc))
    capsys.readouterr()
    assert run("predict", "--input", workspace / "test.csv", "--model", stale, "--out", tmp_path) == 2
    record = json.loads(capsys.readouterr().err)
    assert record["error"] == SchemaVersionError.code

    series = data.read_bars(workspace / "test.csv")
    cols = {k: v for k, v in series.columns.items() if k != "f1"}
    data.write_bars(tmp_path / "nof1.csv", data.BarSeries(series.timestamps, cols))
    assert run("predict", "--input", tmp_path / "nof1.csv", "--model", model, "--out", tmp_path) == 2
    record = json.loads(capsys.readouterr().err)
    assert record["error"] == MissingColumnError.code and record["details"]["columns"] == ["f1"]

    bad = tmp_path / "bad.csv"
    header = (workspace / "test.csv").read_text().splitlines()[0]
    bad.write_text(header + "\n2030-01-01" + ",abc" * len(series.columns) + "\n")
    assert run("label", "--input", bad, "--out", tmp_path) == 2
    record = json.loads(capsys.readouterr().err)
    assert record["error"] == NonFiniteError.code and record["details"]["row"] == 0

    assert run("decode", "--input", workspace / "test.csv", "--model", tmp_path / "missing.json", "--out", tmp_path) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "FileNotFoundError"


def test_mixture_group_rejects_missing_cells():
    series = pipeline.synth_from_config(SMALL["synth"], 0)
    f0 = series["f0"].copy()
    f0[40] = np.nan
    config = pipeline.PipelineConfig.from_dict({**SMALL, "groups": {"factors": ["f0", "f1"]}})
    with pytest.raises(NonFiniteError) as err:
        pipeline.fit_groups(series.with_columns(f0=f0), config, trainers.MIXTURE)
    assert err.value.details == {"row": 40, "column": "f0"}
    boosted = pipeline.fit_groups(series.with_columns(f0=f0), config, trainers.BOOSTED)
    assert boosted.groups[0].model.kind == trainers.BOOSTED


def test_config_validation():
    with pytest.raises(RegimeError):
        pipeline.PipelineConfig.from_dict({"bogus": 1})
    with pytest.raises(RegimeError):
        pipeline.PipelineConfig.from_dict({"groups": {"empty": []}})
    cfg = pipeline.PipelineConfig.from_dict(SMALL)
    assert pipeline.PipelineConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.group_config(1, "market").seed == 4
    assert cfg.group_config(1, "market").boost.seed == 4
    assert list(pipeline.PipelineConfig().groups) == ["market"]
