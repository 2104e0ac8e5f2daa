"""Batch command line front end.

Every command reads CSV/JSON inputs, writes its outputs into ``--out`` and
exits 0. On failure a JSON error record goes to stderr and the exit code is
2 for input/data errors, 1 for anything unexpected. Log verbosity follows
the ``REGIME_HMM_LOG`` environment variable (e.g. ``INFO``, ``DEBUG``).
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data, feature_scoring, labeling, persistence, pipeline, trainers
from .errors import RegimeError

log = logging.getLogger("regime_hmm")

EMISSION_CHOICES = {"gmm": trainers.MIXTURE, "boosted": trainers.BOOSTED}
MODEL_FILE = "model.json"
LABEL_NAMES = ("-1", "0", "+1")


def _load_config(args):
    raw = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            raw = json.load(fh)
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    return pipeline.PipelineConfig.from_dict(raw)


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stamps(series, start=0):
    return [data.format_timestamp(s) for s in series.timestamps[start:]]


def cmd_synth(args):
    config = _load_config(args)
    if not config.synth:
        raise RegimeError("config has no 'synth' section")
    series = pipeline.synth_from_config(config.synth, config.seed)
    path = _out_dir(args) / "bars.csv"
    data.write_bars(path, series)
    return {"bars": str(path), "rows": len(series)}


def cmd_label(args):
    config = _load_config(args)
    series = data.read_bars(args.input)
    labels = labeling.label_series(series, config.barrier)
    path = _out_dir(args) / "labels.csv"
    rows = (
        [
            stamp,
            int(labels.labels[t]) if labels.defined[t] else "",
            int(labels.touch_index[t]) if labels.defined[t] else "",
            labels.barrier_hit[t],
        ]
        for t, stamp in enumerate(_stamps(series))
    )
    data.write_rows(path, ["date", "label", "touch_index", "barrier_hit"], rows)
    return {"labels": str(path), "defined": int(labels.defined.sum())}


def cmd_score_features(args):
    config = _load_config(args)
    series = pipeline.prepare(data.read_bars(args.input), config)
    names = args.features.split(",") if args.features else config.score_features
    if not names:
        names = [c for c in config.groups[next(iter(config.groups))]]
    fit_cfg = config.group_config(0, "score", trainers.MIXTURE)
    ranking, failures = feature_scoring.rank_features(series, names, config.barrier, fit_cfg)
    n = fit_cfg.n_states
    header = ["rank", "feature", "score"]
    for i in range(n):
        header += [f"acc_{i}", f"entropy_{i}", f"weight_{i}"]
    rows = []
    for rank, (name, sc) in enumerate(ranking, start=1):
        row = [rank, name, sc.total]
        for i in range(n):
            row += [float(sc.acc[i]), float(sc.entropy[i]), float(sc.weight[i])]
        rows.append(row)
    path = _out_dir(args) / "scores.csv"
    data.write_rows(path, header, rows)
    return {"scores": str(path), "ranked": len(ranking), "failed": failures}


def cmd_train(args):
    config = _load_config(args)
    series = data.read_bars(args.input)
    emission = EMISSION_CHOICES[args.emission] if args.emission else None
    bundle = pipeline.fit_groups(series, config, emission)
    path = _out_dir(args) / MODEL_FILE
    bundle.save(path)
    return {
        "model": str(path),
        "groups": {g.name: g.model.log_likelihood for g in bundle.groups},
    }


def cmd_decode(args):
    bundle = pipeline.ModelBundle.load(args.model)
    series = data.read_bars(args.input)
    start, decoded = pipeline.decode_groups(bundle, series)
    out = _out_dir(args)
    header = ["date"] + [f"state_{name}" for name, *_ in decoded]
    cols = [path.states for _, path, _, _ in decoded]
    rows = ([stamp] + [int(c[t]) for c in cols] for t, stamp in enumerate(_stamps(series, start)))
    data.write_rows(out / "decode.csv", header, rows)
    summary = {
        "start_row": start,
        "groups": {name: {"log_likelihood": ll, "path_log_score": path.path_log_score} for name, path, ll, _ in decoded},
    }
    (out / "decode_summary.json").write_text(persistence.dumps(summary))
    return summary


def cmd_train_lstm(args):
    bundle = pipeline.ModelBundle.load(args.model)
    if args.config or args.seed is not None:
        bundle.config = _merge_lstm_config(bundle.config, args)
    series = data.read_bars(args.input)
    bundle = pipeline.train_lstm(bundle, series)
    path = _out_dir(args) / MODEL_FILE
    bundle.save(path)
    return {"model": str(path), **bundle.lstm_info}


def _merge_lstm_config(config, args):
    override = _load_config(args)
    config.lstm = override.lstm
    config.seed = override.seed if args.seed is not None else config.seed
    return config


def cmd_predict(args):
    bundle = pipeline.ModelBundle.load(args.model)
    series = data.read_bars(args.input)
    start, probs = pipeline.predict(bundle, series)
    pred = np.argmax(probs, axis=0) - 1
    rows = (
        [stamp, float(probs[0, t]), float(probs[1, t]), float(probs[2, t]), int(pred[t])]
        for t, stamp in enumerate(_stamps(series, start))
    )
    path = _out_dir(args) / "predictions.csv"
    data.write_rows(path, ["date", "p_down", "p_flat", "p_up", "predicted"], rows)
    return {"predictions": str(path), "rows": int(probs.shape[1])}


def cmd_eval(args):
    bundle = pipeline.ModelBundle.load(args.model)
    series = data.read_bars(args.input)
    report = pipeline.evaluate(bundle, series)
    out = _out_dir(args)
    data.write_rows(
        out / "eval.csv",
        ["accuracy", "majority_baseline", "n_labelled"],
        [[report.accuracy, report.majority_baseline, report.n_labelled]],
    )
    data.write_rows(
        out / "confusion.csv",
        ["true\\pred"] + list(LABEL_NAMES),
        ([LABEL_NAMES[i]] + [int(v) for v in report.confusion[i]] for i in range(3)),
    )
    return {"accuracy": report.accuracy, "majority_baseline": report.majority_baseline, "n_labelled": report.n_labelled}


def cmd_export_plot(args):
    bundle = pipeline.ModelBundle.load(args.model)
    series = pipeline.prepare(data.read_bars(args.input), bundle.config)
    start, decoded = pipeline.decode_groups(bundle, series)
    labels = pipeline.label_array(series, bundle.config)[start:]
    close = series.close[start:]
    out = _out_dir(args)
    names = [name for name, *_ in decoded]
    if args.group:
        if args.group not in names:
            raise RegimeError("unknown factor group", group=args.group, available=names)
        decoded = [d for d in decoded if d[0] == args.group]
    written = []
    for name, path, _, post in decoded:
        n = post.gamma.shape[0]
        header = ["date", "close", "state"] + [f"p_state_{i}" for i in range(n)] + ["label"]
        rows = (
            [stamp, float(close[t]), int(path.states[t])]
            + [float(post.gamma[i, t]) for i in range(n)]
            + ["" if np.isnan(labels[t]) else int(labels[t])]
            for t, stamp in enumerate(_stamps(series, start))
        )
        target = out / f"plot_{name}.csv"
        data.write_rows(target, header, rows)
        written.append(str(target))
    return {"files": written}


def build_parser():
    parser = argparse.ArgumentParser(prog="regime-hmm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, needs_input=True, needs_model=False):
        p = sub.add_parser(name)
        p.set_defaults(func=func)
        if needs_input:
            p.add_argument("--input", required=True, help="input CSV")
        if needs_model:
            p.add_argument("--model", required=True, help="model bundle JSON")
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=True, help="output directory")
        return p

    add("synth", cmd_synth, needs_input=False)
    add("label", cmd_label)
    add("score-features", cmd_score_features).add_argument("--features", help="comma-separated column names")
    add("train", cmd_train).add_argument("--emission", choices=sorted(EMISSION_CHOICES))
    add("decode", cmd_decode, needs_model=True)
    add("train-lstm", cmd_train_lstm, needs_model=True)
    add("predict", cmd_predict, needs_model=True)
    add("eval", cmd_eval, needs_model=True)
    add("export-plot", cmd_export_plot, needs_model=True).add_argument("--group", help="factor group to export")
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("REGIME_HMM_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
    except RegimeError as exc:
        sys.stderr.write(json.dumps(exc.to_record(), default=str) + "\n")
        return 2
    except (OSError, ValueError, KeyError, TypeError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "details": {}}
        sys.stderr.write(json.dumps(record, default=str) + "\n")
        return 2 if isinstance(exc, (OSError, ValueError, KeyError)) else 1
    sys.stdout.write(json.dumps(result, default=str) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
