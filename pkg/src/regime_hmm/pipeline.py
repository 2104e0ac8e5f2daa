"""End-to-end batch pipeline: factor-group regime models, stacked posteriors
and the LSTM head, plus the bundle that persists them."""

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import data, labeling, lstm_head, persistence, trainers
from .boosted_trees import BoostParams
from .errors import InsufficientDataError, MissingColumnError, NonFiniteError, RegimeError

log = logging.getLogger(__name__)

# grouping metadata only; group contents come from the config
FACTOR_TAXONOMY = ("market", "quality", "income_risk", "value", "mood", "index", "momentum", "rise")


@dataclass
class LstmConfig:
    epochs: int = 300
    learning_rate: float = 0.05
    hidden_dim: int = 16
    clip_norm: float = 5.0


@dataclass
class PipelineConfig:
    seed: int = 0
    groups: dict = field(default_factory=lambda: {"market": list(data.MARKET_FEATURES)})
    barrier: labeling.BarrierConfig = field(default_factory=labeling.BarrierConfig)
    fit: trainers.FitConfig = field(default_factory=trainers.FitConfig)
    group_fit: dict = field(default_factory=dict)
    lstm: LstmConfig = field(default_factory=LstmConfig)
    derive_features: bool = True
    score_features: list = None
    synth: dict = None

    def __post_init__(self):
        if not self.groups:
            raise RegimeError("at least one factor group is required")
        for name, cols in self.groups.items():
            if not cols:
                raise RegimeError("factor group has no columns", group=name)

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw or {})
        fit = dict(raw.pop("fit", {}) or {})
        boost = fit.pop("boost", None)
        fit_cfg = trainers.FitConfig(**fit, boost=BoostParams(**(boost or {})))
        return cls(
            seed=int(raw.pop("seed", 0)),
            groups=dict(raw.pop("groups", None) or {"market": list(data.MARKET_FEATURES)}),
            barrier=labeling.BarrierConfig(**(raw.pop("barrier", None) or {})),
            fit=fit_cfg,
            group_fit=dict(raw.pop("group_fit", None) or {}),
            lstm=LstmConfig(**(raw.pop("lstm", None) or {})),
            derive_features=bool(raw.pop("derive_features", True)),
            score_features=raw.pop("score_features", None),
            synth=raw.pop("synth", None),
            **_reject_unknown(raw),
        )

    def to_dict(self):
        return asdict(self)

    def group_config(self, index, name, emission=None):
        """Fit settings for one group: base config, overrides, derived seed."""
        base = self.fit
        override = dict(self.group_fit.get(name, {}))
        boost_override = override.pop("boost", None)
        seed = self.seed + index
        boost = replace(base.boost, seed=seed, **(boost_override or {}))
        cfg = replace(base, seed=seed, boost=boost, **override)
        if emission is not None:
            cfg = replace(cfg, emission=emission)
        return cfg


def _reject_unknown(raw):
    if raw:
        raise RegimeError("unknown config keys", keys=sorted(raw))
    return {}


@dataclass
class GroupModel:
    name: str
    columns: list
    model: trainers.RegimeModel


@dataclass
class ModelBundle:
    config: PipelineConfig
    groups: list
    lstm: lstm_head.LstmParams = None
    lstm_info: dict = None
    schema_version: int = persistence.SCHEMA_VERSION

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "config": self.config.to_dict(),
            "groups": [
                {"name": g.name, "columns": list(g.columns), "model": persistence.regime_model_to_dict(g.model)}
                for g in self.groups
            ],
            "lstm": None if self.lstm is None else persistence.lstm_to_dict(self.lstm),
            "lstm_info": self.lstm_info,
        }

    @classmethod
    def from_dict(cls, doc):
        groups = [
            GroupModel(g["name"], list(g["columns"]), persistence.regime_model_from_dict(g["model"]))
            for g in doc["groups"]
        ]
        if not groups:
            raise RegimeError("model bundle holds no factor-group models")
        lstm = None if doc.get("lstm") is None else persistence.lstm_from_dict(doc["lstm"])
        return cls(
            PipelineConfig.from_dict(doc["config"]), groups, lstm, doc.get("lstm_info"), doc["schema_version"]
        )

    def save(self, path):
        persistence.save_json(path, self.to_dict())

    @classmethod
    def load(cls, path):
        return cls.from_dict(persistence.load_json(path))


def prepare(series, config):
    """Append derived market factors when the price columns are available."""
    if config.derive_features and all(c in series for c in data.PRICE_COLUMNS):
        return data.derive_market_features(series)
    return series


def _group_columns(config):
    return [c for cols in config.groups.values() for c in cols]


def _require_columns(series, columns):
    missing = [c for c in columns if c not in series]
    if missing:
        raise MissingColumnError("factor-group columns not in input", columns=missing)


def usable_start(series, columns):
    """First bar at which every listed column has left its leading NaN run."""
    start = 0
    for name in columns:
        finite = np.flatnonzero(np.isfinite(series[name]))
        if finite.size == 0:
            raise NonFiniteError("column has no finite values", column=name)
        start = max(start, int(finite[0]))
    return start


def group_matrix(series, columns, start, allow_missing):
    obs = series.select(columns)[start:]
    if not allow_missing and np.isnan(obs).any():
        row, col = np.argwhere(np.isnan(obs))[0]
        raise NonFiniteError(
            "missing cell in a mixture-emission group", row=int(row + start), column=columns[col]
        )
    return obs


def label_array(series, config):
    """Triple-barrier labels as floats (NaN where undefined)."""
    return labeling.label_series(series, config.barrier).as_float()


def fit_groups(series, config, emission=None):
    """Fit one regime model per factor group on the usable bars."""
    series = prepare(series, config)
    _require_columns(series, _group_columns(config))
    start = usable_start(series, _group_columns(config))
    groups = []
    for index, (name, cols) in enumerate(config.groups.items()):
        cfg = config.group_config(index, name, emission)
        obs = group_matrix(series, cols, start, cfg.emission == trainers.BOOSTED)
        log.info("fitting group %s (%s, %d bars, %d columns)", name, cfg.emission, obs.shape[0], obs.shape[1])
        groups.append(GroupModel(name, list(cols), trainers.fit(obs, cfg)))
    if emission is not None:
        config = replace(config, fit=replace(config.fit, emission=emission))
    return ModelBundle(config, groups)


def group_posteriors(bundle, series):
    """``(start, posteriors)`` of every group model on ``series``."""
    series = prepare(series, bundle.config)
    columns = [c for g in bundle.groups for c in g.columns]
    _require_columns(series, columns)
    start = usable_start(series, columns)
    posts = []
    for g in bundle.groups:
        obs = group_matrix(series, g.columns, start, g.model.kind == trainers.BOOSTED)
        posts.append(trainers.state_proba(g.model, obs))
    return start, posts


def decode_groups(bundle, series):
    """``(start, [(name, StatePath, log_likelihood, posterior)])``."""
    start, posts = group_posteriors(bundle, series)
    series = prepare(series, bundle.config)
    out = []
    for g, post in zip(bundle.groups, posts):
        obs = group_matrix(series, g.columns, start, g.model.kind == trainers.BOOSTED)
        out.append((g.name, trainers.decode(g.model, obs), post.log_likelihood, post))
    return start, out


def stacked_input(bundle, series):
    start, posts = group_posteriors(bundle, series)
    return start, lstm_head.stack_state_probas(posts)


def train_lstm(bundle, series):
    """Fit the LSTM head on stacked group posteriors and return a new bundle."""
    series = prepare(series, bundle.config)
    start, X = stacked_input(bundle, series)
    Y = label_array(series, bundle.config)[start:]
    if not np.isfinite(Y).any():
        raise InsufficientDataError("no defined labels in the training window")
    lc = bundle.config.lstm
    fit = lstm_head.fit_lstm(
        X, Y, epochs=lc.epochs, learning_rate=lc.learning_rate, hidden_dim=lc.hidden_dim,
        seed=bundle.config.seed, clip_norm=lc.clip_norm,
    )
    info = {
        "train_accuracy": fit.train_accuracy,
        "best_epoch": fit.best_epoch,
        "best_loss": fit.loss_history[fit.best_epoch],
        "input_dim": int(X.shape[0]),
    }
    return replace(bundle, lstm=fit.params, lstm_info=info)


def predict(bundle, series):
    """``(start, probs)`` with ``probs`` of shape ``3 x (T - start)``."""
    if bundle.lstm is None:
        raise RegimeError("model bundle has no LSTM head; run train-lstm first")
    start, X = stacked_input(bundle, series)
    return start, lstm_head.lstm_forward(bundle.lstm, X)


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray
    n_labelled: int
    majority_baseline: float


def evaluate(bundle, series):
    """Per-bar accuracy of the LSTM head on a held-out series."""
    series = prepare(series, bundle.config)
    start, X = stacked_input(bundle, series)
    Y = label_array(series, bundle.config)[start:]
    acc, confusion = lstm_head.evaluate(bundle.lstm, X, Y)
    defined = Y[np.isfinite(Y)]
    baseline = max(np.mean(defined == v) for v in (-1, 0, 1))
    return EvalReport(acc, confusion, int(defined.size), float(baseline))


def synth_from_config(settings, seed):
    """Generate a synthetic series from the ``synth`` section of a config."""
    settings = dict(settings)
    n_states = int(settings.pop("n_states"))
    return data.synth(
        n_states,
        int(settings.pop("T")),
        settings.pop("means"),
        settings.pop("variances"),
        settings.pop("trans"),
        settings.pop("pi", [1.0 / n_states] * n_states),
        seed=int(settings.pop("seed", seed)),
        **settings,
    )
