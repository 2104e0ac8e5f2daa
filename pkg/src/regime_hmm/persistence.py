"""Versioned JSON documents for fitted models.

Floats are written with Python's shortest round-trip repr, so a saved model
reloads bit-for-bit and identical fits produce byte-identical files.
"""

import json

import numpy as np

from . import boosted_trees as bt
from .errors import SchemaVersionError
from .gmm_emission import MixtureEmission
from .hmm_core import ChainParams
from .lstm_head import LstmParams
from .trainers import BoostedEmission, FitTrace, RegimeModel

SCHEMA_VERSION = 1


def regime_model_to_dict(model):
    emission = model.emission
    if isinstance(emission, BoostedEmission):
        emis = {
            "kind": "boosted",
            "state_priors": emission.state_priors.tolist(),
            "ensemble": bt.ensemble_to_dict(emission.ensemble),
        }
    else:
        emis = {
            "kind": "mixture",
            "weights": emission.weights.tolist(),
            "means": emission.means.tolist(),
            "variances": emission.variances.tolist(),
            "var_floor": emission.var_floor,
        }
    return {
        "pi": model.chain.pi.tolist(),
        "trans": model.chain.trans.tolist(),
        "emission": emis,
        "trace": {"log_likelihood": list(model.trace.log_likelihood), "converged": model.trace.converged},
        "log_likelihood": model.log_likelihood,
    }


def regime_model_from_dict(data):
    emis = data["emission"]
    if emis["kind"] == "boosted":
        emission = BoostedEmission(bt.ensemble_from_dict(emis["ensemble"]), np.asarray(emis["state_priors"]))
    else:
        emission = MixtureEmission(
            np.asarray(emis["weights"]), np.asarray(emis["means"]), np.asarray(emis["variances"]),
            emis["var_floor"],
        )
    trace = FitTrace(list(data["trace"]["log_likelihood"]), bool(data["trace"]["converged"]))
    chain = ChainParams(np.asarray(data["pi"]), np.asarray(data["trans"]))
    return RegimeModel(chain, emission, trace, float(data["log_likelihood"]))


def lstm_to_dict(params):
    return params.to_dict()


def lstm_from_dict(data):
    return LstmParams.from_dict(data)


def dumps(document):
    return json.dumps(document, indent=1, allow_nan=False) + "\n"


def save_json(path, document):
    with open(path, "w") as fh:
        fh.write(dumps(document))


def load_json(path, expect_version=SCHEMA_VERSION):
    with open(path) as fh:
        document = json.load(fh)
    version = document.get("schema_version")
    if version != expect_version:
        raise SchemaVersionError(
            "unsupported model file schema", expected=expect_version, found=version, path=str(path)
        )
    return document
