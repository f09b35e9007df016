"""Python bindings for the relhal toolkit."""

import json as _json

from ._relhal import (
    ParseError,
    ToyModel,
    TransportError,
    ValidationError,
    calibrate_scores,
    decode_step,
    decode_trace,
    detect,
    entropy,
    halr,
    max_entropy,
    r_score,
    run_cli,
    softmax,
)
from . import _relhal

__all__ = [
    "ParseError",
    "ToyModel",
    "TransportError",
    "ValidationError",
    "build_dataset",
    "calibrate_scores",
    "decode_step",
    "decode_trace",
    "detect",
    "entropy",
    "evaluate",
    "halr",
    "max_entropy",
    "r_score",
    "run_cli",
    "softmax",
]


def build_dataset(corpus, rules="", lexicon="", synonyms="", seed=0):
    """Returns (questions, manifest) for a scene-graph corpus file."""
    items, manifest = _relhal.build_dataset(str(corpus), str(rules), str(lexicon), str(synonyms), seed)
    return [_json.loads(line) for line in items.splitlines() if line], _json.loads(manifest)


def evaluate(questions, responses, synonyms=""):
    """Scores a responses file against a question set; returns the report dict."""
    return _json.loads(_relhal.evaluate(str(questions), str(responses), str(synonyms)))
