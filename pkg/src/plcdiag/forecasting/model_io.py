"""Fitted-predictor serialization: one JSON document per model.

The document records a format marker, a schema version, the predictor kind,
its hyperparameters, and the fitted state. Loading reconstructs the
predictor through the kind registry, so any registered predictor
round-trips without model-specific code here.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ConfigError, ModelIOError, NotFittedError
from .base import PREDICTOR_REGISTRY, Predictor, make_predictor

FORMAT = "plcdiag-model"
VERSION = 1


def save_model(predictor: Predictor, path) -> Path:
    """Write a fitted predictor to ``path`` and return the path."""
    if not predictor.fitted:
        raise NotFittedError("only fitted predictors can be saved")
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "kind": predictor.kind,
        "hyperparams": predictor.hyperparams(),
        "state": predictor.state(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def load_model(path) -> Predictor:
    """Reconstruct a fitted predictor saved by :func:`save_model`."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ModelIOError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelIOError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelIOError(f"model file {path} does not hold a JSON object")
    if doc.get("format") != FORMAT:
        raise ModelIOError(
            f"model file {path} has format {doc.get('format')!r}, expected {FORMAT!r}"
        )
    if doc.get("version") != VERSION:
        raise ModelIOError(
            f"model file {path} has version {doc.get('version')!r}, "
            f"expected {VERSION}"
        )
    kind = doc.get("kind")
    if kind not in PREDICTOR_REGISTRY:
        known = ", ".join(sorted(PREDICTOR_REGISTRY))
        raise ModelIOError(
            f"model file {path} names unknown predictor kind {kind!r} "
            f"(known: {known})"
        )
    hyperparams = doc.get("hyperparams")
    state = doc.get("state")
    if not isinstance(hyperparams, dict) or not isinstance(state, dict):
        raise ModelIOError(
            f"model file {path} is missing its hyperparams or state section"
        )
    try:
        model = make_predictor(kind, **hyperparams)
        model._restore(state)
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        raise ModelIOError(f"model file {path} has a corrupt payload: {exc}") from exc
    model._fitted = True
    return model
