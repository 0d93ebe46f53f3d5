"""JSON model artifacts.

Floats are written with 17 significant digits so a reloaded model scores
bit-identically.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from .forest import ForestModel, Tree
from .linear import LinearModel

FORMAT_VERSION = 1

Model = Union[LinearModel, ForestModel]


def _g17(x: float) -> str:
    return format(float(x), ".17g")


def _encode(doc) -> str:
    """json.dumps, but with every float rendered via ``%.17g``."""
    floats: list[float] = []

    def mark(o):
        if isinstance(o, float):
            floats.append(o)
            return f"\x00F{len(floats) - 1}\x00"
        if isinstance(o, dict):
            return {k: mark(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [mark(v) for v in o]
        return o

    text = json.dumps(mark(doc), indent=1)
    for i, f in enumerate(floats):
        text = text.replace(f'"\\u0000F{i}\\u0000"', _g17(f), 1)
    return text


def model_to_dict(model: Model) -> dict:
    doc = _core_dict(model)
    if model.extra.get("manifest"):
        doc["manifest"] = model.extra["manifest"]
    return doc


def _core_dict(model: Model) -> dict:
    if isinstance(model, LinearModel):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "linear",
            "feature_ids": list(model.feature_ids),
            "weights": [float(w) for w in model.weights],
            "bias": float(model.bias),
            "loss": model.loss,
            "penalty": model.penalty,
            "C": float(model.C),
            "seed": model.seed,
            "converged": model.converged,
            "n_iter": model.n_iter,
            "space_digest": model.space_digest,
            "train_digest": model.train_digest,
        }
    return {
        "format_version": FORMAT_VERSION,
        "kind": "forest",
        "feature_ids": list(model.feature_ids),
        "n_features": model.n_features,
        "trees": [t.to_dict() for t in model.trees],
        "seed": model.seed,
        "space_digest": model.space_digest,
        "train_digest": model.train_digest,
    }


def model_from_dict(d: dict) -> Model:
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {d.get('format_version')!r}")
    if d["kind"] == "linear":
        return LinearModel(
            weights=np.asarray(d["weights"], dtype=float), bias=float(d["bias"]),
            loss=d["loss"], penalty=d["penalty"], C=float(d["C"]),
            space_digest=d.get("space_digest", ""),
            feature_ids=tuple(d.get("feature_ids", ())),
            converged=d.get("converged", True), n_iter=d.get("n_iter", 0),
            seed=d.get("seed", 0), train_digest=d.get("train_digest", ""),
            extra=_extra(d),
        )
    if d["kind"] == "forest":
        return ForestModel(
            trees=[Tree.from_dict(t) for t in d["trees"]], seed=d.get("seed", 0),
            space_digest=d.get("space_digest", ""),
            feature_ids=tuple(d.get("feature_ids", ())),
            n_features=int(d["n_features"]), train_digest=d.get("train_digest", ""),
            extra=_extra(d),
        )
    raise ValueError(f"unknown model kind {d['kind']!r}")


def _extra(d: dict) -> dict:
    return {"manifest": d["manifest"]} if "manifest" in d else {}


def dumps_model(model: Model) -> str:
    return _encode(model_to_dict(model))


def loads_model(text: str) -> Model:
    return model_from_dict(json.loads(text))


def save_model(model: Model, path) -> None:
    Path(path).write_text(dumps_model(model) + "\n", encoding="utf-8")


def load_model(path) -> Model:
    return loads_model(Path(path).read_text(encoding="utf-8"))
