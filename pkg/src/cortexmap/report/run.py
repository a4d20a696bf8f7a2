"""Machine-readable run reports (one score per split per model)."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from typing import Mapping, Optional

import numpy as np

from .evaluate import EvalResult


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def config_hash(config) -> str:
    """Stable content hash of any JSON-serializable configuration."""
    canon = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def summarize_scores(values) -> dict:
    """Mean and range over repeated runs (e.g. three seeds)."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("no scores to summarize")
    return {"mean": float(np.mean(values)), "min": min(values),
            "max": max(values), "n_runs": len(values)}


def run_report(models: Mapping[str, dict], config,
               path: Optional[str] = None) -> dict:
    """Assemble results for one or more models into a deterministic report.

    Each entry of `models` maps a model name to a dict with optional keys
    "seed", "history" (per-epoch records) and "evals" (split -> EvalResult).
    No timestamps: identical runs produce byte-identical files.
    """
    if not models:
        raise ValueError("report needs at least one model entry")
    out_models = {}
    for name, entry in models.items():
        evals = entry.get("evals", {})
        row = {
            "seed": entry.get("seed"),
            "history": _jsonable(entry.get("history", [])),
            "splits": {split: (res.to_json() if isinstance(res, EvalResult)
                               else _jsonable(res))
                       for split, res in evals.items()},
        }
        out_models[name] = row
    report = {
        "format": "cortexmap-report-v1",
        "config_hash": config_hash(config),
        "config": _jsonable(config),
        "models": out_models,
    }
    if path is not None:
        with open(path, "w") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return report
