"""Phantom persistence: 8-bit PNG sections, JSON sidecars, one manifest."""

from __future__ import annotations

import json
import os
from dataclasses import asdict
from typing import List, Optional

import numpy as np
from PIL import Image

from ..mesh import RigidTransform2D
from .generate import AreaTexture, PhantomConfig, PhantomDataset

AREA_NONE = 255  # area-map PNG code for pixels outside gray matter

_MANIFEST = "phantom-manifest.json"


def _config_to_json(config: PhantomConfig) -> dict:
    obj = asdict(config)
    obj["textures"] = [{"densities": list(t.densities), "widths": list(t.widths),
                        "radius": t.radius} for t in config.textures]
    return obj


def _config_from_json(obj: dict) -> PhantomConfig:
    obj = dict(obj)
    obj["textures"] = [AreaTexture(densities=tuple(t["densities"]),
                                   widths=tuple(t["widths"]), radius=t["radius"])
                       for t in obj["textures"]]
    return PhantomConfig(**obj)


def save_phantom(directory, dataset: PhantomDataset) -> str:
    """Write the dataset under `directory`; returns the manifest path."""
    if dataset.config.n_areas >= AREA_NONE:
        raise ValueError(f"area count must stay below {AREA_NONE} for the PNG coding")
    os.makedirs(directory, exist_ok=True)
    sections = []
    for k in range(dataset.n_sections):
        entry = {"index": k, "missing": bool(dataset.missing[k]),
                 "transform": dataset.transforms[k].to_json()}
        if not dataset.missing[k]:
            img8 = np.round(dataset.images[k] * 255.0).astype(np.uint8)
            area8 = dataset.area_maps[k].astype(np.int64)
            area8 = np.where(area8 < 0, AREA_NONE, area8).astype(np.uint8)
            names = {"image": f"section_{k:04d}.png",
                     "labels": f"labels_{k:04d}.png",
                     "areas": f"areas_{k:04d}.png"}
            Image.fromarray(img8, mode="L").save(os.path.join(directory, names["image"]))
            Image.fromarray(dataset.label_maps[k], mode="L").save(
                os.path.join(directory, names["labels"]))
            Image.fromarray(area8, mode="L").save(os.path.join(directory, names["areas"]))
            entry["files"] = names
        sections.append(entry)
    manifest = {
        "format": "cortexmap-phantom-v1",
        "config": _config_to_json(dataset.config),
        "sections": sections,
    }
    path = os.path.join(directory, _MANIFEST)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return path


def load_phantom(directory) -> PhantomDataset:
    path = os.path.join(directory, _MANIFEST)
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "cortexmap-phantom-v1":
        raise ValueError(f"{path}: not a phantom manifest")
    config = _config_from_json(manifest["config"])
    k = len(manifest["sections"])
    images: List[Optional[np.ndarray]] = [None] * k
    label_maps: List[Optional[np.ndarray]] = [None] * k
    area_maps: List[Optional[np.ndarray]] = [None] * k
    transforms = [RigidTransform2D.identity()] * k
    missing = np.zeros(k, dtype=bool)
    for entry in manifest["sections"]:
        i = entry["index"]
        transforms[i] = RigidTransform2D.from_json(entry["transform"])
        missing[i] = entry["missing"]
        if not entry["missing"]:
            names = entry["files"]
            img8 = np.asarray(Image.open(os.path.join(directory, names["image"])))
            images[i] = (img8.astype(np.float32) / 255.0)
            label_maps[i] = np.asarray(
                Image.open(os.path.join(directory, names["labels"]))).astype(np.uint8)
            area8 = np.asarray(Image.open(os.path.join(directory, names["areas"])))
            area16 = area8.astype(np.int16)
            area_maps[i] = np.where(area16 == AREA_NONE, np.int16(-1), area16)
    return PhantomDataset(config=config, images=images, label_maps=label_maps,
                          area_maps=area_maps, transforms=transforms,
                          missing=missing)
