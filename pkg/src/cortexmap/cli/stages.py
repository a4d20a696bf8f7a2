"""Pipeline stages with content-hashed artifacts.

Every stage writes its outputs into `<output_dir>/<stage>/` next to a
manifest that records the hash of the stage's configuration slice, of every
input file it consumed and of every file it produced. A rerun with matching
hashes is a no-op; a missing or modified upstream artifact is refused with
the expected and found hashes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import asdict
from typing import Callable, Dict, List

import numpy as np

from ..autodiff import load_checkpoint, save_checkpoint
from ..encoder import build_encoder, embed_nodes, load_features, save_features, train_encoder
from ..gnn import GnnConfig, PriorFusionConfig, build_classifier, evaluate, predict_logits, train_gnn
from ..graph import load_graph, save_graph, split_nodes
from ..mesh import (
    filter_components,
    load_obj,
    marching_cubes,
    mesh_to_graph,
    reconstruct_stack,
    remesh_isotropic,
    save_obj,
    solve_laplace,
)
from ..phantom import (
    assign_node_labels,
    generate_phantom,
    load_phantom,
    sample_patches,
    save_phantom,
    synth_priors,
)
from ..report import (
    config_hash,
    evaluate_predictions,
    export_colored_mesh,
    label_palette,
    run_report,
)
from .config import ConfigError, RunConfig, fusion_config

logger = logging.getLogger("cortexmap")

STAGE_ORDER = ["phantom", "mesh", "train-encoder", "features", "train-gnn",
               "eval", "export"]

STAGE_DEPS = {
    "phantom": [],
    "mesh": ["phantom"],
    "train-encoder": ["phantom"],
    "features": ["phantom", "mesh", "train-encoder"],
    "train-gnn": ["mesh", "features"],
    "eval": ["mesh", "features", "train-gnn"],
    "export": ["mesh", "eval"],
}

MANIFEST = "manifest.json"


class InputError(RuntimeError):
    """An upstream artifact is missing or does not match its manifest."""


class NumericError(RuntimeError):
    """A solver or training run failed numerically."""


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stage_dir(cfg: RunConfig, stage: str) -> str:
    return os.path.join(cfg.output_dir, stage)


def _manifest_path(cfg: RunConfig, stage: str) -> str:
    return os.path.join(_stage_dir(cfg, stage), MANIFEST)


def _load_manifest(cfg: RunConfig, stage: str):
    path = _manifest_path(cfg, stage)
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        man = json.load(fh)
    if man.get("format") != "cortexmap-stage-v1" or man.get("stage") != stage:
        raise InputError(f"{path}: not a valid stage manifest")
    return man


def _list_outputs(stage_dir: str) -> Dict[str, str]:
    out = {}
    for root, _, files in os.walk(stage_dir):
        for name in sorted(files):
            if root == stage_dir and name == MANIFEST:
                continue
            full = os.path.join(root, name)
            out[os.path.relpath(full, stage_dir)] = file_hash(full)
    return out


def _collect_inputs(cfg: RunConfig, stage: str) -> Dict[str, str]:
    """Hashes of every upstream output, verified against disk."""
    inputs = {}
    for dep in STAGE_DEPS[stage]:
        man = _load_manifest(cfg, dep)
        if man is None:
            raise InputError(
                f"stage {stage!r} needs the output of {dep!r}, but "
                f"{_manifest_path(cfg, dep)} does not exist; run "
                f"'cortexmap {dep}' first")
        dep_dir = _stage_dir(cfg, dep)
        for rel, expected in man["outputs"].items():
            full = os.path.join(dep_dir, rel)
            if not os.path.exists(full):
                raise InputError(
                    f"artifact {full} is listed by the {dep!r} manifest "
                    f"(hash {expected[:16]}) but is missing on disk")
            found = file_hash(full)
            if found != expected:
                raise InputError(
                    f"artifact {full} does not match the {dep!r} manifest: "
                    f"expected {expected[:16]}, found {found[:16]}; "
                    f"rerun 'cortexmap {dep}'")
            inputs[f"{dep}/{rel}"] = expected
    return inputs


def _stage_config(cfg: RunConfig, stage: str) -> dict:
    if stage == "phantom":
        return cfg.to_json()["phantom"]
    if stage == "mesh":
        return {"mesh": asdict(cfg.mesh), "priors": asdict(cfg.priors)}
    if stage == "train-encoder":
        return asdict(cfg.encoder)
    if stage == "features":
        return {"patch_size": cfg.encoder.config.patch_size}
    if stage == "train-gnn":
        return {"gnn": asdict(cfg.gnn), "priors": asdict(cfg.priors)}
    if stage in ("eval", "export"):
        return {}
    raise ConfigError(f"unknown stage {stage!r}")


def run_stage(cfg: RunConfig, stage: str, build: Callable[[str], None],
              force: bool = False) -> bool:
    """Run one stage unless its manifest shows nothing changed.

    Returns True if the stage actually ran.
    """
    inputs = _collect_inputs(cfg, stage)
    chash = config_hash(_stage_config(cfg, stage))
    stage_dir = _stage_dir(cfg, stage)
    man = _load_manifest(cfg, stage)
    if man is not None and not force:
        if (man["config_hash"] == chash and man["inputs"] == inputs):
            stale = [rel for rel, h in man["outputs"].items()
                     if not os.path.exists(os.path.join(stage_dir, rel))
                     or file_hash(os.path.join(stage_dir, rel)) != h]
            if not stale:
                logger.info("%s: up to date, skipping", stage)
                return False
            logger.info("%s: outputs %s stale, rebuilding", stage, stale[:3])
        else:
            logger.info("%s: configuration or inputs changed, rebuilding", stage)
    os.makedirs(stage_dir, exist_ok=True)
    logger.info("%s: running", stage)
    build(stage_dir)
    manifest = {
        "format": "cortexmap-stage-v1",
        "stage": stage,
        "config_hash": chash,
        "inputs": inputs,
        "outputs": _list_outputs(stage_dir),
    }
    with open(_manifest_path(cfg, stage), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    logger.info("%s: done (%d output files)", stage, len(manifest["outputs"]))
    return True


# --- model (de)serialization on top of the checkpoint container ------------

def state_dict(model) -> Dict[str, np.ndarray]:
    state = {name: p.data for name, p in model.params()}
    for name, buf in model.buffers():
        state[f"buffer:{name}"] = buf
    return state


def load_state(model, params: Dict[str, np.ndarray]):
    for name, p in model.params():
        if name not in params:
            raise InputError(f"checkpoint is missing parameter {name!r}")
        p.data[...] = params[name].reshape(p.data.shape)
    for name, buf in model.buffers():
        key = f"buffer:{name}"
        if key not in params:
            raise InputError(f"checkpoint is missing buffer {name!r}")
        buf[...] = params[key].reshape(buf.shape)


# --- individual stages -----------------------------------------------------

def stage_phantom(cfg: RunConfig, stage_dir: str):
    dataset = generate_phantom(cfg.phantom)
    save_phantom(os.path.join(stage_dir, "dataset"), dataset)


def _phantom_dataset(cfg: RunConfig):
    return load_phantom(os.path.join(_stage_dir(cfg, "phantom"), "dataset"))


def stage_mesh(cfg: RunConfig, stage_dir: str):
    dataset = _phantom_dataset(cfg)
    mp = cfg.mesh
    volume = reconstruct_stack(dataset.label_maps, dataset.transforms,
                               dataset.spacing)
    field = solve_laplace(volume, tol=mp.laplace_tol,
                          max_iter=mp.laplace_max_iter)
    if not field.converged:
        raise NumericError(
            f"Laplace solve did not reach tol {mp.laplace_tol:g} in "
            f"{mp.laplace_max_iter} iterations (residual {field.residual:.3g})")
    mesh = marching_cubes(field.values, iso=0.5, spacing=volume.spacing)
    mesh, n_components = filter_components(
        mesh, min_vertices=mp.min_component_vertices)
    logger.info("mesh: %d components kept", n_components)
    if mesh.n_vertices == 0:
        raise NumericError("no mesh component survived filtering; the "
                           "midsurface is empty")
    mesh = remesh_isotropic(mesh, target_edge=mp.target_edge_um,
                            iterations=mp.remesh_iterations)
    graph, dropped = mesh_to_graph(mesh, volume)
    if dropped:
        logger.info("mesh: dropped %d vertices outside the stack", dropped)
    assign_node_labels(dataset, graph)
    period = mp.test_section_period
    split = {k: ("test" if k % period == period // 2 else "train")
             for k in range(cfg.phantom.n_sections)}
    split_nodes(graph, split)
    synth_priors(dataset, graph, blur_radius=cfg.priors.blur_radius,
                 noise_std=cfg.priors.noise_std, seed=cfg.priors.seed)
    save_obj(os.path.join(stage_dir, "midsurface.obj"), mesh)
    save_graph(os.path.join(stage_dir, "graph.bin"), graph)
    # vertex index of each graph node, for painting predictions on the mesh
    keep = np.flatnonzero(
        (np.rint(mesh.vertices[:, 2] / volume.spacing[2]).astype(int) >= 0)
        & (np.rint(mesh.vertices[:, 2] / volume.spacing[2]).astype(int)
           < volume.labels.shape[2]))
    np.save(os.path.join(stage_dir, "node_vertices.npy"), keep)


def stage_train_encoder(cfg: RunConfig, stage_dir: str):
    dataset = _phantom_dataset(cfg)
    ep = cfg.encoder
    rng = np.random.default_rng(ep.schedule.seed)
    patches, labels = sample_patches(dataset, per_class=ep.patches_per_class,
                                     patch_size=ep.config.patch_size, rng=rng)
    result = train_encoder(patches, labels, ep.config, ep.schedule)
    if result.loss_curve and not math.isfinite(result.loss_curve[-1]):
        raise NumericError("contrastive training diverged (non-finite loss)")
    meta = {"encoder_config": asdict(ep.config),
            "loss_curve": [float(v) for v in result.loss_curve]}
    save_checkpoint(os.path.join(stage_dir, "encoder.ckpt"),
                    state_dict(result.f), meta)


def stage_features(cfg: RunConfig, stage_dir: str):
    dataset = _phantom_dataset(cfg)
    graph = load_graph(os.path.join(_stage_dir(cfg, "mesh"), "graph.bin"))
    ckpt_path = os.path.join(_stage_dir(cfg, "train-encoder"), "encoder.ckpt")
    params, meta = load_checkpoint(ckpt_path)
    from ..encoder import EncoderConfig
    enc_cfg = EncoderConfig(**meta["encoder_config"])
    f, _ = build_encoder(enc_cfg)
    load_state(f, params)
    feats, valid = embed_nodes(f, dataset.sections_dict(), graph.section_ids,
                               graph.coords, enc_cfg.patch_size)
    finite = np.isfinite(feats[valid])
    if valid.any() and not finite.all():
        raise NumericError("encoder produced non-finite node features")
    save_features(os.path.join(stage_dir, "features.bin"), feats, valid,
                  encoder_hash=file_hash(ckpt_path)[:16])


def _graph_with_features(cfg: RunConfig):
    graph = load_graph(os.path.join(_stage_dir(cfg, "mesh"), "graph.bin"))
    feats, valid, _ = load_features(
        os.path.join(_stage_dir(cfg, "features"), "features.bin"))
    if feats.shape[0] != graph.n_nodes:
        raise InputError(f"feature file has {feats.shape[0]} rows for a "
                         f"graph with {graph.n_nodes} nodes")
    graph.features["cy"] = feats
    graph.feature_valid = valid
    return graph


def stage_train_gnn(cfg: RunConfig, stage_dir: str):
    graph = _graph_with_features(cfg)
    fus = fusion_config(cfg)
    result = train_gnn(graph, cfg.gnn.config, cfg.gnn.schedule,
                       fusion_config=fus)
    if result.history and not math.isfinite(result.history[-1]["loss"]):
        raise NumericError("node-classifier training diverged (non-finite loss)")
    meta = {"gnn_config": asdict(cfg.gnn.config),
            "fusion": asdict(fus) if fus is not None else None,
            "history": result.history}
    save_checkpoint(os.path.join(stage_dir, "gnn.ckpt"),
                    state_dict(result.model), meta)


def _load_gnn(cfg: RunConfig, graph):
    params, meta = load_checkpoint(
        os.path.join(_stage_dir(cfg, "train-gnn"), "gnn.ckpt"))
    gnn_cfg = GnnConfig(**meta["gnn_config"])
    fus = (PriorFusionConfig(**meta["fusion"])
           if meta.get("fusion") is not None else None)
    model = build_classifier(graph, gnn_cfg, fus)
    load_state(model, params)
    return model, meta


def stage_eval(cfg: RunConfig, stage_dir: str):
    graph = _graph_with_features(cfg)
    model, meta = _load_gnn(cfg, graph)
    logits = predict_logits(model, graph)
    pred = logits.argmax(axis=1).astype(np.int32)
    np.save(os.path.join(stage_dir, "predictions.npy"), pred)

    evals = {}
    use_cy = model.fusion is None or model.fusion.config.use_cy
    for split in ("train", "test"):
        mask = graph.split_mask(split) & (graph.labels >= 0)
        if use_cy and graph.feature_valid is not None:
            mask &= graph.feature_valid
        if not mask.any():
            continue
        evals[split] = evaluate_predictions(graph.labels[mask], pred[mask],
                                            n_classes=logits.shape[1],
                                            split=split)
    name = cfg.gnn.config.architecture
    conf = cfg.to_json()
    conf.pop("output_dir")  # identical runs in different places agree
    run_report({name: {"seed": cfg.gnn.schedule.seed,
                       "history": meta["history"], "evals": evals}},
               config=conf,
               path=os.path.join(stage_dir, "report.json"))
    for split, res in evals.items():
        logger.info("eval: %s macro-F1 %.4f over %d nodes",
                    split, res.macro_f1, res.n_samples)


def stage_export(cfg: RunConfig, stage_dir: str):
    mesh = load_obj(os.path.join(_stage_dir(cfg, "mesh"), "midsurface.obj"))
    graph = load_graph(os.path.join(_stage_dir(cfg, "mesh"), "graph.bin"))
    node_vertices = np.load(os.path.join(_stage_dir(cfg, "mesh"),
                                         "node_vertices.npy"))
    pred = np.load(os.path.join(_stage_dir(cfg, "eval"), "predictions.npy"))
    if pred.shape[0] != graph.n_nodes:
        raise InputError(f"prediction dump has {pred.shape[0]} entries for "
                         f"{graph.n_nodes} nodes")
    palette = label_palette(cfg.phantom.n_areas)
    for name, node_labels in (("annotations", graph.labels), ("predictions", pred)):
        vertex_labels = np.full(mesh.n_vertices, -1, dtype=np.int64)
        vertex_labels[node_vertices] = node_labels
        export_colored_mesh(os.path.join(stage_dir, f"{name}.ply"),
                            mesh, vertex_labels, palette=palette)


STAGE_FUNCS = {
    "phantom": stage_phantom,
    "mesh": stage_mesh,
    "train-encoder": stage_train_encoder,
    "features": stage_features,
    "train-gnn": stage_train_gnn,
    "eval": stage_eval,
    "export": stage_export,
}


def run_stages(cfg: RunConfig, stages: List[str], force: bool = False):
    for stage in stages:
        run_stage(cfg, stage,
                  lambda d, s=stage: STAGE_FUNCS[s](cfg, d), force=force)
