"""Node-classification training loop and full-graph evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..autodiff import SGDNesterov, Tape, Tensor, backward, exp, gather, log, tmean, tsum
from ..graph import CortexGraph, balanced_node_stream
from ..report.metrics import macro_f1
from .batching import sample_batch
from .layers import PriorFusion, PriorFusionConfig
from .models import GnnConfig, NodeClassifier

logger = logging.getLogger(__name__)


@dataclass
class GnnSchedule:
    """Desk-scale defaults; the learning rate keeps the batch-scaling rule
    lr = base_lr * N / reference_batch so paper-scale schedules transfer
    (e.g. N = 16384 -> 0.004)."""

    epochs: int = 30
    batch_size: int = 256
    base_lr: float = 0.001
    reference_batch: int = 4096
    momentum: float = 0.9
    steps_per_epoch: Optional[int] = None
    seed: int = 0

    def learning_rate(self) -> float:
        return self.base_lr * self.batch_size / self.reference_batch


@dataclass
class GnnTrainResult:
    model: NodeClassifier
    history: List[Dict[str, float]] = field(default_factory=list)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy from raw logits, stabilized by a per-row shift."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"{labels.shape} labels for {n} logit rows")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError("label outside the class range")
    shift = logits.data.max(axis=1, keepdims=True)
    z = logits - Tensor(shift)
    lse = log(tsum(exp(z), axis=1, keepdims=True))
    onehot = np.zeros((n, c), dtype=logits.dtype)
    onehot[np.arange(n), labels] = 1
    picked = tsum(z * Tensor(onehot), axis=1, keepdims=True)
    return tmean(lse - picked)


def _gather_sources(graph: CortexGraph, nodes: np.ndarray, model: NodeClassifier):
    """Raw input rows for the given nodes, one entry per enabled source.

    Nodes whose texture feature is marked invalid contribute zero rows; such
    nodes never appear as batch centers (the balanced stream skips them).
    """
    fus = model.fusion
    use_cy = fus is None or fus.config.use_cy
    use_pm = fus is not None and fus.config.use_pm
    use_co = fus is not None and fus.config.use_co

    def pull(name):
        if name not in graph.features:
            raise ValueError(f"graph has no {name!r} node features attached")
        return graph.features[name][nodes]

    h_cy = h_pm = h_co = None
    if use_cy:
        x = np.array(pull("cy"))
        if graph.feature_valid is not None:
            x[~graph.feature_valid[nodes]] = 0.0
        h_cy = Tensor(x)
    if use_pm:
        h_pm = Tensor(pull("pm"))
    if use_co:
        h_co = Tensor(pull("co"))
    return h_cy, h_pm, h_co


def build_classifier(graph: CortexGraph, config: GnnConfig,
                     fusion_config: Optional[PriorFusionConfig] = None):
    """Instantiate a classifier whose input widths match the graph's features."""
    if fusion_config is None:
        if "cy" not in graph.features:
            raise ValueError("graph has no 'cy' node features attached")
        return NodeClassifier(config, in_dim=graph.features["cy"].shape[1])
    dims = {}
    for flag, name in (("use_cy", "cy"), ("use_pm", "pm"), ("use_co", "co")):
        if getattr(fusion_config, flag):
            if name not in graph.features:
                raise ValueError(f"fusion enables {name!r} but the graph "
                                 f"has no such features")
            dims[name] = graph.features[name].shape[1]
    fusion = PriorFusion(fusion_config,
                         cy_dim=dims.get("cy", 0),
                         pm_dim=dims.get("pm", 0),
                         co_dim=dims.get("co", 3),
                         rng=np.random.default_rng(config.seed + 1))
    return NodeClassifier(config, in_dim=0, fusion=fusion)


def predict_logits(model: NodeClassifier, graph: CortexGraph) -> np.ndarray:
    """Eval-mode logits for every node via one full-graph forward pass.

    Valid because a K-layer model's center logits on the closed K-hop
    subgraph coincide with full-graph logits (locality invariant).
    """
    nodes = np.arange(graph.n_nodes)
    h_cy, h_pm, h_co = _gather_sources(graph, nodes, model)
    fused = model.fuse(h_cy, h_pm, h_co, train=False)
    edges = graph.edges if model.config.architecture != "mlp" else np.empty((0, 2))
    return model.forward_features(fused, edges, train=False).data


def evaluate(model: NodeClassifier, graph: CortexGraph, split: str = "test",
             logits: Optional[np.ndarray] = None,
             node_mask: Optional[np.ndarray] = None) -> float:
    """Macro-F1 over the labeled, feature-valid nodes of a split.

    `node_mask` restricts scoring further (e.g. away from area borders).
    """
    if logits is None:
        logits = predict_logits(model, graph)
    mask = graph.split_mask(split) & (graph.labels >= 0)
    if node_mask is not None:
        mask &= node_mask
    if graph.feature_valid is not None and (
            model.fusion is None or model.fusion.config.use_cy):
        mask &= graph.feature_valid
    if not mask.any():
        raise ValueError(f"split {split!r} has no eligible labeled nodes")
    pred = logits[mask].argmax(axis=1)
    return macro_f1(graph.labels[mask], pred, n_classes=logits.shape[1])


def train_gnn(graph: CortexGraph, config: GnnConfig, schedule: GnnSchedule,
              fusion_config: Optional[PriorFusionConfig] = None) -> GnnTrainResult:
    """Train a node classifier on the graph's train split.

    Minibatch centers come from the class-balanced stream; each center gets
    its own subgraph (SAGE: fixed fanout; GAT: full neighborhoods; MLP: the
    node alone) and the batch is the disjoint union.
    """
    model = build_classifier(graph, config, fusion_config)
    rng = np.random.default_rng(schedule.seed)
    use_cy = model.fusion is None or model.fusion.config.use_cy
    stream = balanced_node_stream(graph, "train",
                                  rng=np.random.default_rng(schedule.seed + 1),
                                  exclude_invalid_features=use_cy)
    n_train = int(np.count_nonzero(graph.split_mask("train") & (graph.labels >= 0)))
    steps = schedule.steps_per_epoch or max(1, math.ceil(n_train / schedule.batch_size))
    opt = SGDNesterov([p for _, p in model.params()],
                      lr=schedule.learning_rate(), momentum=schedule.momentum)
    k = config.receptive_hops
    fanout = config.fanout if config.architecture == "sage" else None

    result = GnnTrainResult(model=model)
    for epoch in range(schedule.epochs):
        losses = []
        for _ in range(steps):
            centers = np.fromiter((next(stream) for _ in range(schedule.batch_size)),
                                  dtype=np.int64, count=schedule.batch_size)
            batch = sample_batch(graph, centers, k, fanout=fanout, rng=rng)
            with Tape() as tape:
                h_cy, h_pm, h_co = _gather_sources(graph, batch.nodes, model)
                fused = model.fuse(h_cy, h_pm, h_co, train=True)
                edges = (batch.edges_local if config.architecture != "mlp"
                         else np.empty((0, 2)))
                logits = model.forward_features(fused, edges, train=True)
                center_logits = gather(logits, batch.centers_local)
                loss = cross_entropy(center_logits, graph.labels[centers])
                backward(tape, loss)
            opt.step()
            opt.zero_grad()
            losses.append(float(loss.data))
        entry = {"epoch": epoch, "loss": float(np.mean(losses)),
                 "train_macro_f1": evaluate(model, graph, "train")}
        result.history.append(entry)
        logger.info("epoch %d: loss %.4f train macro-F1 %.4f",
                 epoch, entry["loss"], entry["train_macro_f1"])
    return result
