"""Node classifiers: GraphSAGE / GAT stacks and the MLP baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..autodiff import (
    BatchNorm,
    Dropout,
    Layer,
    Linear,
    ReLU,
    Tensor,
    relu,
)
from ..graph import Subgraph
from .layers import GatLayer, PriorFusion, PriorFusionConfig, SageLayer


@dataclass
class GnnConfig:
    architecture: str = "sage"  # "sage" | "gat" | "mlp"
    num_layers: int = 3
    residual: bool = False
    hidden: int = 256
    heads: int = 8
    attention_dropout: float = 0.5
    mlp_input_dropout: float = 0.5
    mlp_hidden_dropout: float = 0.25
    n_classes: int = 2
    fanout: int = 3  # SAGE fixed-size neighborhood sampling
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ("sage", "gat", "mlp"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.architecture == "gat" and self.hidden % self.heads != 0:
            raise ValueError(
                f"hidden width {self.hidden} not divisible by {self.heads} heads")

    @property
    def receptive_hops(self) -> int:
        return 0 if self.architecture == "mlp" else self.num_layers


def _make_conv(config: GnnConfig, in_dim: int, rng, dtype):
    if config.architecture == "sage":
        return SageLayer(in_dim, config.hidden, rng=rng, dtype=dtype)
    if config.architecture == "gat":
        return GatLayer(in_dim, heads=config.heads,
                        head_dim=config.hidden // config.heads,
                        attention_dropout=config.attention_dropout,
                        rng=rng, dtype=dtype)
    return Linear(in_dim, config.hidden, rng=rng, dtype=dtype)


class _Block(Layer):
    """One hidden block.

    Plain: conv -> BN -> ReLU. Residual: x + conv(relu(bn(x))), with a
    linear projection shortcut when the input width differs.
    """

    def __init__(self, config: GnnConfig, in_dim: int, rng, dtype):
        self.config = config
        self.residual = config.residual
        self.conv = _make_conv(config, in_dim, rng, dtype)
        self.bn = BatchNorm(in_dim if self.residual else config.hidden, dtype=dtype)
        self.shortcut = None
        if self.residual and in_dim != config.hidden:
            self.shortcut = Linear(in_dim, config.hidden, rng=rng, dtype=dtype)
        if config.architecture == "mlp":
            self.drop = Dropout(config.mlp_hidden_dropout,
                                rng=np.random.default_rng(rng.integers(2**32)))
        else:
            self.drop = None

    def params(self):
        named = [("conv", self.conv), ("bn", self.bn)]
        if self.shortcut is not None:
            named.append(("shortcut", self.shortcut))
        out = []
        for prefix, mod in named:
            out.extend((f"{prefix}.{n}", p) for n, p in mod.params())
        return out

    def buffers(self):
        return [(f"bn.{n}", b) for n, b in self.bn.buffers()]

    def _apply_conv(self, x, edges, train):
        if isinstance(self.conv, Linear):
            return self.conv.forward(x, train=train)
        return self.conv.forward_graph(x, edges, train=train)

    def forward_graph(self, x: Tensor, edges: np.ndarray, train: bool = False) -> Tensor:
        if self.residual:
            h = relu(self.bn.forward(x, train=train))
            h = self._apply_conv(h, edges, train)
            skip = x if self.shortcut is None else self.shortcut.forward(x, train=train)
            out = skip + h
        else:
            h = self._apply_conv(x, edges, train)
            out = relu(self.bn.forward(h, train=train))
        if self.drop is not None:
            out = self.drop.forward(out, train=train)
        return out


class NodeClassifier(Layer):
    """Stacked blocks over a (sub)graph plus a linear class head.

    Optionally fuses anatomical priors into the input features.
    """

    def __init__(self, config: GnnConfig, in_dim: int,
                 fusion: Optional[PriorFusion] = None, dtype=np.float32):
        rng = np.random.default_rng(config.seed)
        self.config = config
        self.fusion = fusion
        self.in_dim = fusion.out_dim if fusion is not None else in_dim
        self.input_drop = None
        if config.architecture == "mlp" and config.mlp_input_dropout > 0:
            self.input_drop = Dropout(config.mlp_input_dropout,
                                      rng=np.random.default_rng(rng.integers(2**32)))
        self.blocks = []
        d = self.in_dim
        for _ in range(config.num_layers):
            self.blocks.append(_Block(config, d, rng, dtype))
            d = config.hidden
        self.head = Linear(config.hidden, config.n_classes, rng=rng, dtype=dtype)

    def params(self):
        out = []
        if self.fusion is not None:
            out.extend((f"fusion.{n}", p) for n, p in self.fusion.params())
        for i, b in enumerate(self.blocks):
            out.extend((f"block{i}.{n}", p) for n, p in b.params())
        out.extend((f"head.{n}", p) for n, p in self.head.params())
        return out

    def buffers(self):
        out = []
        if self.fusion is not None:
            out.extend((f"fusion.{n}", b) for n, b in self.fusion.buffers())
        for i, b in enumerate(self.blocks):
            out.extend((f"block{i}.{n}", bb) for n, bb in b.buffers())
        return out

    def forward_features(self, x: Tensor, edges: np.ndarray,
                         train: bool = False) -> Tensor:
        """Logits for every node of the given (sub)graph."""
        if self.input_drop is not None:
            x = self.input_drop.forward(x, train=train)
        for block in self.blocks:
            x = block.forward_graph(x, edges, train=train)
        return self.head.forward(x, train=train)

    def fuse(self, h_cy, h_pm, h_co, train: bool = False) -> Tensor:
        if self.fusion is None:
            if h_cy is None:
                raise ValueError("model without fusion needs texture features")
            return h_cy
        return self.fusion.forward_sources(h_cy, h_pm, h_co, train=train)


def forward_classify(model: NodeClassifier, subgraph: Subgraph,
                     fused: Tensor, train: bool = False) -> Tensor:
    """Class log-scores for the subgraph's center node.

    `fused` holds one input row per subgraph node (local order).
    """
    need = model.config.receptive_hops
    if subgraph.k < need:
        raise ValueError(
            f"subgraph sampled to depth {subgraph.k} but a "
            f"{model.config.num_layers}-layer model needs depth {need}")
    if fused.shape[0] != subgraph.n_nodes:
        raise ValueError(
            f"{fused.shape[0]} feature rows for {subgraph.n_nodes} subgraph nodes")
    edges = subgraph.edges_local if model.config.architecture != "mlp" else np.empty((0, 2))
    logits = model.forward_features(fused, edges, train=train)
    from ..autodiff import gather

    return gather(logits, np.array([subgraph.center_local]))
