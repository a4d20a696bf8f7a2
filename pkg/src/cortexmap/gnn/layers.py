"""Message-passing layers and prior fusion, built on the autodiff core."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..autodiff import (
    BatchNorm,
    Layer,
    Linear,
    ReLU,
    Sequential,
    ShapeError,
    Tensor,
    dropout,
    gather,
    leaky_relu,
    exp,
    mul,
    relu,
    segment_sum,
    tsum,
)


def _directed_edges(edges: np.ndarray):
    """Undirected (E, 2) edge list -> directed (src, dst) arrays both ways."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    return src, dst


class SageLayer(Layer):
    """Mean-aggregation layer: W_self @ h_u + W_neigh @ mean of neighbors.

    Isolated nodes get a zero mean term, degenerating to a linear layer.
    """

    def __init__(self, in_dim, out_dim, rng: Optional[np.random.Generator] = None,
                 dtype=np.float32):
        self.in_dim, self.out_dim = in_dim, out_dim
        rng = rng or np.random.default_rng(0)
        scale = np.sqrt(2.0 / in_dim)
        self.w_self = Tensor(rng.normal(0, scale, (in_dim, out_dim)).astype(dtype),
                             requires_grad=True)
        self.w_neigh = Tensor(rng.normal(0, scale, (in_dim, out_dim)).astype(dtype),
                              requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True)

    def params(self):
        return [("w_self", self.w_self), ("w_neigh", self.w_neigh),
                ("bias", self.bias)]

    def forward_graph(self, x: Tensor, edges: np.ndarray, train: bool = False) -> Tensor:
        n = x.shape[0]
        if x.shape[1] != self.in_dim:
            raise ShapeError(f"sage layer expects {self.in_dim} features, got {x.shape[1]}")
        if len(edges):
            src, dst = _directed_edges(edges)
            summed = segment_sum(gather(x, src), dst, n)
            deg = np.bincount(dst, minlength=n).astype(x.dtype)
            inv_deg = np.where(deg > 0, 1.0 / np.maximum(deg, 1), 0.0)
            mean = mul(summed, Tensor(inv_deg[:, None]))
            out = (x @ self.w_self) + (mean @ self.w_neigh) + self.bias
        else:
            out = (x @ self.w_self) + self.bias
        return out


class GatLayer(Layer):
    """Multi-head attention layer; heads are concatenated.

    Attention is normalized over the neighborhood including a self-edge;
    dropout on attention coefficients applies in train mode only.
    """

    def __init__(self, in_dim, heads=8, head_dim=32, attention_dropout=0.5,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32,
                 leaky_alpha=0.2):
        self.in_dim = in_dim
        self.heads, self.head_dim = heads, head_dim
        self.out_dim = heads * head_dim
        self.attention_dropout = attention_dropout
        self.leaky_alpha = leaky_alpha
        rng = rng or np.random.default_rng(0)
        scale = np.sqrt(2.0 / in_dim)
        self.weight = Tensor(rng.normal(0, scale, (in_dim, self.out_dim)).astype(dtype),
                             requires_grad=True)
        a_scale = np.sqrt(1.0 / head_dim)
        self.att_dst = Tensor(rng.normal(0, a_scale, (heads, head_dim)).astype(dtype),
                              requires_grad=True)
        self.att_src = Tensor(rng.normal(0, a_scale, (heads, head_dim)).astype(dtype),
                              requires_grad=True)
        self.bias = Tensor(np.zeros(self.out_dim, dtype=dtype), requires_grad=True)
        self._rng = np.random.default_rng(rng.integers(2**32))

    def params(self):
        return [("weight", self.weight), ("att_dst", self.att_dst),
                ("att_src", self.att_src), ("bias", self.bias)]

    def forward_graph(self, x: Tensor, edges: np.ndarray, train: bool = False) -> Tensor:
        n = x.shape[0]
        if x.shape[1] != self.in_dim:
            raise ShapeError(f"gat layer expects {self.in_dim} features, got {x.shape[1]}")
        h, d = self.heads, self.head_dim
        if len(edges):
            src, dst = _directed_edges(edges)
            loop = np.arange(n)
            src = np.concatenate([src, loop])
            dst = np.concatenate([dst, loop])
        else:
            src = dst = np.arange(n)

        xw = (x @ self.weight).reshape(n, h, d)
        s_dst = tsum(xw * self.att_dst, axis=2)  # (n, h): center term
        s_src = tsum(xw * self.att_src, axis=2)  # (n, h): neighbor term
        scores = leaky_relu(gather(s_dst, dst) + gather(s_src, src),
                            alpha=self.leaky_alpha)  # (E, h)
        shift = np.full((n, h), -np.inf, dtype=scores.dtype)
        np.maximum.at(shift, dst, scores.data)
        scores = scores - Tensor(shift[dst])
        exps = exp(scores)
        denom = segment_sum(exps, dst, n)
        alpha = exps / gather(denom, dst)
        if train and self.attention_dropout > 0:
            alpha = dropout(alpha, self.attention_dropout, self._rng, train=True)
        msgs = mul(alpha.reshape(alpha.shape[0], h, 1), gather(xw, src))
        out = segment_sum(msgs, dst, n).reshape(n, h * d)
        return out + self.bias

    def attention_weights(self, x: Tensor, edges: np.ndarray):
        """Eval-mode attention coefficients: ((src, dst), alpha (E, heads))."""
        n = x.shape[0]
        h, d = self.heads, self.head_dim
        src, dst = _directed_edges(edges)
        loop = np.arange(n)
        src = np.concatenate([src, loop])
        dst = np.concatenate([dst, loop])
        xw = (x.data @ self.weight.data).reshape(n, h, d)
        s_dst = (xw * self.att_dst.data).sum(axis=2)
        s_src = (xw * self.att_src.data).sum(axis=2)
        sc = s_dst[dst] + s_src[src]
        sc = np.where(sc > 0, sc, self.leaky_alpha * sc)
        shift = np.full((n, h), -np.inf)
        np.maximum.at(shift, dst, sc)
        e = np.exp(sc - shift[dst])
        denom = np.zeros((n, h))
        np.add.at(denom, dst, e)
        return (src, dst), e / denom[dst]


@dataclass
class PriorFusionConfig:
    use_cy: bool = True
    use_pm: bool = False
    use_co: bool = False
    pm_dropout: float = 0.5
    co_noise_std: float = 0.05
    projection_width: int = 256

    def __post_init__(self):
        if not (self.use_cy or self.use_pm or self.use_co):
            raise ValueError("at least one input source must be enabled")


class PriorFusion(Layer):
    """Combine texture features with projected anatomical priors.

    Texture features pass through raw; probabilistic-map and coordinate
    priors each go through dropout / additive noise (train mode), then a
    fully connected projection with batch-norm and ReLU, and everything
    enabled is concatenated.
    """

    def __init__(self, config: PriorFusionConfig, cy_dim: int = 0,
                 pm_dim: int = 0, co_dim: int = 3,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        self.config = config
        self.cy_dim = cy_dim
        rng = rng or np.random.default_rng(0)
        w = config.projection_width
        self.pm_proj = None
        self.co_proj = None
        if config.use_pm:
            if pm_dim <= 0:
                raise ValueError("use_pm requires pm_dim > 0")
            self.pm_proj = Sequential([Linear(pm_dim, w, rng=rng, dtype=dtype),
                                       BatchNorm(w, dtype=dtype), ReLU()])
        if config.use_co:
            self.co_proj = Sequential([Linear(co_dim, w, rng=rng, dtype=dtype),
                                       BatchNorm(w, dtype=dtype), ReLU()])
        self._rng = np.random.default_rng(rng.integers(2**32))

    @property
    def out_dim(self):
        w = self.config.projection_width
        return ((self.cy_dim if self.config.use_cy else 0)
                + (w if self.config.use_pm else 0)
                + (w if self.config.use_co else 0))

    def params(self):
        out = []
        for prefix, mod in (("pm_proj", self.pm_proj), ("co_proj", self.co_proj)):
            if mod is not None:
                out.extend((f"{prefix}.{n}", p) for n, p in mod.params())
        return out

    def buffers(self):
        out = []
        for prefix, mod in (("pm_proj", self.pm_proj), ("co_proj", self.co_proj)):
            if mod is not None:
                out.extend((f"{prefix}.{n}", b) for n, b in mod.buffers())
        return out

    def forward_sources(self, h_cy: Optional[Tensor], h_pm: Optional[Tensor],
                        h_co: Optional[Tensor], train: bool = False) -> Tensor:
        from ..autodiff import concat

        parts = []
        if self.config.use_cy:
            if h_cy is None:
                raise ValueError("fusion has CY enabled but no texture features given")
            _reject_nan(h_cy, "cy")
            parts.append(h_cy)
        if self.config.use_pm:
            if h_pm is None:
                raise ValueError("fusion has PM enabled but no probabilistic maps given")
            _reject_nan(h_pm, "pm")
            p = dropout(h_pm, self.config.pm_dropout, self._rng, train)
            parts.append(self.pm_proj.forward(p, train=train))
        if self.config.use_co:
            if h_co is None:
                raise ValueError("fusion has CO enabled but no canonical coordinates given")
            _reject_nan(h_co, "co")
            c = h_co
            if train and self.config.co_noise_std > 0:
                noise = self._rng.normal(0, self.config.co_noise_std, c.shape)
                c = c + Tensor(noise.astype(c.dtype))
            parts.append(self.co_proj.forward(c, train=train))
        return parts[0] if len(parts) == 1 else concat(parts, axis=1)


def _reject_nan(t: Tensor, name: str):
    bad = np.flatnonzero(~np.isfinite(t.data).all(axis=tuple(range(1, t.ndim))))
    if bad.size:
        raise ValueError(f"fusion source {name!r} missing on node rows {bad[:5].tolist()}")
