"""Declarative run configuration for the pipeline."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import yaml

from ..encoder import EncoderConfig, EncoderSchedule
from ..gnn import GnnConfig, GnnSchedule, PriorFusionConfig
from ..phantom import PhantomConfig


class ConfigError(ValueError):
    pass


@dataclass
class MeshParams:
    laplace_tol: float = 1e-4
    laplace_max_iter: int = 3000
    target_edge_um: float = 1.8
    remesh_iterations: int = 4
    min_component_vertices: int = 50
    test_section_period: int = 5  # every n-th section becomes the test split

    def __post_init__(self):
        if self.target_edge_um <= 0:
            raise ConfigError("target_edge_um must be positive")
        if self.test_section_period < 2:
            raise ConfigError("test_section_period must be at least 2")


@dataclass
class PriorParams:
    use_pm: bool = False
    use_co: bool = False
    blur_radius: float = 6.0
    noise_std: float = 0.1
    seed: int = 0


@dataclass
class EncoderParams:
    config: EncoderConfig = field(default_factory=lambda: EncoderConfig(
        architecture="res", patch_size=24))
    schedule: EncoderSchedule = field(default_factory=lambda: EncoderSchedule(
        epochs=40, batch_size=64, optimizer="sgd"))
    patches_per_class: int = 400


@dataclass
class GnnParams:
    config: GnnConfig = field(default_factory=lambda: GnnConfig(
        architecture="sage", num_layers=3, hidden=256))
    schedule: GnnSchedule = field(default_factory=lambda: GnnSchedule(
        epochs=10, batch_size=256, base_lr=0.05, reference_batch=256,
        steps_per_epoch=40))


@dataclass
class RunConfig:
    output_dir: str = "run"
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    mesh: MeshParams = field(default_factory=MeshParams)
    encoder: EncoderParams = field(default_factory=EncoderParams)
    gnn: GnnParams = field(default_factory=GnnParams)
    priors: PriorParams = field(default_factory=PriorParams)

    def to_json(self) -> dict:
        obj = asdict(self)
        obj["phantom"]["textures"] = [
            {"densities": list(t.densities), "widths": list(t.widths),
             "radius": t.radius} for t in self.phantom.textures]
        return obj


_SECTION_TYPES = {
    "phantom": PhantomConfig,
    "mesh": MeshParams,
    "priors": PriorParams,
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    allowed = {f.name for f in cls.__dataclass_fields__.values()}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_run_config(path=None, data: Optional[dict] = None) -> RunConfig:
    """Parse and fully validate a YAML run configuration."""
    if data is None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError("run config must be a mapping")
    known = {"output_dir", "phantom", "mesh", "priors", "encoder", "gnn"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    kwargs = {}
    if "output_dir" in data:
        if not isinstance(data["output_dir"], str) or not data["output_dir"]:
            raise ConfigError("output_dir must be a nonempty string")
        kwargs["output_dir"] = data["output_dir"]
    for key, cls in _SECTION_TYPES.items():
        if key in data:
            kwargs[key] = _build(cls, data[key], key)
    if "encoder" in data:
        enc = dict(data["encoder"])
        per_class = enc.pop("patches_per_class", 400)
        cfg_keys = {f.name for f in EncoderConfig.__dataclass_fields__.values()}
        cfg_part = {k: v for k, v in enc.items() if k in cfg_keys}
        sched_part = {k: v for k, v in enc.items() if k not in cfg_keys}
        kwargs["encoder"] = EncoderParams(
            config=_build(EncoderConfig, cfg_part, "encoder"),
            schedule=_build(EncoderSchedule, sched_part, "encoder"),
            patches_per_class=int(per_class))
    if "gnn" in data:
        g = dict(data["gnn"])
        cfg_keys = {f.name for f in GnnConfig.__dataclass_fields__.values()}
        cfg_part = {k: v for k, v in g.items() if k in cfg_keys}
        sched_part = {k: v for k, v in g.items() if k not in cfg_keys}
        kwargs["gnn"] = GnnParams(config=_build(GnnConfig, cfg_part, "gnn"),
                                  schedule=_build(GnnSchedule, sched_part, "gnn"))
    cfg = RunConfig(**kwargs)
    if cfg.gnn.config.n_classes != cfg.phantom.n_areas:
        cfg.gnn.config.n_classes = cfg.phantom.n_areas
    return cfg


def fusion_config(cfg: RunConfig) -> Optional[PriorFusionConfig]:
    if not (cfg.priors.use_pm or cfg.priors.use_co):
        return None
    return PriorFusionConfig(use_cy=True, use_pm=cfg.priors.use_pm,
                             use_co=cfg.priors.use_co)
