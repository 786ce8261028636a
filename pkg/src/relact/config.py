"""Run configuration: defaults, JSON file loading, flag overrides,
validation, and the model-section digest embedded in checkpoints.

Precedence is overrides > file > defaults. The digest covers exactly
the fields that must match between a checkpoint and the evaluating
process (class counts, dimensions, wiring flags).
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


@dataclass
class ModelConfig:
    n_obj_classes: int = 6
    n_predicates: int = 7
    n_actions: int = 5
    human_class: int = 0
    d: int = 64
    heads: int = 4
    ffn_mult: int = 4
    enc_layers: int = 6
    rel_dec_layers: int = 6
    r2i_layers: int = 3
    feat_transfer_layers: int = 2
    query_transfer_layers: int = 2
    hoi_dec_layers: int = 6
    n_rel_queries: int = 100
    n_hoi_queries: int = 100
    dropout: float = 0.1
    pos_mode: str = "per_layer"
    classifier_init: str = "teacher"
    vl_mode: str = "pool"
    seed: int = 0
    teacher_seed: int = 1234
    # ablation wiring flags
    no_hss: bool = False
    hss_mode: str = "teacher"
    no_vl: bool = False
    no_fetr: bool = False
    no_qutr: bool = False
    no_r2itr: bool = False
    rel_q: bool = False

    def validate(self):
        if self.d % 2 or self.d % self.heads:
            raise ValueError(f"model width {self.d} must be even and divisible by heads")
        if self.pos_mode not in ("per_layer", "at_input"):
            raise ValueError(f"unknown pos_mode {self.pos_mode!r}")
        if self.classifier_init not in ("random", "teacher"):
            raise ValueError(f"unknown classifier_init {self.classifier_init!r}")
        if self.vl_mode not in ("cls", "pool"):
            raise ValueError(f"unknown vl_mode {self.vl_mode!r}")
        if self.hss_mode not in ("teacher", "discrete", "alt"):
            raise ValueError(f"unknown hss_mode {self.hss_mode!r}")
        if self.n_obj_classes < 2:
            raise ValueError("need a human class and at least one other object class")
        if not 0 <= self.human_class < self.n_obj_classes:
            raise ValueError("human_class out of range")

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class GenSection:
    image_size: int = 64
    objects_min: int = 2
    objects_max: int = 5
    relations_max: int = 6
    skew: float = 1.5
    ensure_human: bool = True
    train: int = 100
    val: int = 20
    test: int = 40


@dataclass
class LossSection:
    alpha_box: float = 1.0
    alpha_cls: float = 2.0
    alpha_rel: float = 4.0
    lambda_seg: float = 2.0
    lambda_align: float = 4.0
    background_weight: float = 0.1


@dataclass
class TrainSection:
    stage1_epochs: int = 20
    stage2_epochs: int = 20
    batch_size: int = 2
    lr: float = 1e-4
    backbone_lr_scale: float = 0.1
    sgg_stage2_lr_scale: float = 0.1
    classifier_lr_scale: float = 0.1
    weight_decay: float = 1e-4
    checkpoint_every: int = 1
    hoi_stop_gradient: bool = False
    freeze_sgg: bool = False


@dataclass
class EvalSection:
    ks: list = field(default_factory=lambda: [20, 50, 100])
    iou_threshold: float = 0.5
    rare_threshold: int = 10
    scenario: int = 1
    ap_interpolation: str = "all_point"


@dataclass
class DataSection:
    train: str = ""
    val: str = ""
    test: str = ""


@dataclass
class RunConfig:
    seed: int = None
    out_dir: str = "runs/out"
    model: ModelConfig = field(default_factory=ModelConfig)
    gen: GenSection = field(default_factory=GenSection)
    loss: LossSection = field(default_factory=LossSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    data: DataSection = field(default_factory=DataSection)

    def validate(self, require_data: tuple = ()) -> list:
        """Fail fast on bad values; returns warning strings."""
        warnings = []
        if self.seed is None:
            raise ValueError("config must set a seed")
        self.model.validate()
        if self.gen.objects_min < 1 or self.gen.objects_max < self.gen.objects_min:
            raise ValueError("gen.objects range invalid")
        if self.gen.skew < 0:
            raise ValueError("gen.skew must be >= 0")
        if self.gen.image_size % 8:
            raise ValueError("gen.image_size must be divisible by the stride (8)")
        if self.eval.scenario not in (1, 2):
            raise ValueError("eval.scenario must be 1 or 2")
        if self.eval.ap_interpolation not in ("all_point", "11_point"):
            raise ValueError(f"unknown ap interpolation {self.eval.ap_interpolation!r}")
        if any(k <= 0 for k in self.eval.ks):
            raise ValueError("eval.ks must be positive")
        for name in require_data:
            path = getattr(self.data, name)
            if not path:
                raise ValueError(f"data.{name} not configured")
            if not Path(path).exists():
                raise ValueError(f"data.{name}: no such file {path}")
        if self.model.no_vl:
            warnings.append("vl_mode is irrelevant while no_vl is set")
        return warnings


_SECTIONS = {
    "model": ModelConfig,
    "gen": GenSection,
    "loss": LossSection,
    "train": TrainSection,
    "eval": EvalSection,
    "data": DataSection,
}


def config_from_dict(raw: dict) -> RunConfig:
    cfg = RunConfig()
    raw = copy.deepcopy(raw)
    for key, value in raw.items():
        if key in _SECTIONS:
            section = getattr(cfg, key)
            for k, v in value.items():
                if not hasattr(section, k):
                    raise ValueError(f"unknown config key {key}.{k}")
                setattr(section, k, v)
        elif hasattr(cfg, key):
            setattr(cfg, key, value)
        else:
            raise ValueError(f"unknown config key {key}")
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)


def load_config(path) -> RunConfig:
    with open(path) as f:
        return config_from_dict(json.load(f))


def apply_overrides(cfg: RunConfig, pairs) -> RunConfig:
    """Apply key.path=value overrides; values parse as JSON, else string."""
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override {pair!r} is not key=value")
        key, _, value = pair.partition("=")
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass
        parts = key.split(".")
        target = cfg
        for p in parts[:-1]:
            if not hasattr(target, p):
                raise ValueError(f"unknown config section {key!r}")
            target = getattr(target, p)
        if not hasattr(target, parts[-1]):
            raise ValueError(f"unknown config key {key!r}")
        setattr(target, parts[-1], value)
    return cfg
